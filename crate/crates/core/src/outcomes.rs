//! Access outcomes of a coalition.
//!
//! Given the cooperative sensing orders, each member ends a slot on some
//! channel (the first idle one in its order) or idle. A joint outcome is
//! feasible when no channel has to be both idle (selected by someone) and busy
//! (skipped by someone). Its probability is the product of `theta` over the
//! selected channels and `1 - theta` over the skipped ones. The alphabet
//! includes an explicit idle symbol so that the family covers every slot
//! realization and its probabilities sum to one.

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::coopsort::CoalitionPlan;
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Maximum shared channels per coalition (bitmask width).
pub const MAX_SHARED_CHANNELS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTuple<T> {
    /// Selected channel per member position, `None` when idle.
    pub assignment: Vec<Option<usize>>,
    /// 0-based rank of the selected channel in the member's own order.
    pub ranks: Vec<Option<usize>>,
    pub prob: T,
    /// Transmitting member positions grouped by rank, ascending rank.
    pub rank_groups: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution<T> {
    /// Ascending user ids; tuple positions index into this.
    pub coalition: Vec<usize>,
    pub tuples: Vec<OutcomeTuple<T>>,
}

impl<T: Num + Copy> OutcomeDistribution<T> {
    pub fn total_mass(&self) -> T {
        self.tuples.iter().fold(T::zero(), |acc, t| acc + t.prob)
    }

    /// `marginals[pos][j]`: probability that member `pos` transmits on
    /// `shared_channels[j]`.
    pub fn transmit_marginals(&self, plan: &CoalitionPlan) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); plan.n_shared()]; self.coalition.len()];
        for tuple in &self.tuples {
            for (pos, ch) in tuple.assignment.iter().enumerate() {
                if let Some(ch) = ch {
                    let j = plan
                        .shared_channels
                        .binary_search(ch)
                        .expect("assigned channel is shared");
                    out[pos][j] = out[pos][j] + tuple.prob;
                }
            }
        }
        out
    }
}

/// `(K_S + 1)^|S|`, the size of the raw assignment space.
pub fn assignment_space(plan: &CoalitionPlan) -> f64 {
    ((plan.n_shared() + 1) as f64).powi(plan.members.len() as i32)
}

/// Per member: selected-channel bit and skipped-prefix mask for every rank.
struct Masks {
    select: Vec<Vec<u128>>,
    prefix: Vec<Vec<u128>>,
    all: u128,
}

fn masks(plan: &CoalitionPlan) -> Result<Masks> {
    let ks = plan.n_shared();
    if ks > MAX_SHARED_CHANNELS {
        return Err(Error::InvalidInput(format!(
            "coalition shares {ks} channels, more than {MAX_SHARED_CHANNELS}"
        )));
    }
    let local = |ch: usize| plan.shared_channels.binary_search(&ch).expect("shared");
    let mut select = Vec::with_capacity(plan.members.len());
    let mut prefix = Vec::with_capacity(plan.members.len());
    for ordering in &plan.orderings {
        let mut skipped = 0u128;
        let mut sel_row = Vec::with_capacity(ks);
        let mut pre_row = Vec::with_capacity(ks);
        for &ch in ordering {
            let bit = 1u128 << local(ch);
            sel_row.push(bit);
            pre_row.push(skipped);
            skipped |= bit;
        }
        select.push(sel_row);
        prefix.push(pre_row);
    }
    let all = if ks == 128 { u128::MAX } else { (1u128 << ks) - 1 };
    Ok(Masks {
        select,
        prefix,
        all,
    })
}

fn mask_probability<T: Num + Copy>(local_thetas: &[T], selected: u128, busy: u128) -> T {
    let mut p = T::one();
    for (j, &theta) in local_thetas.iter().enumerate() {
        if selected >> j & 1 == 1 {
            p = p * theta;
        } else if busy >> j & 1 == 1 {
            p = p * (T::one() - theta);
        }
    }
    p
}

fn local_thetas<T: Copy>(plan: &CoalitionPlan, thetas: &[T]) -> Vec<T> {
    plan.shared_channels.iter().map(|&k| thetas[k]).collect()
}

fn ranks_of(plan: &CoalitionPlan, assignment: &[Option<usize>]) -> Result<Vec<Option<usize>>> {
    if assignment.len() != plan.members.len() {
        return Err(Error::InvalidInput(format!(
            "assignment has {} entries for {} members",
            assignment.len(),
            plan.members.len()
        )));
    }
    assignment
        .iter()
        .zip(&plan.orderings)
        .map(|(ch, ordering)| match ch {
            None => Ok(None),
            Some(ch) => ordering
                .iter()
                .position(|c| c == ch)
                .map(Some)
                .ok_or_else(|| Error::InvalidInput(format!("channel {ch} is not shared"))),
        })
        .collect()
}

fn group_positions(ranks: &[Option<usize>]) -> Vec<Vec<usize>> {
    let mut keyed: Vec<(usize, usize)> = ranks
        .iter()
        .enumerate()
        .filter_map(|(pos, r)| r.map(|r| (r, pos)))
        .collect();
    keyed.sort_unstable();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last = None;
    for (r, pos) in keyed {
        if last == Some(r) {
            groups.last_mut().expect("open group").push(pos);
        } else {
            groups.push(vec![pos]);
            last = Some(r);
        }
    }
    groups
}

/// Probability of one joint outcome; zero when it is infeasible.
///
/// `thetas` is indexed by channel id.
pub fn tuple_probability<T: Num + Copy>(
    plan: &CoalitionPlan,
    assignment: &[Option<usize>],
    thetas: &[T],
) -> Result<T> {
    let m = masks(plan)?;
    let ranks = ranks_of(plan, assignment)?;
    let mut selected = 0u128;
    let mut busy = 0u128;
    for (pos, r) in ranks.iter().enumerate() {
        match r {
            Some(r) => {
                selected |= m.select[pos][*r];
                busy |= m.prefix[pos][*r];
            }
            None => busy |= m.all,
        }
    }
    if selected & busy != 0 {
        return Ok(T::zero());
    }
    Ok(mask_probability(&local_thetas(plan, thetas), selected, busy))
}

/// Transmitting members (user ids) grouped by the rank of their channel.
pub fn rank_groups(plan: &CoalitionPlan, assignment: &[Option<usize>]) -> Result<Vec<Vec<usize>>> {
    let ranks = ranks_of(plan, assignment)?;
    Ok(group_positions(&ranks)
        .into_iter()
        .map(|g| g.into_iter().map(|pos| plan.members[pos]).collect())
        .collect())
}

/// Every joint outcome with nonzero probability.
///
/// Fails with [`Error::EnumerationLimit`] when `(K_S + 1)^|S|` exceeds `cap`.
/// The search itself prunes infeasible partial assignments, so it visits far
/// fewer nodes than the cap suggests.
pub fn enumerate_outcomes<T: Num + Copy>(
    plan: &CoalitionPlan,
    thetas: &[T],
    cap: u64,
) -> Result<OutcomeDistribution<T>> {
    let space = assignment_space(plan);
    if space > cap as f64 {
        return Err(Error::EnumerationLimit {
            assignments: space,
            cap,
        });
    }
    let m = masks(plan)?;
    let local = local_thetas(plan, thetas);
    let ks = plan.n_shared();
    let n = plan.members.len();

    let mut tuples = Vec::new();
    let mut ranks: Vec<Option<usize>> = vec![None; n];
    // explicit stack: (position, selected, busy, next choice); choice ks = idle
    let mut stack: Vec<(usize, u128, u128)> = Vec::with_capacity(n + 1);
    let mut choice = vec![0usize; n + 1];
    stack.push((0, 0, 0));
    while let Some(&(pos, selected, busy)) = stack.last() {
        if pos == n {
            let p = mask_probability(&local, selected, busy);
            if p != T::zero() {
                tuples.push(OutcomeTuple {
                    assignment: ranks
                        .iter()
                        .enumerate()
                        .map(|(i, r)| r.map(|r| plan.orderings[i][r]))
                        .collect(),
                    ranks: ranks.clone(),
                    prob: p,
                    rank_groups: group_positions(&ranks),
                });
            }
            stack.pop();
            continue;
        }
        let c = choice[pos];
        if c > ks {
            choice[pos] = 0;
            stack.pop();
            continue;
        }
        choice[pos] = c + 1;
        let (sel, bsy, r) = if c < ks {
            (selected | m.select[pos][c], busy | m.prefix[pos][c], Some(c))
        } else {
            (selected, busy | m.all, None)
        };
        if sel & bsy != 0 {
            continue;
        }
        ranks[pos] = r;
        stack.push((pos + 1, sel, bsy));
    }

    Ok(OutcomeDistribution {
        coalition: plan.members.clone(),
        tuples,
    })
}
