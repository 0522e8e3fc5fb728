//! Cooperative channel ranking inside a coalition.
//!
//! Members pool their known channels and rank the union rank by rank. At each
//! rank every member proposes its best unused channel; distinct proposals are
//! accepted, contested channels go to the member weighting them highest, and
//! the losers re-propose among channels nobody has taken at this rank. A member
//! left with no such channel takes its best remaining channel regardless, which
//! is the only way two members end up sharing a channel at the same rank.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noncoop::channel_weight;
use crate::scenario::Scenario;

/// Shared channel set and per-member sensing orders of one coalition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalitionPlan {
    /// Ascending user ids.
    pub members: Vec<usize>,
    /// Ascending channel ids: union of the members' known channels.
    pub shared_channels: Vec<usize>,
    /// `orderings[p]` is a permutation of `shared_channels` for `members[p]`.
    pub orderings: Vec<Vec<usize>>,
}

impl CoalitionPlan {
    pub fn position_of(&self, su: usize) -> Option<usize> {
        self.members.binary_search(&su).ok()
    }

    pub fn ordering_of(&self, su: usize) -> Option<&[usize]> {
        self.position_of(su).map(|p| self.orderings[p].as_slice())
    }

    pub fn n_shared(&self) -> usize {
        self.shared_channels.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PickKind {
    /// Nobody else proposed the channel in that round.
    Unique,
    /// Won a contested channel on weight.
    WonConflict,
    /// No channel free at this rank remained; took the best unused one anyway.
    Forced,
}

/// One channel fixed for one member at one rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickRecord {
    /// 0-based rank.
    pub rank: usize,
    pub su: usize,
    pub channel: usize,
    pub kind: PickKind,
    /// Channels the member could still take without colliding at this rank,
    /// at the moment it chose. Empty exactly for forced picks.
    pub candidates: Vec<usize>,
    /// For conflict wins: every contender and its weight for the channel.
    pub contenders: Vec<(usize, f64)>,
}

/// Runs the ranking and returns the plan.
pub fn build_plan(scenario: &Scenario, members: &[usize]) -> Result<CoalitionPlan> {
    build_plan_traced(scenario, members).map(|(plan, _)| plan)
}

/// Runs the ranking and also returns every pick in decision order.
pub fn build_plan_traced(
    scenario: &Scenario,
    members: &[usize],
) -> Result<(CoalitionPlan, Vec<PickRecord>)> {
    if members.is_empty() {
        return Err(Error::InvalidInput("coalition has no members".into()));
    }
    let mut members = members.to_vec();
    members.sort_unstable();
    if members.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("coalition lists a member twice".into()));
    }
    if let Some(&bad) = members.iter().find(|&&m| m >= scenario.n_sus()) {
        return Err(Error::InvalidInput(format!("unknown user {bad}")));
    }

    let mut shared: Vec<usize> = members
        .iter()
        .flat_map(|&m| scenario.sus[m].known_channels.iter().copied())
        .collect();
    shared.sort_unstable();
    shared.dedup();
    if shared.is_empty() {
        return Err(Error::InvalidInput("coalition knows no channels".into()));
    }

    let ks = shared.len();
    let weights: Vec<Vec<f64>> = members
        .iter()
        .map(|&m| {
            shared
                .iter()
                .map(|&k| channel_weight(scenario.theta(k), scenario.channel_gain(m, k)))
                .collect()
        })
        .collect();

    // Highest weight among allowed local channels, ties to the lowest id.
    let best = |pos: usize, allowed: &dyn Fn(usize) -> bool| -> Option<usize> {
        let mut best: Option<usize> = None;
        for k in (0..ks).filter(|&k| allowed(k)) {
            if best.is_none_or(|b| weights[pos][k] > weights[pos][b]) {
                best = Some(k);
            }
        }
        best
    };

    let n = members.len();
    let mut used = vec![vec![false; ks]; n];
    let mut orderings = vec![Vec::with_capacity(ks); n];
    let mut picks = Vec::new();

    for rank in 0..ks {
        let mut taken_at_rank = vec![false; ks];
        let mut pending: Vec<usize> = (0..n).collect();
        let mut rounds = 0;
        while !pending.is_empty() {
            rounds += 1;
            assert!(rounds <= ks * n, "ranking failed to settle rank {rank}");

            let mut proposals: Vec<(usize, usize, Vec<usize>)> = Vec::new();
            for &pos in &pending {
                let candidates: Vec<usize> = (0..ks)
                    .filter(|&k| !used[pos][k] && !taken_at_rank[k])
                    .collect();
                if candidates.is_empty() {
                    let k = best(pos, &|k| !used[pos][k]).expect("fewer ranks than channels");
                    used[pos][k] = true;
                    orderings[pos].push(shared[k]);
                    taken_at_rank[k] = true;
                    picks.push(PickRecord {
                        rank,
                        su: members[pos],
                        channel: shared[k],
                        kind: PickKind::Forced,
                        candidates: Vec::new(),
                        contenders: Vec::new(),
                    });
                } else {
                    let k = best(pos, &|k| candidates.contains(&k)).expect("nonempty");
                    proposals.push((pos, k, candidates));
                }
            }

            let mut losers = Vec::new();
            let mut fixed: Vec<(usize, usize, PickKind, Vec<(usize, f64)>)> = Vec::new();
            let mut by_channel: Vec<Vec<usize>> = vec![Vec::new(); ks];
            let mut candidates_of: Vec<Vec<usize>> = vec![Vec::new(); n];
            for (pos, k, candidates) in proposals {
                by_channel[k].push(pos);
                candidates_of[pos] = candidates;
            }
            for (k, group) in by_channel.iter().enumerate() {
                match group.len() {
                    0 => {}
                    1 => fixed.push((group[0], k, PickKind::Unique, Vec::new())),
                    _ => {
                        // positions ascend with user id, so `>` keeps the lowest id on ties
                        let mut winner = group[0];
                        for &pos in &group[1..] {
                            if weights[pos][k] > weights[winner][k] {
                                winner = pos;
                            }
                        }
                        let contenders = group
                            .iter()
                            .map(|&pos| (members[pos], weights[pos][k]))
                            .collect();
                        fixed.push((winner, k, PickKind::WonConflict, contenders));
                        losers.extend(group.iter().copied().filter(|&p| p != winner));
                    }
                }
            }
            for (pos, k, kind, contenders) in fixed {
                let candidates = candidates_of[pos].iter().map(|&c| shared[c]).collect();
                used[pos][k] = true;
                orderings[pos].push(shared[k]);
                taken_at_rank[k] = true;
                picks.push(PickRecord {
                    rank,
                    su: members[pos],
                    channel: shared[k],
                    kind,
                    candidates,
                    contenders,
                });
            }
            losers.sort_unstable();
            pending = losers;
        }
    }

    Ok((
        CoalitionPlan {
            members,
            shared_channels: shared,
            orderings,
        },
        picks,
    ))
}

/// For each rank, the channels chosen by more than one member, with how many
/// members chose them.
pub fn collision_profile(plan: &CoalitionPlan) -> Vec<Vec<(usize, usize)>> {
    (0..plan.n_shared())
        .map(|rank| {
            let mut at_rank: Vec<usize> = plan.orderings.iter().map(|o| o[rank]).collect();
            at_rank.sort_unstable();
            let mut dups = Vec::new();
            let mut i = 0;
            while i < at_rank.len() {
                let j = at_rank[i..].iter().take_while(|&&c| c == at_rank[i]).count();
                if j > 1 {
                    dups.push((at_rank[i], j));
                }
                i += j;
            }
            dups
        })
        .collect()
}
