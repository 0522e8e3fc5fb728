//! Brute-force reference implementations used to cross-check the fast paths.
//!
//! Everything here is deliberately naive and shares as little code as possible
//! with the modules it checks: probabilities come from enumerating every
//! idle/busy realization of the channels, power optima from a grid, and the
//! ranking checks replay the recorded picks against freshly computed weights.

use std::collections::BTreeMap;

use crate::coopsort::{build_plan, CoalitionPlan, PickKind, PickRecord};
use crate::error::Result;
use crate::partition::Partition;
use crate::power::{allocate, sum_rate, PowerAllocation, RateContext, SolverConfig};
use crate::scenario::Scenario;

/// Sensing time by enumerating all `2^K` idle/busy realizations: the slot
/// costs `j * alpha` when position `j` (1-based) is the first idle one, and the
/// whole slot when none is.
pub fn sensing_time_by_realizations(thetas_in_order: &[f64], alpha: f64) -> f64 {
    let k = thetas_in_order.len();
    assert!(k < 31, "realization enumeration is exponential");
    let mut total = 0.0;
    for idle in 0u32..(1 << k) {
        let mut p = 1.0;
        for (j, &t) in thetas_in_order.iter().enumerate() {
            p *= if idle >> j & 1 == 1 { t } else { 1.0 - t };
        }
        let cost = (0..k)
            .find(|&j| idle >> j & 1 == 1)
            .map_or(1.0, |j| (j + 1) as f64 * alpha);
        total += p * cost;
    }
    total
}

/// Joint-outcome probabilities of a coalition as the pushforward of every
/// idle/busy realization of its shared channels: each member takes the first
/// idle channel in its order, or stays idle.
///
/// `thetas` is indexed by channel id; keys are per-member selections.
pub fn outcomes_by_realizations(
    plan: &CoalitionPlan,
    thetas: &[f64],
) -> BTreeMap<Vec<Option<usize>>, f64> {
    let shared = &plan.shared_channels;
    assert!(shared.len() < 31, "realization enumeration is exponential");
    let mut out = BTreeMap::new();
    for idle in 0u32..(1 << shared.len()) {
        let is_idle = |ch: usize| {
            let j = shared.iter().position(|&c| c == ch).expect("shared channel");
            idle >> j & 1 == 1
        };
        let mut p = 1.0;
        for (j, &ch) in shared.iter().enumerate() {
            p *= if idle >> j & 1 == 1 {
                thetas[ch]
            } else {
                1.0 - thetas[ch]
            };
        }
        let pick: Vec<Option<usize>> = plan
            .orderings
            .iter()
            .map(|o| o.iter().copied().find(|&c| is_idle(c)))
            .collect();
        *out.entry(pick).or_insert(0.0) += p;
    }
    out.retain(|_, p| *p > 0.0);
    out
}

/// Best group sum-rate over a uniform grid of per-member splits of `p_max`
/// (every member spends the full budget), with `steps` increments per member.
pub fn grid_power_optimum(ctx: &RateContext<f64>, p_max: f64, steps: usize) -> (PowerAllocation<f64>, f64) {
    let n = ctx.gains.len();
    let m = ctx.gains[0].len();
    let splits = compositions(steps, m);
    let row = |c: &[usize]| -> Vec<f64> {
        c.iter().map(|&s| p_max * s as f64 / steps as f64).collect()
    };
    let mut best: Option<(PowerAllocation<f64>, f64)> = None;
    let mut idx = vec![0usize; n];
    loop {
        let alloc = PowerAllocation {
            p: idx.iter().map(|&i| row(&splits[i])).collect(),
        };
        let r = sum_rate(&alloc, ctx);
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((alloc, r));
        }
        // odometer over members
        let mut d = 0;
        loop {
            if d == n {
                return best.expect("grid is nonempty");
            }
            idx[d] += 1;
            if idx[d] < splits.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// All ways to write `total` as an ordered sum of `parts` nonnegative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Replays a traced cooperative ranking and returns every violated property
/// as a human-readable message (empty when the plan is sound):
///
/// * each ordering is a permutation of the shared channels;
/// * a channel shared by two members at the same rank was taken by a forced
///   pick, and at that moment the member had no channel left that was both
///   unused by it and untaken at that rank;
/// * a contested channel went to a contender of maximal weight, lowest id on
///   ties;
/// * a free pick is the member's best candidate (lowest channel id on ties).
pub fn ranking_violations(scenario: &Scenario, plan: &CoalitionPlan, picks: &[PickRecord]) -> Vec<String> {
    let mut bad = Vec::new();
    let weight = |su: usize, ch: usize| scenario.theta(ch) * scenario.gains.g[su][ch];
    let ks = plan.shared_channels.len();

    for (pos, ordering) in plan.orderings.iter().enumerate() {
        let mut sorted = ordering.clone();
        sorted.sort_unstable();
        if sorted != plan.shared_channels {
            bad.push(format!("user {} ordering is not a permutation", plan.members[pos]));
        }
    }

    let mut used: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut taken: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut owner: BTreeMap<(usize, usize), Vec<(usize, PickKind)>> = BTreeMap::new();
    for pick in picks {
        let mine = used.entry(pick.su).or_default();
        let at_rank = taken.entry(pick.rank).or_default();
        let free: Vec<usize> = plan
            .shared_channels
            .iter()
            .copied()
            .filter(|c| !mine.contains(c) && !at_rank.contains(c))
            .collect();
        match pick.kind {
            PickKind::Forced => {
                if !free.is_empty() {
                    bad.push(format!(
                        "user {} forced onto {} at rank {} with {:?} still free",
                        pick.su, pick.channel, pick.rank, free
                    ));
                }
            }
            PickKind::Unique | PickKind::WonConflict => {
                if !free.contains(&pick.channel) {
                    bad.push(format!(
                        "user {} took {} at rank {} although it was not free",
                        pick.su, pick.channel, pick.rank
                    ));
                }
                let best = pick
                    .candidates
                    .iter()
                    .copied()
                    .fold(None::<usize>, |b, c| match b {
                        Some(b) if weight(pick.su, b) >= weight(pick.su, c) => Some(b),
                        _ => Some(c),
                    });
                if best != Some(pick.channel) {
                    bad.push(format!(
                        "user {} proposed {} at rank {} but {:?} was its best candidate",
                        pick.su, pick.channel, pick.rank, best
                    ));
                }
            }
        }
        if pick.kind == PickKind::WonConflict {
            for &(other, _) in &pick.contenders {
                let (w, wo) = (weight(pick.su, pick.channel), weight(other, pick.channel));
                if wo > w || (wo == w && other < pick.su) {
                    bad.push(format!(
                        "user {} beat user {} for {} at rank {} with lower priority",
                        pick.su, other, pick.channel, pick.rank
                    ));
                }
            }
        }
        mine.push(pick.channel);
        at_rank.push(pick.channel);
        owner
            .entry((pick.rank, pick.channel))
            .or_default()
            .push((pick.su, pick.kind));
    }

    for ((rank, ch), holders) in &owner {
        if holders[1..].iter().any(|&(_, k)| k != PickKind::Forced) {
            bad.push(format!("unforced collision on {ch} at rank {rank}: {holders:?}"));
        }
    }
    if picks.len() != ks * plan.members.len() {
        bad.push(format!("{} picks for {} slots", picks.len(), ks * plan.members.len()));
    }
    bad
}

/// Per-user payoffs of a partition computed without the outcome or valuation
/// modules: outcome probabilities by realization enumeration, outsiders at
/// full power weighted by their transmit probability, and rank groups solved
/// in ascending rank order on the channels their members found.
///
/// Only for small coalitions (`K_S` below ~20).
pub fn straight_line_payoffs(scenario: &Scenario, partition: &Partition, solver: &SolverConfig) -> Result<Vec<f64>> {
    let n = scenario.n_sus();
    let k = scenario.n_channels();
    let p_max = scenario.phys.p_max;
    let noise = scenario.phys.noise;
    let alpha = scenario.phys.alpha;
    let thetas = scenario.thetas();

    let mut plans = Vec::new();
    let mut dists = Vec::new();
    let mut radiated = vec![vec![0.0; k]; n];
    for c in partition.coalitions() {
        let plan = build_plan(scenario, c.members())?;
        let dist = outcomes_by_realizations(&plan, &thetas);
        for (pick, p) in &dist {
            for (pos, ch) in pick.iter().enumerate() {
                if let Some(ch) = *ch {
                    let su = plan.members[pos];
                    radiated[su][ch] += p * p_max * scenario.gains.g[su][ch];
                }
            }
        }
        plans.push(plan);
        dists.push(dist);
    }

    let mut payoff = vec![0.0; n];
    for (plan, dist) in plans.iter().zip(&dists) {
        let outside: Vec<f64> = (0..k)
            .map(|ch| {
                (0..n)
                    .filter(|j| !plan.members.contains(j))
                    .map(|j| radiated[j][ch])
                    .sum()
            })
            .collect();
        let mut capacity = vec![0.0; plan.members.len()];
        for (pick, p) in dist {
            let rank = |pos: usize| {
                pick[pos].map(|ch| plan.orderings[pos].iter().position(|&c| c == ch).unwrap())
            };
            let mut ranks: Vec<usize> = (0..pick.len()).filter_map(rank).collect();
            ranks.sort_unstable();
            ranks.dedup();
            // (user, channel, power) of earlier groups
            let mut earlier: Vec<(usize, usize, f64)> = Vec::new();
            for r in ranks {
                let group: Vec<usize> = (0..pick.len()).filter(|&pos| rank(pos) == Some(r)).collect();
                let mut chans: Vec<usize> = group.iter().map(|&pos| pick[pos].unwrap()).collect();
                chans.sort_unstable();
                chans.dedup();
                let ctx = RateContext {
                    gains: group
                        .iter()
                        .map(|&pos| chans.iter().map(|&ch| scenario.gains.g[plan.members[pos]][ch]).collect())
                        .collect(),
                    fixed_interference: group
                        .iter()
                        .map(|_| {
                            chans
                                .iter()
                                .map(|&ch| {
                                    outside[ch]
                                        + earlier
                                            .iter()
                                            .filter(|e| e.1 == ch)
                                            .map(|&(j, _, pw)| scenario.gains.g[j][ch] * pw)
                                            .sum::<f64>()
                                })
                                .collect()
                        })
                        .collect(),
                    noise,
                };
                let alloc = allocate(&ctx, p_max, solver);
                for (gi, &pos) in group.iter().enumerate() {
                    let i = plan.members[pos];
                    for (ci, &ch) in chans.iter().enumerate() {
                        let pw = alloc.p[gi][ci];
                        if pw > 0.0 {
                            let mut interf = noise + ctx.fixed_interference[gi][ci];
                            for (gj, &pj) in group.iter().enumerate() {
                                if gj != gi {
                                    interf += scenario.gains.g[plan.members[pj]][ch] * alloc.p[gj][ci];
                                }
                            }
                            capacity[pos] += p * (1.0 + pw * scenario.gains.g[i][ch] / interf).log2();
                        }
                    }
                }
                for (gi, &pos) in group.iter().enumerate() {
                    for (ci, &ch) in chans.iter().enumerate() {
                        earlier.push((plan.members[pos], ch, alloc.p[gi][ci]));
                    }
                }
            }
        }
        for (pos, &su) in plan.members.iter().enumerate() {
            let ordered: Vec<f64> = plan.orderings[pos].iter().map(|&c| thetas[c]).collect();
            let tau = sensing_time_by_realizations(&ordered, alpha);
            payoff[su] = capacity[pos] * (1.0 - tau);
        }
    }
    Ok(payoff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensing_oracle_on_hand_example() {
        assert!((sensing_time_by_realizations(&[0.5, 0.5], 0.05) - 0.3).abs() < 1e-15);
        assert_eq!(sensing_time_by_realizations(&[], 0.05), 1.0);
    }

    #[test]
    fn compositions_count() {
        // C(total + parts - 1, parts - 1)
        assert_eq!(compositions(100, 2).len(), 101);
        assert_eq!(compositions(4, 3).len(), 15);
    }

    #[test]
    fn grid_finds_waterfilling_split() {
        let ctx = RateContext {
            gains: vec![vec![2.0, 1.0]],
            fixed_interference: vec![vec![0.0, 0.0]],
            noise: 1.0,
        };
        let (alloc, _) = grid_power_optimum(&ctx, 1.0, 100);
        assert!((alloc.p[0][0] - 0.75).abs() < 1e-12);
    }
}
