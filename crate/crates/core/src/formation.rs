//! Coalition formation by individual switches.
//!
//! Users take turns (a fresh seeded order every pass) looking for a coalition
//! they strictly prefer. Joining needs the consent of every incumbent (none
//! may lose by the move) and is barred for coalitions the user has already
//! been part of and parted from; going solo is always allowed. A quiet pass
//! clears the histories and goes again, up to a reset budget; the run ends
//! after a quiet pass with empty histories or with the budget spent.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{Coalition, Partition, SetPartitions};
use crate::rng::{self, Stream};
use crate::scenario::Scenario;
use crate::valuation::{Evaluator, ValuationConfig};

/// Largest network the exhaustive search accepts (Bell(8) = 4140 partitions).
pub const MAX_EXHAUSTIVE_USERS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormationConfig {
    pub valuation: ValuationConfig,
    /// Pass guard; `None` means `10 * N^2`.
    pub max_passes: Option<usize>,
    /// How many times a quiet pass may clear the histories and go again;
    /// `None` means `4 * N`.
    pub max_history_resets: Option<usize>,
}

impl Default for FormationConfig {
    fn default() -> Self {
        Self {
            valuation: ValuationConfig::default(),
            max_passes: None,
            max_history_resets: None,
        }
    }
}

impl FormationConfig {
    pub fn pass_limit(&self, n: usize) -> usize {
        self.max_passes.unwrap_or(10 * n * n).max(2)
    }

    pub fn reset_limit(&self, n: usize) -> usize {
        self.max_history_resets.unwrap_or(4 * n)
    }
}

/// Coalitions (of two or more users) each user has been part of and parted
/// from since the last reset.
///
/// Parting includes the coalition changing under the user: when `i` leaves
/// `S`, every remaining member has parted from `S` too, and when `i` joins
/// `T`, every incumbent has parted from `T`. Recording only the coalition a
/// user walked out of is not enough to stop cycles, since the coalition it
/// leaves need not be the one it joined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistorySet {
    left: Vec<BTreeSet<Coalition>>,
}

impl HistorySet {
    pub fn new(n: usize) -> Self {
        Self {
            left: vec![BTreeSet::new(); n],
        }
    }

    pub fn contains(&self, su: usize, coalition: &Coalition) -> bool {
        self.left[su].contains(coalition)
    }

    /// Singletons are not recorded.
    pub fn record(&mut self, su: usize, coalition: &Coalition) {
        if coalition.len() > 1 {
            self.left[su].insert(coalition.clone());
        }
    }

    /// Records everything a switch makes its participants part from.
    pub fn record_switch(&mut self, rec: &SwitchRecord) {
        for &j in rec.from.members() {
            self.record(j, &rec.from);
        }
        if let Some(to) = &rec.to {
            for &j in to.members() {
                self.record(j, to);
            }
        }
    }

    pub fn reset(&mut self) {
        self.left.iter_mut().for_each(BTreeSet::clear);
    }

    pub fn is_empty(&self) -> bool {
        self.left.iter().all(BTreeSet::is_empty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub su: usize,
    /// Coalition left (including `su`).
    pub from: Coalition,
    /// Coalition joined, before `su` arrived; `None` for going solo.
    pub to: Option<Coalition>,
    pub pass: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationTrace {
    pub initial: Partition,
    pub switches: Vec<SwitchRecord>,
    pub final_partition: Partition,
    pub passes: usize,
    pub converged: bool,
    /// Times the history was cleared to confirm a quiet pass.
    pub history_resets: usize,
    /// Whether the final quiet pass ran with empty histories, i.e. no user
    /// has any profitable switch at all.
    pub fresh_quiet: bool,
}

impl FormationTrace {
    /// Applies the recorded switches to the initial partition.
    pub fn replay(&self) -> Result<Partition> {
        let mut p = self.initial.clone();
        for rec in &self.switches {
            if !p.coalition_of(rec.su).eq(&rec.from) {
                return Err(Error::InvalidInput(format!(
                    "user {} is not in {} when replaying",
                    rec.su, rec.from
                )));
            }
            let dest = match &rec.to {
                None => None,
                Some(c) => Some(p.coalitions().iter().position(|x| x == c).ok_or_else(|| {
                    Error::InvalidInput(format!("coalition {c} is missing when replaying"))
                })?),
            };
            p = p.moved(rec.su, dest);
        }
        Ok(p)
    }

    /// One JSON object per line: every switch, then a summary record.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.switches {
            let mut v = serde_json::to_value(rec)?;
            v["type"] = "switch".into();
            writeln!(out, "{}", serde_json::to_string(&v)?)?;
        }
        let summary = serde_json::json!({
            "type": "summary",
            "initial": self.initial.fingerprint(),
            "final": self.final_partition.fingerprint(),
            "passes": self.passes,
            "switches": self.switches.len(),
            "converged": self.converged,
            "history_resets": self.history_resets,
            "fresh_quiet": self.fresh_quiet,
        });
        writeln!(out, "{summary}")?;
        Ok(())
    }
}

/// Value to `su` of being in coalition `idx` of `candidate`, a partition
/// reached from `current` by `su` moving there, or `None` when the move is
/// vetoed.
///
/// A lone `su` is never vetoed. Otherwise the move is vetoed when the
/// coalition is in `su`'s history, cannot be valued within the enumeration
/// cap, or leaves some incumbent worse off than it is in `current`. A veto is
/// the "worth nothing" case of the preference function; it is kept apart from
/// a payoff of zero because payoffs turn negative once sensing takes more
/// than the whole slot, and a vetoed coalition must never look attractive.
pub fn preference_value(
    ev: &Evaluator<'_>,
    su: usize,
    candidate: &Partition,
    idx: usize,
    current: &Partition,
    history: &HistorySet,
) -> Result<Option<f64>> {
    let coalition = &candidate.coalitions()[idx];
    debug_assert!(coalition.contains(su));
    if coalition.len() == 1 {
        return ev.payoff(candidate, su).map(Some);
    }
    if history.contains(su, coalition) || !ev.feasible(coalition) {
        return Ok(None);
    }
    let joined = match ev.value(candidate, idx) {
        Ok(v) => v,
        Err(Error::EnumerationLimit { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    for (&j, &after) in coalition.members().iter().zip(&joined.payoffs) {
        if j != su && after < ev.payoff(current, j)? {
            return Ok(None);
        }
    }
    Ok(joined.of(su))
}

/// Scans `su`'s destinations (other coalitions in partition order, then going
/// solo) and returns the first strict improvement.
pub fn try_switch(
    ev: &Evaluator<'_>,
    partition: &Partition,
    history: &HistorySet,
    su: usize,
) -> Result<Option<(Partition, SwitchRecord)>> {
    let from_idx = partition.index_of(su);
    let from = &partition.coalitions()[from_idx];
    let now = ev.payoff(partition, su)?;

    let solo = (from.len() > 1).then_some(None);
    let targets = (0..partition.len())
        .filter(|&k| k != from_idx)
        .map(Some)
        .chain(solo);
    for dest in targets {
        let candidate = partition.moved(su, dest);
        let idx = candidate.index_of(su);
        let Some(value) = preference_value(ev, su, &candidate, idx, partition, history)? else {
            continue;
        };
        if value > now {
            let record = SwitchRecord {
                su,
                from: from.clone(),
                to: dest.map(|k| partition.coalitions()[k].clone()),
                pass: 0,
                gain: value - now,
            };
            return Ok(Some((candidate, record)));
        }
    }
    Ok(None)
}

/// Runs switch passes from `initial` until a pass changes nothing.
///
/// When a pass is quiet but some history is not empty, the histories are
/// cleared and another pass is run, so the result usually has no profitable
/// deviation at all (not just none outside the history). Clearing can revive
/// cycles, so it happens at most `reset_limit` times; after that a quiet pass
/// ends the run as is.
pub fn form(scenario: &Scenario, initial: &Partition, seed: u64, cfg: &FormationConfig) -> Result<FormationTrace> {
    let ev = Evaluator::new(scenario, cfg.valuation.clone());
    form_with(&ev, initial, seed, cfg)
}

/// [`form`] with a caller-owned evaluator (and its caches).
pub fn form_with(ev: &Evaluator<'_>, initial: &Partition, seed: u64, cfg: &FormationConfig) -> Result<FormationTrace> {
    form_with_rng(ev, initial, &mut rng::stream(seed, Stream::Formation), cfg)
}

/// [`form_with`] drawing pass orders from `rng`.
pub fn form_with_rng<R: Rng>(
    ev: &Evaluator<'_>,
    initial: &Partition,
    rng: &mut R,
    cfg: &FormationConfig,
) -> Result<FormationTrace> {
    let n = ev.scenario().n_sus();
    let max_passes = cfg.pass_limit(n);
    let max_resets = cfg.reset_limit(n);
    if initial.n_users() != n {
        return Err(Error::InvalidInput(format!(
            "partition covers {} users, scenario has {n}",
            initial.n_users()
        )));
    }
    let mut history = HistorySet::new(n);
    let mut trace = FormationTrace {
        initial: initial.clone(),
        switches: Vec::new(),
        final_partition: initial.clone(),
        passes: 0,
        converged: false,
        history_resets: 0,
        fresh_quiet: false,
    };
    let mut partition = initial.clone();
    let mut order: Vec<usize> = (0..n).collect();

    while trace.passes < max_passes {
        trace.passes += 1;
        order.shuffle(rng);
        let mut moved = false;
        for &su in &order {
            if let Some((next, mut rec)) = try_switch(ev, &partition, &history, su)? {
                history.record_switch(&rec);
                rec.pass = trace.passes;
                trace.switches.push(rec);
                partition = next;
                moved = true;
            }
        }
        if !moved {
            if history.is_empty() || trace.history_resets >= max_resets {
                trace.converged = true;
                trace.fresh_quiet = history.is_empty();
                break;
            }
            history.reset();
            trace.history_resets += 1;
        }
    }
    trace.final_partition = partition;
    if !trace.converged {
        return Err(Error::PassLimit {
            passes: trace.passes,
            trace: Box::new(trace),
        });
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub su: usize,
    /// Coalition `su` would join; `None` for going solo.
    pub destination: Option<Coalition>,
    pub current: f64,
    pub deviating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stable: bool,
    pub violations: Vec<Deviation>,
}

/// Checks every user against every destination with an empty history.
pub fn audit_nash_stability(scenario: &Scenario, partition: &Partition, cfg: &ValuationConfig) -> Result<StabilityReport> {
    audit_with(&Evaluator::new(scenario, cfg.clone()), partition)
}

pub fn audit_with(ev: &Evaluator<'_>, partition: &Partition) -> Result<StabilityReport> {
    let history = HistorySet::new(ev.scenario().n_sus());
    let mut violations = Vec::new();
    for su in 0..ev.scenario().n_sus() {
        let from_idx = partition.index_of(su);
        let now = ev.payoff(partition, su)?;
        let solo = (partition.coalitions()[from_idx].len() > 1).then_some(None);
        for dest in (0..partition.len())
            .filter(|&k| k != from_idx)
            .map(Some)
            .chain(solo)
        {
            let candidate = partition.moved(su, dest);
            let value = preference_value(ev, su, &candidate, candidate.index_of(su), partition, &history)?;
            if let Some(value) = value.filter(|&v| v > now) {
                violations.push(Deviation {
                    su,
                    destination: dest.map(|k| partition.coalitions()[k].clone()),
                    current: now,
                    deviating: value,
                });
            }
        }
    }
    Ok(StabilityReport {
        stable: violations.is_empty(),
        violations,
    })
}

/// Sum of individual payoffs.
pub fn welfare(payoffs: &[f64]) -> f64 {
    payoffs.iter().sum()
}

/// Exhaustive search for the welfare-maximizing partition (`N <= 8`).
/// Partitions containing a coalition over the enumeration cap are skipped;
/// ties go to the first partition in enumeration order.
pub fn optimal_partition(scenario: &Scenario, cfg: &ValuationConfig) -> Result<(Partition, f64)> {
    let n = scenario.n_sus();
    if n > MAX_EXHAUSTIVE_USERS {
        return Err(Error::SizeLimit {
            n,
            limit: MAX_EXHAUSTIVE_USERS,
        });
    }
    let all: Vec<Partition> = SetPartitions::new(n).collect();
    let scored: Vec<Option<f64>> = all
        .par_iter()
        .map_init(
            || Evaluator::new(scenario, cfg.clone()),
            |ev, p| match ev.profile(p) {
                Ok(x) => Ok(Some(welfare(&x))),
                Err(Error::EnumerationLimit { .. }) => Ok(None),
                Err(e) => Err(e),
            },
        )
        .collect::<Result<_>>()?;
    let mut best: Option<(usize, f64)> = None;
    for (i, w) in scored.iter().enumerate() {
        if let Some(w) = *w {
            if best.is_none_or(|(_, b)| w > b) {
                best = Some((i, w));
            }
        }
    }
    let (i, w) = best.expect("the all-singleton partition is always within the cap");
    Ok((all[i].clone(), w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, PhysParams};

    fn far_pair() -> Scenario {
        let phys = PhysParams {
            area_side: 20_000.0,
            ..PhysParams::default()
        };
        Scenario::from_parts(
            vec![0.3, 0.5, 0.4, 0.6],
            vec![[6000.0, 0.0], [0.0, 6000.0]],
            vec![vec![0, 1], vec![2, 3]],
            vec![vec![1.0; 4]; 2],
            phys,
            0,
        )
        .unwrap()
    }

    fn twins() -> Scenario {
        let phys = PhysParams {
            area_side: 20_000.0,
            ..PhysParams::default()
        };
        Scenario::from_parts(
            vec![0.8, 0.3],
            vec![[6000.0, 0.0], [6000.0, 0.0]],
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![1.0; 2]; 2],
            phys,
            0,
        )
        .unwrap()
    }

    #[test]
    fn lone_user_never_moves() {
        let s = generate_scenario(1, 3, 2, PhysParams::default(), 0).unwrap();
        let t = form(&s, &Partition::singletons(1), 0, &FormationConfig::default()).unwrap();
        assert!(t.switches.is_empty() && t.converged && t.passes == 1);
        assert_eq!(t.final_partition, Partition::singletons(1));
    }

    #[test]
    fn disjoint_pair_merges() {
        let s = far_pair();
        let t = form(&s, &Partition::singletons(2), 4, &FormationConfig::default()).unwrap();
        assert_eq!(t.final_partition, Partition::grand(2));
        assert_eq!(t.switches.len(), 1);
        assert_eq!(t.replay().unwrap(), t.final_partition);
    }

    #[test]
    fn consent_veto_and_history_veto() {
        let s = twins();
        let ev = Evaluator::new(&s, ValuationConfig::default());
        let alone = Partition::singletons(2);
        let merged = Partition::grand(2);
        let x = ev.profile(&merged).unwrap();
        let y = ev.profile(&alone).unwrap();
        // the member that loses by merging vetoes the other's arrival
        let loser = (0..2).find(|&i| x[i] < y[i]).expect("someone pays");
        let joiner = 1 - loser;
        let h = HistorySet::new(2);
        assert_eq!(preference_value(&ev, joiner, &merged, 0, &alone, &h).unwrap(), None);

        let far = far_pair();
        let ev = Evaluator::new(&far, ValuationConfig::default());
        let mut h = HistorySet::new(2);
        assert!(preference_value(&ev, 0, &merged, 0, &alone, &h).unwrap().unwrap() > 0.0);
        h.record(0, &Coalition::new(vec![0, 1]));
        assert_eq!(preference_value(&ev, 0, &merged, 0, &alone, &h).unwrap(), None);
        // going solo is never vetoed
        h.record(0, &Coalition::singleton(0));
        assert!(h.left[0].len() == 1);
        assert!(preference_value(&ev, 0, &alone, 0, &merged, &h).unwrap().unwrap() > 0.0);
    }

    #[test]
    fn audit_flags_the_profitable_merge() {
        let s = far_pair();
        let report = audit_nash_stability(&s, &Partition::singletons(2), &ValuationConfig::default()).unwrap();
        assert!(!report.stable);
        let who: Vec<_> = report.violations.iter().map(|d| (d.su, d.destination.clone())).collect();
        assert_eq!(
            who,
            vec![(0, Some(Coalition::singleton(1))), (1, Some(Coalition::singleton(0)))]
        );
        assert!(audit_nash_stability(&s, &Partition::grand(2), &ValuationConfig::default()).unwrap().stable);
    }

    #[test]
    fn formed_partitions_are_stable_and_replayable() {
        for seed in 0..6 {
            let s = generate_scenario(6, 14, 3, PhysParams::default(), seed).unwrap();
            let cfg = FormationConfig::default();
            let t = form(&s, &Partition::singletons(6), seed, &cfg).unwrap();
            assert_eq!(t.replay().unwrap(), t.final_partition);
            assert!(audit_nash_stability(&s, &t.final_partition, &cfg.valuation).unwrap().stable);
            let mut buf = Vec::new();
            t.write_jsonl(&mut buf).unwrap();
            assert_eq!(String::from_utf8(buf).unwrap().lines().count(), t.switches.len() + 1);
        }
    }

    #[test]
    fn optimum_dominates_and_size_limit() {
        let s = generate_scenario(4, 14, 3, PhysParams::default(), 9).unwrap();
        let cfg = FormationConfig::default();
        let (_, best) = optimal_partition(&s, &cfg.valuation).unwrap();
        let t = form(&s, &Partition::singletons(4), 9, &cfg).unwrap();
        let ev = Evaluator::new(&s, cfg.valuation.clone());
        assert!(best >= welfare(&ev.profile(&t.final_partition).unwrap()));

        let one = generate_scenario(1, 2, 1, PhysParams::default(), 0).unwrap();
        assert_eq!(optimal_partition(&one, &cfg.valuation).unwrap().0, Partition::singletons(1));
        let big = generate_scenario(9, 14, 3, PhysParams::default(), 0).unwrap();
        assert!(matches!(optimal_partition(&big, &cfg.valuation), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn two_users_optimum_is_better_of_two() {
        let s = far_pair();
        let cfg = ValuationConfig::default();
        let (p, w) = optimal_partition(&s, &cfg).unwrap();
        let ev = Evaluator::new(&s, cfg);
        let a = welfare(&ev.profile(&Partition::singletons(2)).unwrap());
        let b = welfare(&ev.profile(&Partition::grand(2)).unwrap());
        assert_eq!(w, a.max(b));
        assert_eq!(p, if b > a { Partition::grand(2) } else { Partition::singletons(2) });
    }
}
