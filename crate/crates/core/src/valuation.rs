//! Cooperative value of a coalition inside a partition.
//!
//! A coalition's payoff depends on the rest of the network only through the
//! average interference outsiders put on its channels, so the value of
//! `(S, Π)` is `value(S, interference(Π, S))`. Each outsider is modelled as
//! radiating full power on the channel it selects, weighted by how often it
//! selects it. Inside the coalition, every joint outcome is split into
//! same-rank groups; groups are solved in ascending rank order and each sees
//! the earlier groups' powers as fixed interference.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::coopsort::{build_plan, CoalitionPlan};
use crate::error::Result;
use crate::noncoop::{ordered_thetas, sensing_time, InterferenceEstimate};
use crate::outcomes::{enumerate_outcomes, OutcomeDistribution, DEFAULT_ENUMERATION_CAP};
use crate::partition::{Coalition, Partition};
use crate::power::{allocate, member_rate, PowerAllocation, RateContext, SolverConfig};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValuationConfig {
    /// Largest `(K_S + 1)^|S|` a coalition may have.
    pub cap: u64,
    pub solver: SolverConfig,
    /// Replace the full-power interference estimate by a damped fixed point
    /// on the outsiders' expected powers.
    pub refine: bool,
    pub refine_rounds: usize,
    pub refine_damping: f64,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            solver: SolverConfig::default(),
            refine: false,
            refine_rounds: 10,
            refine_damping: 0.5,
        }
    }
}

/// Utilities of one coalition's members, in ascending member order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffVector {
    pub coalition: Coalition,
    pub payoffs: Vec<f64>,
}

impl PayoffVector {
    pub fn of(&self, su: usize) -> Option<f64> {
        self.coalition
            .members()
            .binary_search(&su)
            .ok()
            .map(|p| self.payoffs[p])
    }
}

/// Plan, outcome distribution and sensing times of one coalition. These
/// depend only on the members, not on the rest of the partition.
#[derive(Debug, Clone)]
pub struct CoalitionModel {
    pub plan: CoalitionPlan,
    pub outcomes: OutcomeDistribution<f64>,
    /// `transmit[pos][j]`: probability member `pos` transmits on
    /// `plan.shared_channels[j]`.
    pub transmit: Vec<Vec<f64>>,
    pub taus: Vec<f64>,
}

impl CoalitionModel {
    pub fn build(scenario: &Scenario, coalition: &Coalition, cap: u64) -> Result<Self> {
        let plan = build_plan(scenario, coalition.members())?;
        let outcomes = enumerate_outcomes(&plan, &scenario.thetas(), cap)?;
        let transmit = outcomes.transmit_marginals(&plan);
        let taus = plan
            .orderings
            .iter()
            .map(|o| sensing_time(&ordered_thetas(scenario, o), scenario.phys.alpha))
            .collect();
        Ok(Self {
            plan,
            outcomes,
            transmit,
            taus,
        })
    }

    /// Interference this coalition radiates, per user and channel id, under
    /// the full-power model: `g * p_max * Pr(transmit)`.
    fn radiated(&self, scenario: &Scenario) -> Vec<(usize, Vec<f64>)> {
        let p_max = scenario.phys.p_max;
        self.plan
            .members
            .iter()
            .enumerate()
            .map(|(pos, &su)| {
                let mut row = vec![0.0; scenario.n_channels()];
                for (j, &ch) in self.plan.shared_channels.iter().enumerate() {
                    row[ch] = scenario.channel_gain(su, ch) * p_max * self.transmit[pos][j];
                }
                (su, row)
            })
            .collect()
    }
}

/// A partition with its coalition plans and the interference each coalition
/// sees from outside.
#[derive(Debug, Clone)]
pub struct PartitionContext {
    pub partition: Partition,
    pub plans: Vec<CoalitionPlan>,
    /// Indexed like `partition.coalitions()`.
    pub ext_interference: Vec<InterferenceEstimate>,
}

impl PartitionContext {
    pub fn build(scenario: &Scenario, partition: &Partition, cfg: &ValuationConfig) -> Result<Self> {
        let models = partition
            .coalitions()
            .iter()
            .map(|c| CoalitionModel::build(scenario, c, cfg.cap))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&CoalitionModel> = models.iter().collect();
        let ext_interference = if cfg.refine {
            refined_interference(scenario, &refs, cfg)
        } else {
            external_interference(scenario, &refs)
        };
        Ok(Self {
            partition: partition.clone(),
            plans: models.into_iter().map(|m| m.plan).collect(),
            ext_interference,
        })
    }
}

/// One-shot estimate for every coalition of `models` (a whole partition):
/// `I[S][k] = sum over users j outside S of g_jk * p_max * Pr_j(transmit on k)`.
pub fn external_interference(scenario: &Scenario, models: &[&CoalitionModel]) -> Vec<InterferenceEstimate> {
    let per_user = radiated_by_user(scenario, models);
    models
        .iter()
        .map(|m| outside_sum(scenario, &per_user, &m.plan.members))
        .collect()
}

fn radiated_by_user(scenario: &Scenario, models: &[&CoalitionModel]) -> Vec<Vec<f64>> {
    let mut per_user = vec![Vec::new(); scenario.n_sus()];
    for m in models {
        for (su, row) in m.radiated(scenario) {
            per_user[su] = row;
        }
    }
    per_user
}

fn outside_sum(scenario: &Scenario, per_user: &[Vec<f64>], members: &[usize]) -> InterferenceEstimate {
    let mut est = InterferenceEstimate::zeros(scenario.n_channels());
    for (j, row) in per_user.iter().enumerate() {
        if members.binary_search(&j).is_err() {
            for (acc, &x) in est.per_channel.iter_mut().zip(row) {
                *acc += x;
            }
        }
    }
    est
}

/// Result of valuing one coalition against a given interference estimate.
struct Valued {
    payoffs: Vec<f64>,
    /// Expected power per member and channel id.
    expected_power: Vec<Vec<f64>>,
}

fn value_model(scenario: &Scenario, model: &CoalitionModel, ext: &InterferenceEstimate, solver: &SolverConfig) -> Valued {
    let g = &scenario.gains.g;
    let p_max = scenario.phys.p_max;
    let noise = scenario.phys.noise;
    let members = &model.plan.members;
    let mut capacity = vec![0.0; members.len()];
    let mut expected_power = vec![vec![0.0; scenario.n_channels()]; members.len()];
    // outcomes often repeat a group with the same background
    let mut solved: HashMap<(Vec<usize>, Vec<usize>, Vec<u64>), Rc<(PowerAllocation<f64>, Vec<f64>)>> =
        HashMap::new();

    for tuple in &model.outcomes.tuples {
        // (user, channel, power) of already-solved groups in this outcome
        let mut earlier: Vec<(usize, usize, f64)> = Vec::new();
        for group in &tuple.rank_groups {
            let mut chans: Vec<usize> = group
                .iter()
                .map(|&pos| tuple.assignment[pos].expect("grouped members transmit"))
                .collect();
            chans.sort_unstable();
            chans.dedup();
            let background: Vec<f64> = chans
                .iter()
                .map(|&ch| {
                    ext.per_channel[ch]
                        + earlier
                            .iter()
                            .filter(|e| e.1 == ch)
                            .map(|&(j, _, p)| g[j][ch] * p)
                            .sum::<f64>()
                })
                .collect();
            let key = (
                group.clone(),
                chans.clone(),
                background.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            );
            let entry = match solved.get(&key) {
                Some(e) => Rc::clone(e),
                None => {
                    let ctx = RateContext {
                        gains: group
                            .iter()
                            .map(|&pos| chans.iter().map(|&ch| g[members[pos]][ch]).collect())
                            .collect(),
                        fixed_interference: vec![background; group.len()],
                        noise,
                    };
                    let alloc = allocate(&ctx, p_max, solver);
                    let rates = (0..group.len()).map(|gi| member_rate(&alloc, &ctx, gi)).collect();
                    let e = Rc::new((alloc, rates));
                    solved.insert(key, Rc::clone(&e));
                    e
                }
            };
            let (alloc, rates) = &*entry;
            for (gi, &pos) in group.iter().enumerate() {
                capacity[pos] += tuple.prob * rates[gi];
                for (ci, &ch) in chans.iter().enumerate() {
                    let p = alloc.p[gi][ci];
                    expected_power[pos][ch] += tuple.prob * p;
                    earlier.push((members[pos], ch, p));
                }
            }
        }
    }

    let payoffs = capacity
        .iter()
        .zip(&model.taus)
        .map(|(c, tau)| c * (1.0 - tau))
        .collect();
    Valued {
        payoffs,
        expected_power,
    }
}

/// Damped fixed point on expected powers, seeded by the one-shot estimate.
fn refined_interference(
    scenario: &Scenario,
    models: &[&CoalitionModel],
    cfg: &ValuationConfig,
) -> Vec<InterferenceEstimate> {
    let mut ext = external_interference(scenario, models);
    let mut per_user = radiated_by_user(scenario, models);
    let d = cfg.refine_damping;
    for _ in 0..cfg.refine_rounds {
        for (m, e) in models.iter().zip(&ext) {
            let valued = value_model(scenario, m, e, &cfg.solver);
            for (pos, &su) in m.plan.members.iter().enumerate() {
                for (ch, acc) in per_user[su].iter_mut().enumerate() {
                    let fresh = scenario.channel_gain(su, ch) * valued.expected_power[pos][ch];
                    *acc = (1.0 - d) * *acc + d * fresh;
                }
            }
        }
        let next: Vec<InterferenceEstimate> = models
            .iter()
            .map(|m| outside_sum(scenario, &per_user, &m.plan.members))
            .collect();
        let moved = next
            .iter()
            .zip(&ext)
            .flat_map(|(a, b)| a.per_channel.iter().zip(&b.per_channel))
            .map(|(a, b)| (a - b).abs() / b.abs().max(scenario.phys.noise))
            .fold(0.0, f64::max);
        ext = next;
        if moved < 1e-9 {
            break;
        }
    }
    ext
}

/// Payoffs of `coalition`'s members within the context's partition.
pub fn coalition_value(
    scenario: &Scenario,
    ctx: &PartitionContext,
    coalition: &Coalition,
    cfg: &ValuationConfig,
) -> Result<PayoffVector> {
    let idx = ctx
        .partition
        .coalitions()
        .iter()
        .position(|c| c == coalition)
        .ok_or_else(|| crate::Error::InvalidInput(format!("{coalition} is not in the partition")))?;
    let model = CoalitionModel::build(scenario, coalition, cfg.cap)?;
    Ok(PayoffVector {
        coalition: coalition.clone(),
        payoffs: value_model(scenario, &model, &ctx.ext_interference[idx], &cfg.solver).payoffs,
    })
}

/// Payoff of every user, indexed by user id.
pub fn evaluate_partition(scenario: &Scenario, partition: &Partition, cfg: &ValuationConfig) -> Result<Vec<f64>> {
    Evaluator::new(scenario, cfg.clone()).profile(partition)
}

type ValueKey = (Coalition, Vec<u64>);

/// Caching front end used by the formation engine.
///
/// Coalition models are cached by member set and coalition values by member
/// set plus the bit pattern of the interference on the coalition's channels,
/// so a value is recomputed only when its inputs actually change. Not `Sync`;
/// give each worker its own.
pub struct Evaluator<'a> {
    scenario: &'a Scenario,
    cfg: ValuationConfig,
    models: RefCell<HashMap<Coalition, Option<Rc<CoalitionModel>>>>,
    values: RefCell<HashMap<ValueKey, Rc<PayoffVector>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(scenario: &'a Scenario, cfg: ValuationConfig) -> Self {
        Self {
            scenario,
            cfg,
            models: RefCell::default(),
            values: RefCell::default(),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn config(&self) -> &ValuationConfig {
        &self.cfg
    }

    /// The coalition's model, or the enumeration error when it is over the cap.
    pub fn model(&self, coalition: &Coalition) -> Result<Rc<CoalitionModel>> {
        if let Some(cached) = self.models.borrow().get(coalition) {
            if let Some(m) = cached {
                return Ok(Rc::clone(m));
            }
        }
        match CoalitionModel::build(self.scenario, coalition, self.cfg.cap) {
            Ok(m) => {
                let m = Rc::new(m);
                self.models
                    .borrow_mut()
                    .insert(coalition.clone(), Some(Rc::clone(&m)));
                Ok(m)
            }
            Err(e) => {
                self.models.borrow_mut().insert(coalition.clone(), None);
                Err(e)
            }
        }
    }

    /// Whether the coalition can be valued at all (within the cap).
    pub fn feasible(&self, coalition: &Coalition) -> bool {
        if let Some(cached) = self.models.borrow().get(coalition) {
            return cached.is_some();
        }
        self.model(coalition).is_ok()
    }

    /// Interference seen by every coalition of the partition.
    pub fn interference(&self, partition: &Partition) -> Result<Vec<InterferenceEstimate>> {
        let models = partition
            .coalitions()
            .iter()
            .map(|c| self.model(c))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&CoalitionModel> = models.iter().map(|m| m.as_ref()).collect();
        Ok(if self.cfg.refine {
            refined_interference(self.scenario, &refs, &self.cfg)
        } else {
            external_interference(self.scenario, &refs)
        })
    }

    /// Interference seen by coalition `idx` of the partition only.
    fn interference_on(&self, partition: &Partition, idx: usize) -> Result<InterferenceEstimate> {
        if self.cfg.refine {
            return Ok(self.interference(partition)?.swap_remove(idx));
        }
        let mut per_user = vec![Vec::new(); self.scenario.n_sus()];
        for (i, c) in partition.coalitions().iter().enumerate() {
            if i != idx {
                for (su, row) in self.model(c)?.radiated(self.scenario) {
                    per_user[su] = row;
                }
            }
        }
        let target = &partition.coalitions()[idx];
        for &su in target.members() {
            per_user[su] = vec![0.0; self.scenario.n_channels()];
        }
        Ok(outside_sum(self.scenario, &per_user, target.members()))
    }

    /// Value of coalition `idx` of the partition.
    pub fn value(&self, partition: &Partition, idx: usize) -> Result<Rc<PayoffVector>> {
        let coalition = &partition.coalitions()[idx];
        let model = self.model(coalition)?;
        let ext = self.interference_on(partition, idx)?;
        self.value_with(coalition, &model, &ext)
    }

    fn value_with(
        &self,
        coalition: &Coalition,
        model: &CoalitionModel,
        ext: &InterferenceEstimate,
    ) -> Result<Rc<PayoffVector>> {
        let bits = model
            .plan
            .shared_channels
            .iter()
            .map(|&ch| ext.per_channel[ch].to_bits())
            .collect();
        let key = (coalition.clone(), bits);
        if let Some(v) = self.values.borrow().get(&key) {
            return Ok(Rc::clone(v));
        }
        let v = Rc::new(PayoffVector {
            coalition: coalition.clone(),
            payoffs: value_model(self.scenario, model, ext, &self.cfg.solver).payoffs,
        });
        self.values.borrow_mut().insert(key, Rc::clone(&v));
        Ok(v)
    }

    /// `x_su(S, Π)` where `S` is the coalition holding `su`.
    pub fn payoff(&self, partition: &Partition, su: usize) -> Result<f64> {
        let idx = partition.index_of(su);
        Ok(self.value(partition, idx)?.of(su).expect("member"))
    }

    /// Payoff of every user, indexed by user id.
    pub fn profile(&self, partition: &Partition) -> Result<Vec<f64>> {
        let ext = self.interference(partition)?;
        let mut out = vec![0.0; self.scenario.n_sus()];
        for (c, e) in partition.coalitions().iter().zip(&ext) {
            let model = self.model(c)?;
            let v = self.value_with(c, &model, e)?;
            for (&su, &x) in c.members().iter().zip(&v.payoffs) {
                out[su] = x;
            }
        }
        Ok(out)
    }

    /// Drops cached values (models stay valid while the scenario is fixed).
    pub fn clear_values(&self) {
        self.values.borrow_mut().clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noncoop::noncoop_profile;
    use crate::scenario::{generate_scenario, PhysParams};

    fn pair(
        positions: [[f64; 2]; 2],
        known: [Vec<usize>; 2],
        thetas: Vec<f64>,
    ) -> Scenario {
        let k = thetas.len();
        let phys = PhysParams {
            area_side: 20_000.0,
            ..PhysParams::default()
        };
        Scenario::from_parts(thetas, positions.to_vec(), known.to_vec(), vec![vec![1.0; k]; 2], phys, 0)
            .unwrap()
    }

    #[test]
    fn singletons_match_noncoop() {
        for seed in 0..5 {
            let s = generate_scenario(6, 14, 3, PhysParams::default(), seed).unwrap();
            let coop = evaluate_partition(&s, &Partition::singletons(6), &ValuationConfig::default()).unwrap();
            let base = noncoop_profile(&s).unwrap();
            for (a, b) in coop.iter().zip(&base) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_user_sees_no_interference() {
        let s = generate_scenario(1, 4, 2, PhysParams::default(), 3).unwrap();
        let x = evaluate_partition(&s, &Partition::singletons(1), &ValuationConfig::default()).unwrap();
        assert_eq!(x, noncoop_profile(&s).unwrap());
    }

    #[test]
    fn grand_coalition_has_no_outside_interference() {
        let s = generate_scenario(3, 6, 2, PhysParams::default(), 1).unwrap();
        let ctx = PartitionContext::build(&s, &Partition::grand(3), &ValuationConfig::default()).unwrap();
        assert!(ctx.ext_interference[0].per_channel.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn disjoint_far_users_gain_from_pooling() {
        // ~6 km out the SNR is ~0.05, so the partner's interference is noise-level
        let s = pair(
            [[6000.0, 0.0], [0.0, 6000.0]],
            [vec![0, 1], vec![2, 3]],
            vec![0.3, 0.5, 0.4, 0.6],
        );
        let cfg = ValuationConfig::default();
        let alone = evaluate_partition(&s, &Partition::singletons(2), &cfg).unwrap();
        let together = evaluate_partition(&s, &Partition::grand(2), &cfg).unwrap();
        assert!(together[0] >= alone[0] && together[1] >= alone[1], "{alone:?} {together:?}");
    }

    #[test]
    fn co_located_twins_pay_for_cooperation() {
        // noise-limited, so little is won by avoiding collisions while the
        // loser of the shared ranking senses the rarely idle channel first
        let s = pair(
            [[6000.0, 0.0], [6000.0, 0.0]],
            [vec![0, 1], vec![0, 1]],
            vec![0.8, 0.3],
        );
        let cfg = ValuationConfig::default();
        let alone = evaluate_partition(&s, &Partition::singletons(2), &cfg).unwrap();
        let together = evaluate_partition(&s, &Partition::grand(2), &cfg).unwrap();
        assert!(together[0] < alone[0] || together[1] < alone[1], "{alone:?} {together:?}");
    }

    #[test]
    fn two_coalitions_on_one_channel() {
        // users 0 and 1 both only know channel 0; interference is one term
        let s = pair([[100.0, 0.0], [0.0, 200.0]], [vec![0], vec![0]], vec![0.6]);
        let ctx = PartitionContext::build(&s, &Partition::singletons(2), &ValuationConfig::default()).unwrap();
        let expect = s.channel_gain(1, 0) * s.phys.p_max * 0.6;
        assert!((ctx.ext_interference[0].per_channel[0] - expect).abs() <= 1e-15 * expect);
    }

    #[test]
    fn outsiders_feel_reorganization() {
        // user 2 shares channels with 0 and 1; merging 0 and 1 changes what 2 sees
        let thetas = vec![0.7, 0.4, 0.5];
        let s = Scenario::from_parts(
            thetas,
            vec![[200.0, 0.0], [0.0, 250.0], [-220.0, 10.0]],
            vec![vec![0, 1], vec![1, 2], vec![0, 2]],
            vec![vec![1.0; 3]; 3],
            PhysParams::default(),
            0,
        )
        .unwrap();
        let cfg = ValuationConfig::default();
        let before = evaluate_partition(&s, &Partition::singletons(3), &cfg).unwrap();
        let after = evaluate_partition(&s, &Partition::from_labels(&[0, 0, 1]), &cfg).unwrap();
        assert!((before[2] - after[2]).abs() > 1e-9);
    }

    #[test]
    fn evaluator_matches_free_function_and_caches() {
        let s = generate_scenario(5, 10, 3, PhysParams::default(), 7).unwrap();
        let cfg = ValuationConfig::default();
        let p = Partition::from_labels(&[0, 1, 0, 2, 1]);
        let ev = Evaluator::new(&s, cfg.clone());
        let a = ev.profile(&p).unwrap();
        let b = evaluate_partition(&s, &p, &cfg).unwrap();
        assert_eq!(a, b);
        for su in 0..5 {
            assert_eq!(ev.payoff(&p, su).unwrap(), a[su]);
        }
        let ctx = PartitionContext::build(&s, &p, &cfg).unwrap();
        let v = coalition_value(&s, &ctx, &p.coalitions()[0], &cfg).unwrap();
        assert_eq!(v.payoffs, vec![a[0], a[2]]);
    }

    #[test]
    fn refinement_stays_nonnegative() {
        let s = generate_scenario(5, 10, 3, PhysParams::default(), 11).unwrap();
        let cfg = ValuationConfig {
            refine: true,
            ..ValuationConfig::default()
        };
        let x = evaluate_partition(&s, &Partition::from_labels(&[0, 0, 1, 1, 2]), &cfg).unwrap();
        assert!(x.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
}
