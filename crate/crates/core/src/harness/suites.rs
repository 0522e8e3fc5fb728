//! Brute-force verification suites.
//!
//! Each suite draws one random instance per case seed, checks the engine
//! against an independent oracle and reports failures instead of panicking,
//! so the same code backs the `oracle` preset and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coopsort::{build_plan, build_plan_traced};
use crate::error::Result;
use crate::formation::{audit_with, form_with, FormationConfig};
use crate::noncoop::{noncoop_profile, sensing_time};
use crate::oracle;
use crate::outcomes::{enumerate_outcomes, DEFAULT_ENUMERATION_CAP};
use crate::partition::Partition;
use crate::power::{allocate, sum_rate, RateContext, SolverConfig};
use crate::scenario::{generate_scenario, PhysParams, Scenario};
use crate::valuation::{evaluate_partition, Evaluator, ValuationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: usize,
    /// One message per failing case (capped at a few for readability).
    pub failures: Vec<String>,
    pub n_failed: usize,
    /// Largest absolute (or relative, where stated) error seen.
    pub max_error: f64,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.to_string(),
            cases: 0,
            failures: Vec::new(),
            n_failed: 0,
            max_error: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.n_failed == 0 && self.cases > 0
    }

    fn case(&mut self, error: f64, failure: Option<String>) {
        self.cases += 1;
        if error.is_nan() {
            self.max_error = f64::NAN;
        } else if !self.max_error.is_nan() {
            self.max_error = self.max_error.max(error);
        }
        if let Some(msg) = failure {
            self.n_failed += 1;
            if self.failures.len() < 5 {
                self.failures.push(msg);
            }
        }
    }
}

pub const SUITES: [&str; 7] = [
    "probability",
    "sensing_time",
    "ranking",
    "power",
    "valuation",
    "stability",
    "noncoop_consistency",
];

fn case_rng(suite: u64, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5eed_0000 + suite);
    rng
}

fn small_scenario(rng: &mut ChaCha8Rng, n: usize, k: usize, k_i: usize) -> Result<Scenario> {
    let phys = PhysParams {
        alpha: rng.random_range(0.01..0.5),
        area_side: rng.random_range(500.0..4000.0),
        ..PhysParams::default()
    };
    generate_scenario(n, k, k_i, phys, rng.random())
}

/// Outcome probabilities against the pushforward of all `2^K_S` realizations
/// (`|S| <= 3`, `K_S <= 6`).
pub fn probability_suite(seeds: &[u64]) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("probability");
    for &seed in seeds {
        let mut rng = case_rng(1, seed);
        let n = rng.random_range(1..=3);
        let k = rng.random_range(1..=6);
        let k_i = rng.random_range(1..=k.min(3));
        let s = small_scenario(&mut rng, n, k, k_i)?;
        let members: Vec<usize> = (0..n).collect();
        let plan = build_plan(&s, &members)?;
        let thetas = s.thetas();
        let dist = enumerate_outcomes(&plan, &thetas, DEFAULT_ENUMERATION_CAP)?;
        let truth = oracle::outcomes_by_realizations(&plan, &thetas);

        let mut err: f64 = 0.0;
        let mut msg = None;
        for t in &dist.tuples {
            let want = truth.get(&t.assignment).copied().unwrap_or(0.0);
            err = err.max((t.prob - want).abs());
        }
        for (assignment, p) in &truth {
            if !dist.tuples.iter().any(|t| &t.assignment == assignment) {
                err = err.max(*p);
            }
        }
        let mass = dist.total_mass();
        if err > 1e-12 {
            msg = Some(format!("seed {seed}: tuple error {err:e}"));
        } else if (mass - 1.0).abs() > 1e-9 {
            msg = Some(format!("seed {seed}: mass {mass}"));
        }
        report.case(err, msg);
    }
    Ok(report)
}

/// Closed-form sensing time against all `2^K` realizations (`K <= 10`).
pub fn sensing_time_suite(seeds: &[u64]) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("sensing_time");
    for &seed in seeds {
        let mut rng = case_rng(2, seed);
        let k = rng.random_range(1..=10);
        let thetas: Vec<f64> = (0..k).map(|_| rng.random()).collect();
        let alpha = rng.random_range(0.01..0.5);
        let closed = sensing_time(&thetas, alpha);
        let brute = oracle::sensing_time_by_realizations(&thetas, alpha);
        let err = (closed - brute).abs();
        report.case(err, (err > 1e-12).then(|| format!("seed {seed}: {closed} vs {brute}")));
    }
    Ok(report)
}

/// Cooperative ranking: permutations, forced same-rank collisions, weight
/// priority in conflicts.
pub fn ranking_suite(seeds: &[u64]) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("ranking");
    for &seed in seeds {
        let mut rng = case_rng(3, seed);
        let n = rng.random_range(2..=5);
        let k = rng.random_range(1..=10);
        let k_i = rng.random_range(1..=k);
        let s = small_scenario(&mut rng, n, k, k_i)?;
        let size = rng.random_range(1..=n);
        let members: Vec<usize> = rand::seq::index::sample(&mut rng, n, size).into_vec();
        let (plan, picks) = build_plan_traced(&s, &members)?;
        let bad = oracle::ranking_violations(&s, &plan, &picks);
        let failure = (!bad.is_empty()).then(|| format!("seed {seed}: {}", bad.join("; ")));
        report.case(bad.len() as f64, failure);
    }
    Ok(report)
}

/// Two members on two channels: the solver's sum-rate against a grid search
/// with step `P/100` (relative error), plus budget feasibility.
pub fn power_suite(seeds: &[u64]) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("power");
    let cfg = SolverConfig::default();
    for &seed in seeds {
        let mut rng = case_rng(4, seed);
        let mut draw = || 10f64.powf(rng.random_range(-1.5..1.5));
        let gains = vec![vec![draw(), draw()], vec![draw(), draw()]];
        let fixed_interference = vec![vec![0.1 * draw(), 0.1 * draw()], vec![0.1 * draw(), 0.1 * draw()]];
        let noise = 0.1 * draw();
        let ctx = RateContext {
            gains,
            fixed_interference,
            noise,
        };
        let p_max = 1.0;
        let alloc = allocate(&ctx, p_max, &cfg);
        let ours = sum_rate(&alloc, &ctx);
        let (_, grid) = oracle::grid_power_optimum(&ctx, p_max, 100);
        let shortfall = ((grid - ours) / grid).max(0.0);
        let infeasible = alloc.budget_error(p_max) > 1e-9 || alloc.p.iter().flatten().any(|&p| p < -1e-9);
        let failure = if shortfall > 1e-3 {
            Some(format!("seed {seed}: sum-rate {ours} below grid {grid}"))
        } else if infeasible {
            Some(format!("seed {seed}: allocation {:?} breaks the budget", alloc.p))
        } else {
            None
        };
        report.case(shortfall, failure);
    }
    Ok(report)
}

/// Partition payoffs against a straight-line re-derivation built on
/// realization enumeration (relative error).
pub fn valuation_suite(seeds: &[u64]) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("valuation");
    let cfg = ValuationConfig::default();
    for &seed in seeds {
        let mut rng = case_rng(5, seed);
        let n = rng.random_range(1..=4);
        let k = rng.random_range(2..=6);
        let k_i = rng.random_range(1..=k.min(3));
        let s = small_scenario(&mut rng, n, k, k_i)?;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let partition = Partition::from_labels(&labels);
        let ours = evaluate_partition(&s, &partition, &cfg)?;
        let straight = oracle::straight_line_payoffs(&s, &partition, &cfg.solver)?;
        let err = ours
            .iter()
            .zip(&straight)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        report.case(err, (err > 1e-9).then(|| format!("seed {seed}: {partition} {ours:?} vs {straight:?}")));
    }
    Ok(report)
}

/// Formation on small networks converges, replays, and passes the
/// exhaustive fresh-history audit.
pub fn stability_suite(seeds: &[u64]) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("stability");
    let cfg = FormationConfig::default();
    for &seed in seeds {
        let mut rng = case_rng(6, seed);
        let n = rng.random_range(2..=6);
        let k = rng.random_range(4..=10);
        let s = small_scenario(&mut rng, n, k, 3.min(k))?;
        let ev = Evaluator::new(&s, cfg.valuation.clone());
        let failure = match form_with(&ev, &Partition::singletons(n), seed, &cfg) {
            Err(e) => Some(format!("seed {seed}: {e}")),
            Ok(trace) => {
                let audit = audit_with(&ev, &trace.final_partition)?;
                if trace.replay()? != trace.final_partition {
                    Some(format!("seed {seed}: replay differs"))
                } else if !audit.stable {
                    Some(format!("seed {seed}: {} deviations", audit.violations.len()))
                } else {
                    None
                }
            }
        };
        report.case(failure.is_some() as u8 as f64, failure);
    }
    Ok(report)
}

/// All-singleton partitions are valued exactly like the non-cooperative
/// baseline.
pub fn noncoop_consistency_suite(seeds: &[u64]) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("noncoop_consistency");
    let cfg = ValuationConfig::default();
    for &seed in seeds {
        let mut rng = case_rng(7, seed);
        let n = rng.random_range(1..=12);
        let k = rng.random_range(2..=14);
        let k_i = rng.random_range(1..=k.min(5));
        let s = small_scenario(&mut rng, n, k, k_i)?;
        let ours = evaluate_partition(&s, &Partition::singletons(n), &cfg)?;
        let base = noncoop_profile(&s)?;
        let err = ours.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        report.case(err, (err > 1e-12).then(|| format!("seed {seed}: {ours:?} vs {base:?}")));
    }
    Ok(report)
}

/// Runs the named suite.
pub fn run_suite(name: &str, seeds: &[u64]) -> Result<SuiteReport> {
    match name {
        "probability" => probability_suite(seeds),
        "sensing_time" => sensing_time_suite(seeds),
        "ranking" => ranking_suite(seeds),
        "power" => power_suite(seeds),
        "valuation" => valuation_suite(seeds),
        "stability" => stability_suite(seeds),
        "noncoop_consistency" => noncoop_consistency_suite(seeds),
        other => Err(crate::Error::InvalidInput(format!("unknown suite `{other}`"))),
    }
}
