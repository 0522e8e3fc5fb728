//! Power sharing inside a same-rank group.
//!
//! Members that find their channels in the same sensing step can spread their
//! full budget over every channel the group found, maximizing the group
//! sum-rate. Interference from outside the group is a fixed background.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Iterative solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Weight of the new best response in each damped update.
    pub damping: f64,
    /// Stop once a sweep changes the sum-rate by less than this (bits/s/Hz).
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Grid step of the brute-force check, as a fraction of the budget.
    pub grid_step: f64,
    /// Follow the selfish sweeps with interference-priced restarts.
    pub pricing: bool,
    /// Grid points scored when choosing starting points for the priced runs.
    pub start_budget: usize,
    /// Priced runs started from the best grid points (one more always starts
    /// from the selfish result).
    pub priced_runs: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 1e-8,
            max_sweeps: 200,
            grid_step: 0.01,
            pricing: true,
            start_budget: 64,
            priced_runs: 3,
        }
    }
}

/// Channel gains and background interference of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct RateContext<F> {
    /// `gains[member][channel]`.
    pub gains: Vec<Vec<F>>,
    /// Interference from outside the group, mW, `[member][channel]`.
    pub fixed_interference: Vec<Vec<F>>,
    pub noise: F,
}

impl<F: Scalar> RateContext<F> {
    pub fn n_members(&self) -> usize {
        self.gains.len()
    }

    pub fn n_channels(&self) -> usize {
        self.gains.first().map_or(0, Vec::len)
    }
}

/// `p[member][channel]` in mW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation<F> {
    pub p: Vec<Vec<F>>,
}

impl<F: Scalar> PowerAllocation<F> {
    pub fn uniform(n_members: usize, n_channels: usize, p_max: F) -> Self {
        let share = p_max / F::from_usize(n_channels).expect("channel count");
        Self {
            p: vec![vec![share; n_channels]; n_members],
        }
    }

    /// Largest deviation of a row sum from `p_max`.
    pub fn budget_error(&self, p_max: F) -> F {
        self.p
            .iter()
            .map(|row| (row.iter().copied().sum::<F>() - p_max).abs())
            .fold(F::zero(), F::max)
    }
}

/// Interference plus noise seen by `member` on `channel`.
fn impairment<F: Scalar>(alloc: &PowerAllocation<F>, ctx: &RateContext<F>, member: usize, channel: usize) -> F {
    let mut total = ctx.noise + ctx.fixed_interference[member][channel];
    for (j, row) in alloc.p.iter().enumerate() {
        if j != member {
            total = total + ctx.gains[j][channel] * row[channel];
        }
    }
    total
}

/// Rate of `member` on `channel` under the allocation, bits/s/Hz.
pub fn group_capacity<F: Scalar>(alloc: &PowerAllocation<F>, ctx: &RateContext<F>, member: usize, channel: usize) -> F {
    let p = alloc.p[member][channel];
    if p <= F::zero() {
        return F::zero();
    }
    (F::one() + p * ctx.gains[member][channel] / impairment(alloc, ctx, member, channel)).log2()
}

/// Sum over channels of one member's rates.
pub fn member_rate<F: Scalar>(alloc: &PowerAllocation<F>, ctx: &RateContext<F>, member: usize) -> F {
    (0..ctx.n_channels()).map(|k| group_capacity(alloc, ctx, member, k)).sum()
}

pub fn sum_rate<F: Scalar>(alloc: &PowerAllocation<F>, ctx: &RateContext<F>) -> F {
    (0..ctx.n_members()).map(|i| member_rate(alloc, ctx, i)).sum()
}

/// Single-user waterfilling: maximizes `sum log(1 + ratio_k p_k)` subject to
/// `sum p_k = p_max`, `p_k >= 0`. All-zero ratios fall back to an equal split.
pub fn waterfill<F: Scalar>(ratios: &[F], p_max: F) -> Vec<F> {
    let m = ratios.len();
    if m == 1 {
        return vec![p_max];
    }
    let mut order: Vec<usize> = (0..m).filter(|&k| ratios[k] > F::zero()).collect();
    if order.is_empty() {
        let share = p_max / F::from_usize(m).expect("count");
        return vec![share; m];
    }
    order.sort_by(|&a, &b| ratios[b].partial_cmp(&ratios[a]).expect("finite ratios").then(a.cmp(&b)));

    // Grow the active set while the water level stays above the next floor.
    let mut floor_sum = F::zero();
    let mut active = 0;
    let mut level = F::zero();
    for (count, &k) in order.iter().enumerate() {
        let floor = ratios[k].recip();
        let candidate = (p_max + floor_sum + floor) / F::from_usize(count + 1).expect("count");
        if count > 0 && candidate <= floor {
            break;
        }
        floor_sum = floor_sum + floor;
        active = count + 1;
        level = candidate;
    }
    let mut p = vec![F::zero(); m];
    for &k in &order[..active] {
        p[k] = (level - ratios[k].recip()).max(F::zero());
    }
    if active == 1 {
        p[order[0]] = p_max;
    }
    p
}

/// Waterfilling against linear interference prices: maximizes
/// `sum ln(1 + ratio_k p_k) - sum price_k p_k` subject to `sum p_k = p_max`.
/// Zero prices reduce to [`waterfill`].
pub fn priced_waterfill<F: Scalar>(ratios: &[F], prices: &[F], p_max: F) -> Vec<F> {
    if prices.iter().all(|&x| x <= F::zero()) || ratios.len() == 1 {
        return waterfill(ratios, p_max);
    }
    let live: Vec<usize> = (0..ratios.len()).filter(|&k| ratios[k] > F::zero()).collect();
    if live.is_empty() {
        return waterfill(ratios, p_max);
    }
    let power = |k: usize, lambda: F| ((lambda + prices[k]).recip() - ratios[k].recip()).max(F::zero());
    let total_at = |lambda: F| live.iter().fold(F::zero(), |acc, &k| acc + power(k, lambda));
    // cheapest channel (strongest on ties) alone absorbs the budget at `lo`
    let c = *live
        .iter()
        .min_by(|&&a, &&b| {
            prices[a]
                .partial_cmp(&prices[b])
                .expect("finite prices")
                .then(ratios[b].partial_cmp(&ratios[a]).expect("finite ratios"))
        })
        .expect("nonempty");
    let mut lo = (p_max + ratios[c].recip()).recip() - prices[c];
    let mut hi = live
        .iter()
        .map(|&k| ratios[k] - prices[k])
        .fold(F::neg_infinity(), F::max);
    let two = F::lit(2.0);
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if total_at(mid) > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut p = vec![F::zero(); ratios.len()];
    for &k in &live {
        p[k] = power(k, lo);
    }
    let total: F = p.iter().copied().sum();
    if total > F::zero() {
        for x in &mut p {
            *x = *x * p_max / total;
        }
    } else {
        p[c] = p_max;
    }
    p
}

/// Marginal sum-rate loss (natural-log units) per mW that `member` inflicts on
/// the rest of the group on each channel.
fn interference_prices<F: Scalar>(alloc: &PowerAllocation<F>, ctx: &RateContext<F>, member: usize) -> Vec<F> {
    (0..ctx.n_channels())
        .map(|k| {
            let mut price = F::zero();
            for j in (0..ctx.n_members()).filter(|&j| j != member) {
                let signal = ctx.gains[j][k] * alloc.p[j][k];
                if signal > F::zero() {
                    let imp = impairment(alloc, ctx, j, k);
                    price = price + signal / (imp * (imp + signal));
                }
            }
            price * ctx.gains[member][k]
        })
        .collect()
}

/// Outcome of [`allocate_traced`].
#[derive(Debug, Clone)]
pub struct SolverReport<F> {
    pub allocation: PowerAllocation<F>,
    pub sum_rate: F,
    pub sweeps: usize,
    pub converged: bool,
    /// Best sum-rate seen after each sweep (the initial point first).
    pub best_history: Vec<F>,
}

/// Maximizes the group sum-rate subject to every member spending exactly
/// `p_max`. See [`allocate_traced`].
pub fn allocate<F: Scalar>(ctx: &RateContext<F>, p_max: F, cfg: &SolverConfig) -> PowerAllocation<F> {
    allocate_traced(ctx, p_max, cfg).allocation
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

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Member `i` on channel `(i + shift) mod m`, for every shift.
fn cyclic_starts<F: Scalar>(n: usize, m: usize, p_max: F) -> Vec<PowerAllocation<F>> {
    (0..m)
        .map(|shift| PowerAllocation {
            p: (0..n)
                .map(|i| {
                    let mut row = vec![F::zero(); m];
                    row[(i + shift) % m] = p_max;
                    row
                })
                .collect(),
        })
        .collect()
}

/// Starting points for the priced runs: a coarse grid over every member's
/// budget split, as fine as `budget` points allow (at the coarsest, each
/// member puts its whole budget on one channel), ranked by sum-rate. Up to
/// `keep` points are returned, each at least two grid steps from the others.
/// Groups too large for even the coarsest grid get cyclic single-channel
/// assignments instead.
fn grid_starts<F: Scalar>(ctx: &RateContext<F>, p_max: F, budget: usize, keep: usize) -> Vec<PowerAllocation<F>> {
    let (n, m) = (ctx.n_members(), ctx.n_channels());
    let points = |steps: usize| binomial(steps + m - 1, m - 1).powi(n as i32);
    if points(1) > budget as f64 {
        return cyclic_starts(n, m, p_max).into_iter().take(keep).collect();
    }
    let mut steps = 1;
    while points(steps + 1) <= budget as f64 {
        steps += 1;
    }
    let rows: Vec<Vec<F>> = compositions(steps, m)
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|x| p_max * F::from_usize(x).expect("count") / F::from_usize(steps).expect("count"))
                .collect()
        })
        .collect();

    let mut scored: Vec<(F, Vec<usize>)> = Vec::new();
    let mut idx = vec![0usize; n];
    let mut alloc = PowerAllocation {
        p: vec![rows[0].clone(); n],
    };
    'grid: loop {
        for (row, &i) in alloc.p.iter_mut().zip(&idx) {
            row.copy_from_slice(&rows[i]);
        }
        scored.push((sum_rate(&alloc, ctx), idx.clone()));
        let mut d = 0;
        loop {
            if d == n {
                break 'grid;
            }
            idx[d] += 1;
            if idx[d] < rows.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
    // stable sort: ties keep grid order
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite rates"));

    let gap = p_max * F::lit(2.0) / F::from_usize(steps).expect("count");
    let mut chosen: Vec<PowerAllocation<F>> = Vec::new();
    for (_, idx) in scored {
        if chosen.len() == keep {
            break;
        }
        let cand = PowerAllocation {
            p: idx.iter().map(|&i| rows[i].clone()).collect(),
        };
        let far = chosen.iter().all(|c| {
            c.p.iter()
                .flatten()
                .zip(cand.p.iter().flatten())
                .any(|(a, b)| (*a - *b).abs() >= gap)
        });
        if far {
            chosen.push(cand);
        }
    }
    chosen
}

/// Group sum-rate maximization in two stages, keeping the best iterate seen:
///
/// 1. damped iterative waterfilling from the uniform split, each member in
///    turn waterfilling its budget against the current interference;
/// 2. the same damped sweeps with interference-priced best responses (each
///    member also charges itself for the rate it takes from the others),
///    when `pricing` is
///    on, from the selfish result and from the best points of a coarse grid.
///    Selfish waterfilling alone settles in equilibria where members share
///    channels they would do better to split, and the sum-rate can have
///    several separated peaks even along one member's split.
///
/// Every returned allocation spends exactly `p_max` per member.
pub fn allocate_traced<F: Scalar>(ctx: &RateContext<F>, p_max: F, cfg: &SolverConfig) -> SolverReport<F> {
    let n = ctx.n_members();
    let m = ctx.n_channels();
    assert!(n > 0 && m > 0, "allocation needs members and channels");

    if m == 1 {
        let allocation = PowerAllocation {
            p: vec![vec![p_max]; n],
        };
        let sr = sum_rate(&allocation, ctx);
        return SolverReport {
            allocation,
            sum_rate: sr,
            sweeps: 0,
            converged: true,
            best_history: vec![sr],
        };
    }

    let start = PowerAllocation::uniform(n, m, p_max);
    let mut report = SolverReport {
        sum_rate: sum_rate(&start, ctx),
        allocation: start.clone(),
        sweeps: 0,
        converged: false,
        best_history: Vec::new(),
    };
    report.best_history.push(report.sum_rate);
    report.converged = sweep(ctx, p_max, cfg, start, false, &mut report);
    if cfg.pricing && n > 1 {
        let selfish = report.allocation.clone();
        for s in grid_starts(ctx, p_max, cfg.start_budget, cfg.priced_runs).into_iter().chain([selfish]) {
            sweep(ctx, p_max, cfg, s, true, &mut report);
        }
    }
    report
}

/// Damped sweeps from `current` until the sum-rate settles; folds every
/// iterate into `report`. Returns whether it settled within the sweep cap.
fn sweep<F: Scalar>(
    ctx: &RateContext<F>,
    p_max: F,
    cfg: &SolverConfig,
    mut current: PowerAllocation<F>,
    priced: bool,
    report: &mut SolverReport<F>,
) -> bool {
    let n = ctx.n_members();
    let m = ctx.n_channels();
    // priced responses maximize a minorant of the sum-rate that is tight at
    // the current point, so they climb without damping
    let damping = if priced { F::one() } else { F::lit(cfg.damping) };
    let keep = F::one() - damping;
    let tolerance = F::lit(cfg.tolerance);

    let mut current_rate = sum_rate(&current, ctx);
    let record = |alloc: &PowerAllocation<F>, rate: F, report: &mut SolverReport<F>| {
        if rate > report.sum_rate {
            report.sum_rate = rate;
            report.allocation = alloc.clone();
        }
    };
    record(&current, current_rate, report);
    for _ in 0..cfg.max_sweeps {
        report.sweeps += 1;
        for i in 0..n {
            let ratios: Vec<F> = (0..m)
                .map(|k| ctx.gains[i][k] / impairment(&current, ctx, i, k))
                .collect();
            let target = if priced {
                priced_waterfill(&ratios, &interference_prices(&current, ctx, i), p_max)
            } else {
                waterfill(&ratios, p_max)
            };
            for (p, t) in current.p[i].iter_mut().zip(target) {
                *p = keep * *p + damping * t;
            }
        }
        let rate = sum_rate(&current, ctx);
        record(&current, rate, report);
        report.best_history.push(report.sum_rate);
        let change = (rate - current_rate).abs();
        current_rate = rate;
        if change < tolerance {
            return true;
        }
    }
    false
}
