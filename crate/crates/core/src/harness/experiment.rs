//! Experiment presets and the grid × seeds runner.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::suites::{run_suite, SuiteReport, SUITES};
use crate::dynamics::{lifespan_stats, run_dynamics, switch_frequency, DynamicsParams, EpochRecord};
use crate::error::{Error, Result};
use crate::formation::{audit_with, form_with, optimal_partition, MAX_EXHAUSTIVE_USERS};
use crate::noncoop::noncoop_profile;
use crate::partition::Partition;
use crate::scenario::Scenario;
use crate::valuation::{evaluate_partition, Evaluator};

/// Channel availabilities of the published nine-user snapshot.
pub const SNAPSHOT_THETAS: [f64; 14] = [
    0.98, 0.22, 0.64, 0.81, 0.058, 0.048, 0.067, 0.94, 0.18, 0.25, 0.17, 0.15, 0.23, 0.36,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    SweepN,
    SweepAlpha,
    SweepK,
    Sizes,
    Traffic,
    Mobility,
    Snapshot,
    Oracle,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::SweepN,
        Preset::SweepAlpha,
        Preset::SweepK,
        Preset::Sizes,
        Preset::Traffic,
        Preset::Mobility,
        Preset::Snapshot,
        Preset::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::SweepN => "sweep_n",
            Preset::SweepAlpha => "sweep_alpha",
            Preset::SweepK => "sweep_k",
            Preset::Sizes => "sizes",
            Preset::Traffic => "traffic",
            Preset::Mobility => "mobility",
            Preset::Snapshot => "snapshot",
            Preset::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| Error::config("preset", format!("unknown preset `{s}`")))
    }

    fn is_dynamic(self) -> bool {
        matches!(self, Preset::Traffic | Preset::Mobility)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config("format", format!("expected csv or json, got `{other}`"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub speed_kmh: f64,
}

impl GridPoint {
    fn key(&self) -> (usize, usize, u64, u64) {
        (self.n, self.k, self.alpha.to_bits(), self.speed_kmh.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub grid: Vec<GridPoint>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub format: Format,
    /// Everything not varied by the grid.
    pub base: SimConfig,
    /// Used by the dynamic presets; the grid supplies the speed.
    pub dynamics: DynamicsParams,
    /// Exhaustive optimum for grid points with at most this many users.
    pub optimal_max_n: usize,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl ExperimentSpec {
    /// The preset's default grid and settings on top of `base`.
    pub fn new(preset: Preset, base: SimConfig, seeds: Vec<u64>, out: impl Into<PathBuf>) -> Self {
        let point = |n, k, alpha, speed_kmh| GridPoint {
            n,
            k,
            alpha,
            speed_kmh,
        };
        let (n, k, a) = (base.n_sus, base.n_channels, base.alpha);
        let grid = match preset {
            Preset::SweepN | Preset::Sizes => (4..=20).step_by(2).map(|n| point(n, 14, a, 0.0)).collect(),
            Preset::SweepAlpha => [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]
                .into_iter()
                .map(|a| point(10, 14, a, 0.0))
                .collect(),
            Preset::SweepK => (10..=20).step_by(2).map(|k| point(10, k, a, 0.0)).collect(),
            Preset::Traffic => vec![point(10, 14, a, 0.0)],
            Preset::Mobility => [10, 15]
                .into_iter()
                .flat_map(|n| [18.0, 36.0, 72.0].map(|v| point(n, 14, a, v)))
                .collect(),
            Preset::Snapshot => vec![point(9, 14, a, 0.0)],
            Preset::Oracle => vec![point(n, k, a, 0.0)],
        };
        let dynamics = match preset {
            Preset::Traffic => DynamicsParams {
                eta_seconds: 60.0,
                duration_seconds: 240.0,
                speed_kmh: 0.0,
                traffic_redraw_seconds: 60.0,
                freeze_fading: true,
            },
            Preset::Mobility => DynamicsParams {
                eta_seconds: 30.0,
                duration_seconds: 150.0,
                speed_kmh: 0.0,
                traffic_redraw_seconds: 0.0,
                freeze_fading: true,
            },
            _ => base.dynamics,
        };
        let optimal_max_n = if preset == Preset::SweepN { MAX_EXHAUSTIVE_USERS } else { 0 };
        Self {
            preset,
            grid,
            seeds,
            out: out.into(),
            format: Format::Csv,
            base,
            dynamics,
            optimal_max_n,
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("grid", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        if self.jobs == Some(0) {
            return Err(Error::config("jobs", "must be >= 1"));
        }
        if self.optimal_max_n > MAX_EXHAUSTIVE_USERS {
            return Err(Error::config(
                "optimal_max_n",
                format!("exhaustive search is limited to {MAX_EXHAUSTIVE_USERS} users"),
            ));
        }
        for p in &self.grid {
            self.config_at(p).validate()?;
        }
        self.dynamics.validate()
    }

    fn config_at(&self, p: &GridPoint) -> SimConfig {
        let mut cfg = self.base.clone();
        cfg.n_sus = p.n;
        cfg.n_channels = p.k;
        cfg.alpha = p.alpha;
        cfg.k_i = cfg.k_i.min(p.k);
        if self.preset == Preset::Snapshot && cfg.theta_list.is_none() && p.k == SNAPSHOT_THETAS.len() {
            cfg.theta_list = Some(SNAPSHOT_THETAS.to_vec());
        }
        if cfg.theta_list.as_ref().is_some_and(|t| t.len() != p.k) {
            cfg.theta_list = None;
        }
        cfg
    }
}

/// One seed at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub speed_kmh: f64,
    pub mean_noncoop_payoff: f64,
    pub mean_coop_payoff: f64,
    pub optimal_welfare: Option<f64>,
    pub avg_coalition_size: f64,
    pub max_coalition_size: usize,
    pub avg_known_channels: f64,
    pub max_known_channels: usize,
    /// Formation switches; for dynamic presets, the total over all epochs.
    pub switch_count: usize,
    pub stable: bool,
    pub switches_per_min: Option<f64>,
    pub mean_lifespan_s: Option<f64>,
    /// Wall time; emitted to the timing sidecar only, so that tables stay
    /// reproducible.
    pub runtime_ms: f64,
}

impl ResultRow {
    pub fn point(&self) -> GridPoint {
        GridPoint {
            n: self.n,
            k: self.k,
            alpha: self.alpha,
            speed_kmh: self.speed_kmh,
        }
    }
}

/// Mean and standard error of one column at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, stderr, count: n })
    }
}

/// Columns averaged in the summary, with their accessor.
pub const SUMMARY_COLUMNS: [&str; 10] = [
    "mean_noncoop_payoff",
    "mean_coop_payoff",
    "optimal_welfare",
    "avg_coalition_size",
    "max_coalition_size",
    "avg_known_channels",
    "max_known_channels",
    "switch_count",
    "switches_per_min",
    "mean_lifespan_s",
];

fn column(row: &ResultRow, name: &str) -> Option<f64> {
    Some(match name {
        "mean_noncoop_payoff" => row.mean_noncoop_payoff,
        "mean_coop_payoff" => row.mean_coop_payoff,
        "optimal_welfare" => row.optimal_welfare?,
        "avg_coalition_size" => row.avg_coalition_size,
        "max_coalition_size" => row.max_coalition_size as f64,
        "avg_known_channels" => row.avg_known_channels,
        "max_known_channels" => row.max_known_channels as f64,
        "switch_count" => row.switch_count as f64,
        "switches_per_min" => row.switches_per_min?,
        "mean_lifespan_s" => row.mean_lifespan_s?,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub point: GridPoint,
    pub seeds: usize,
    /// Aligned with [`SUMMARY_COLUMNS`].
    pub stats: Vec<Option<Stat>>,
}

impl SummaryRow {
    pub fn stat(&self, name: &str) -> Option<Stat> {
        let idx = SUMMARY_COLUMNS.iter().position(|c| *c == name)?;
        self.stats[idx]
    }
}

/// A plot-ready `(x, y, stderr)` series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub points: Vec<(f64, f64, f64)>,
}

/// An extra output file produced by some presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub file_name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub preset: Preset,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub series: Vec<Series>,
    pub suites: Vec<SuiteReport>,
    pub attachments: Vec<Attachment>,
}

struct TaskOutput {
    row: ResultRow,
    epochs: Vec<EpochRecord>,
    snapshot: Option<serde_json::Value>,
}

fn partition_shape(scenario: &Scenario, partition: &Partition) -> (f64, usize, f64, usize) {
    let sizes: Vec<usize> = partition.coalitions().iter().map(|c| c.len()).collect();
    let known: Vec<usize> = partition
        .coalitions()
        .iter()
        .map(|c| {
            let mut ch: Vec<usize> = c
                .members()
                .iter()
                .flat_map(|&i| scenario.sus[i].known_channels.iter().copied())
                .collect();
            ch.sort_unstable();
            ch.dedup();
            ch.len()
        })
        .collect();
    let m = sizes.len() as f64;
    (
        sizes.iter().sum::<usize>() as f64 / m,
        sizes.iter().copied().max().unwrap_or(0),
        known.iter().sum::<usize>() as f64 / m,
        known.iter().copied().max().unwrap_or(0),
    )
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn snapshot_record(scenario: &Scenario, partition: &Partition, payoffs: &[f64], seed: u64) -> Result<serde_json::Value> {
    let mut coalitions = Vec::new();
    for c in partition.coalitions() {
        let plan = crate::coopsort::build_plan(scenario, c.members())?;
        coalitions.push(serde_json::json!({
            "members": c.members(),
            "shared_channels": plan.shared_channels,
            "orderings": plan.orderings,
            "payoffs": c.members().iter().map(|&i| super::emit::round_sig(payoffs[i])).collect::<Vec<_>>(),
        }));
    }
    Ok(serde_json::json!({
        "seed": seed,
        "partition": partition.fingerprint(),
        "thetas": scenario.thetas(),
        "coalitions": coalitions,
    }))
}

fn run_task(spec: &ExperimentSpec, point: &GridPoint, seed: u64) -> Result<TaskOutput> {
    let start = Instant::now();
    let cfg = spec.config_at(point);
    let scenario = cfg.scenario(seed)?;
    let formation = &cfg.formation;
    let noncoop = noncoop_profile(&scenario)?;

    let mut epochs = Vec::new();
    let mut snapshot = None;
    let (partition, coop, switch_count, stable, switches_per_min, mean_lifespan_s) = if spec.preset.is_dynamic() {
        let params = DynamicsParams {
            speed_kmh: point.speed_kmh,
            ..spec.dynamics
        };
        let run = run_dynamics(&scenario, &params, seed, formation)?;
        let initial = run.epochs[0].partition.clone();
        let coop = evaluate_partition(&scenario, &initial, &formation.valuation)?;
        let total = run.metrics.switch_counts.iter().sum();
        let freq = switch_frequency(&run.metrics);
        let life = lifespan_stats(&run.metrics);
        epochs = run.epochs;
        (initial, coop, total, true, Some(freq), life)
    } else {
        let ev = Evaluator::new(&scenario, formation.valuation.clone());
        let trace = form_with(&ev, &Partition::singletons(point.n), seed, formation)?;
        let coop = ev.profile(&trace.final_partition)?;
        let stable = audit_with(&ev, &trace.final_partition)?.stable;
        if spec.preset == Preset::Snapshot {
            snapshot = Some(snapshot_record(&scenario, &trace.final_partition, &coop, seed)?);
        }
        (trace.final_partition, coop, trace.switches.len(), stable, None, None)
    };

    let optimal_welfare = if point.n <= spec.optimal_max_n {
        Some(optimal_partition(&scenario, &formation.valuation)?.1)
    } else {
        None
    };
    let (avg_size, max_size, avg_known, max_known) = partition_shape(&scenario, &partition);
    let row = ResultRow {
        seed,
        n: point.n,
        k: point.k,
        alpha: point.alpha,
        speed_kmh: point.speed_kmh,
        mean_noncoop_payoff: mean(&noncoop),
        mean_coop_payoff: mean(&coop),
        optimal_welfare,
        avg_coalition_size: avg_size,
        max_coalition_size: max_size,
        avg_known_channels: avg_known,
        max_known_channels: max_known,
        switch_count,
        stable,
        switches_per_min,
        mean_lifespan_s,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(TaskOutput { row, epochs, snapshot })
}

fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = rows[start].point().key();
        let end = start + rows[start..].iter().take_while(|r| r.point().key() == key).count();
        let group = &rows[start..end];
        let stats = SUMMARY_COLUMNS
            .iter()
            .map(|c| Stat::of(&group.iter().filter_map(|r| column(r, c)).collect::<Vec<_>>()))
            .collect();
        out.push(SummaryRow {
            point: rows[start].point(),
            seeds: group.len(),
            stats,
        });
        start = end;
    }
    out
}

fn series_of(summary: &[SummaryRow], name: &str, x_label: &str, column: &str, x: impl Fn(&GridPoint) -> f64) -> Series {
    Series {
        name: name.to_string(),
        x_label: x_label.to_string(),
        points: summary
            .iter()
            .filter_map(|s| s.stat(column).map(|st| (x(&s.point), st.mean, st.stderr)))
            .collect(),
    }
}

fn preset_series(preset: Preset, summary: &[SummaryRow]) -> Vec<Series> {
    match preset {
        Preset::SweepN => vec![
            series_of(summary, "noncoop", "n", "mean_noncoop_payoff", |p| p.n as f64),
            series_of(summary, "coop", "n", "mean_coop_payoff", |p| p.n as f64),
            // Welfare is a sum; plot it per user next to the other two.
            {
                let mut s = series_of(summary, "optimal", "n", "optimal_welfare", |p| p.n as f64);
                for pt in &mut s.points {
                    pt.1 /= pt.0;
                    pt.2 /= pt.0;
                }
                s
            },
        ],
        Preset::SweepAlpha => vec![
            series_of(summary, "noncoop", "alpha", "mean_noncoop_payoff", |p| p.alpha),
            series_of(summary, "coop", "alpha", "mean_coop_payoff", |p| p.alpha),
        ],
        Preset::SweepK => vec![
            series_of(summary, "noncoop", "k", "mean_noncoop_payoff", |p| p.k as f64),
            series_of(summary, "coop", "k", "mean_coop_payoff", |p| p.k as f64),
        ],
        Preset::Sizes => vec![
            series_of(summary, "avg_size", "n", "avg_coalition_size", |p| p.n as f64),
            series_of(summary, "max_size", "n", "max_coalition_size", |p| p.n as f64),
            series_of(summary, "avg_known", "n", "avg_known_channels", |p| p.n as f64),
            series_of(summary, "max_known", "n", "max_known_channels", |p| p.n as f64),
        ],
        Preset::Mobility => {
            let mut ns: Vec<usize> = summary.iter().map(|s| s.point.n).collect();
            ns.dedup();
            ns.into_iter()
                .flat_map(|n| {
                    let at_n: Vec<SummaryRow> = summary.iter().filter(|s| s.point.n == n).cloned().collect();
                    [
                        series_of(&at_n, &format!("switch_rate_n{n}"), "speed_kmh", "switches_per_min", |p| p.speed_kmh),
                        series_of(&at_n, &format!("lifespan_n{n}"), "speed_kmh", "mean_lifespan_s", |p| p.speed_kmh),
                    ]
                })
                .collect()
        }
        Preset::Traffic | Preset::Snapshot | Preset::Oracle => Vec::new(),
    }
}

/// Per-epoch averages over seeds: coalition count and switches.
fn traffic_series(outputs: &[TaskOutput]) -> Vec<Series> {
    let epochs = outputs.iter().map(|o| o.epochs.len()).max().unwrap_or(0);
    let mut coalitions = Vec::new();
    let mut switches = Vec::new();
    for e in 0..epochs {
        let recs: Vec<&EpochRecord> = outputs.iter().filter_map(|o| o.epochs.get(e)).collect();
        let t = recs[0].time_s;
        let c = Stat::of(&recs.iter().map(|r| r.partition.len() as f64).collect::<Vec<_>>()).expect("nonempty");
        let s = Stat::of(&recs.iter().map(|r| r.switches as f64).collect::<Vec<_>>()).expect("nonempty");
        coalitions.push((t, c.mean, c.stderr));
        switches.push((t, s.mean, s.stderr));
    }
    vec![
        Series {
            name: "coalitions".into(),
            x_label: "time_s".into(),
            points: coalitions,
        },
        Series {
            name: "switches".into(),
            x_label: "time_s".into(),
            points: switches,
        },
    ]
}

fn epoch_attachment(outputs: &[TaskOutput]) -> Attachment {
    let mut text = String::from("seed,n,speed_kmh,epoch,time_s,traffic_redrawn,switches,coalitions,partition\n");
    for o in outputs {
        for e in &o.epochs {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},\"{}\"\n",
                o.row.seed,
                o.row.n,
                super::emit::fmt_sig(o.row.speed_kmh),
                e.epoch,
                super::emit::fmt_sig(e.time_s),
                e.traffic_redrawn,
                e.switches,
                e.partition.len(),
                e.partition.fingerprint()
            ));
        }
    }
    Attachment {
        file_name: "epochs.csv".into(),
        contents: text,
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every grid point for every seed and aggregates per grid point.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    if spec.preset == Preset::Oracle {
        let suites = with_pool(spec.jobs, || {
            SUITES
                .par_iter()
                .map(|name| run_suite(name, &spec.seeds))
                .collect::<Result<Vec<_>>>()
        })??;
        return Ok(ResultTable {
            preset: spec.preset,
            rows: Vec::new(),
            summary: Vec::new(),
            series: Vec::new(),
            suites,
            attachments: Vec::new(),
        });
    }

    let tasks: Vec<(GridPoint, u64)> = spec
        .grid
        .iter()
        .flat_map(|p| spec.seeds.iter().map(move |&s| (*p, s)))
        .collect();
    let mut outputs = with_pool(spec.jobs, || {
        tasks
            .par_iter()
            .map(|(p, s)| run_task(spec, p, *s))
            .collect::<Result<Vec<_>>>()
    })??;
    outputs.sort_by(|a, b| {
        let (pa, pb) = (a.row.point(), b.row.point());
        (pa.n, pa.k)
            .cmp(&(pb.n, pb.k))
            .then(pa.alpha.total_cmp(&pb.alpha))
            .then(pa.speed_kmh.total_cmp(&pb.speed_kmh))
            .then(a.row.seed.cmp(&b.row.seed))
    });
    outputs.dedup_by(|a, b| a.row.point().key() == b.row.point().key() && a.row.seed == b.row.seed);

    let rows: Vec<ResultRow> = outputs.iter().map(|o| o.row.clone()).collect();
    let summary = summarize(&rows);
    let mut series = preset_series(spec.preset, &summary);
    let mut attachments = Vec::new();
    if spec.preset == Preset::Traffic {
        series.extend(traffic_series(&outputs));
    }
    if spec.preset.is_dynamic() {
        attachments.push(epoch_attachment(&outputs));
    }
    if spec.preset == Preset::Snapshot {
        let snaps: Vec<serde_json::Value> = outputs.iter().filter_map(|o| o.snapshot.clone()).collect();
        attachments.push(Attachment {
            file_name: "partitions.json".into(),
            contents: serde_json::to_string_pretty(&snaps)? + "\n",
        });
    }
    Ok(ResultTable {
        preset: spec.preset,
        rows,
        summary,
        series,
        suites: Vec::new(),
        attachments,
    })
}
