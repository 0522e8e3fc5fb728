use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coalsense::formation::{audit_with, form_with};
use coalsense::harness::{emit, run_experiment, ExperimentSpec, Format, Preset, SimConfig};
use coalsense::noncoop::noncoop_profile;
use coalsense::valuation::Evaluator;
use coalsense::{Error, Partition, Result, Scenario};

#[derive(Parser)]
#[command(name = "coalsense", version, about = "Coalition formation for cognitive radio spectrum sensing and access")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with scenario keys (n_sus, n_channels, k_i, alpha, ...).
    #[arg(long)]
    config: Option<PathBuf>,
    /// First seed (defaults to the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Form a coalition structure for one scenario and print it.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Load this scenario dump instead of generating one.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Also write the scenario dump and switch trace into --out.
        #[arg(long)]
        save: bool,
    },
    /// Payoff versus network size.
    SweepN(Common),
    /// Payoff versus per-channel sensing time.
    SweepAlpha(Common),
    /// Payoff versus number of channels.
    SweepK(Common),
    /// Coalition sizes and known channels versus network size.
    Sizes(Common),
    /// Adaptation to periodic traffic re-draws.
    Traffic(Common),
    /// Switch rate and coalition lifespan versus speed.
    Mobility(Common),
    /// The nine-user snapshot with published channel availabilities.
    Snapshot(Common),
    /// Brute-force verification suites.
    Oracle(Common),
}

fn load_config(common: &Common) -> Result<SimConfig> {
    match &common.config {
        Some(path) => SimConfig::load(path),
        None => Ok(SimConfig::default()),
    }
}

fn simulate(common: &Common, scenario_path: Option<&PathBuf>, save: bool) -> Result<()> {
    let cfg = load_config(common)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let scenario = match scenario_path {
        Some(p) => Scenario::load_json(p)?,
        None => cfg.scenario(seed)?,
    };
    let n = scenario.n_sus();
    let ev = Evaluator::new(&scenario, cfg.formation.valuation.clone());
    let trace = form_with(&ev, &Partition::singletons(n), seed, &cfg.formation)?;
    let payoffs = ev.profile(&trace.final_partition)?;
    let noncoop = noncoop_profile(&scenario)?;
    let audit = audit_with(&ev, &trace.final_partition)?;
    let round = |v: &[f64]| v.iter().map(|&x| coalsense::harness::emit::round_sig(x)).collect::<Vec<_>>();
    let summary = serde_json::json!({
        "seed": seed,
        "n_sus": n,
        "n_channels": scenario.n_channels(),
        "partition": trace.final_partition.fingerprint(),
        "payoffs": round(&payoffs),
        "noncoop_payoffs": round(&noncoop),
        "mean_payoff": coalsense::harness::emit::round_sig(payoffs.iter().sum::<f64>() / n as f64),
        "mean_noncoop_payoff": coalsense::harness::emit::round_sig(noncoop.iter().sum::<f64>() / n as f64),
        "switches": trace.switches.len(),
        "passes": trace.passes,
        "nash_stable": audit.stable,
        "history_resets": trace.history_resets,
        "fresh_quiet": trace.fresh_quiet,
    });
    if save {
        std::fs::create_dir_all(&common.out)?;
        scenario.save_json(common.out.join("scenario.json"))?;
        let file = std::fs::File::create(common.out.join("trace.jsonl"))?;
        trace.write_jsonl(std::io::BufWriter::new(file))?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn experiment(preset: Preset, common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let first = common.seed.unwrap_or(cfg.seed);
    let count = common.seeds.unwrap_or(match preset {
        Preset::Oracle => 100,
        Preset::Snapshot => 1,
        _ => 10,
    });
    let mut spec = ExperimentSpec::new(preset, cfg, (first..first.saturating_add(count)).collect(), &common.out);
    spec.format = Format::parse(&common.format)?;
    spec.jobs = common.jobs;
    spec.validate()?;
    let table = run_experiment(&spec)?;
    let paths = emit(&table, &spec)?;
    for p in &paths {
        println!("{}", p.display());
    }
    let failed: Vec<&str> = table.suites.iter().filter(|s| !s.passed()).map(|s| s.suite.as_str()).collect();
    for s in &table.suites {
        println!("{} {} ({} cases)", if s.passed() { "PASS" } else { "FAIL" }, s.suite, s.cases);
    }
    if !failed.is_empty() {
        return Err(Error::InvalidInput(format!("oracle suites failed: {}", failed.join(", "))));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, scenario, save } => simulate(&common, scenario.as_ref(), save),
        Command::SweepN(c) => experiment(Preset::SweepN, &c),
        Command::SweepAlpha(c) => experiment(Preset::SweepAlpha, &c),
        Command::SweepK(c) => experiment(Preset::SweepK, &c),
        Command::Sizes(c) => experiment(Preset::Sizes, &c),
        Command::Traffic(c) => experiment(Preset::Traffic, &c),
        Command::Mobility(c) => experiment(Preset::Mobility, &c),
        Command::Snapshot(c) => experiment(Preset::Snapshot, &c),
        Command::Oracle(c) => experiment(Preset::Oracle, &c),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            if let Error::InvalidConfig { key, .. } = &e {
                record["key"] = key.clone().into();
            }
            eprintln!("{record}");
            ExitCode::from(match e {
                Error::InvalidConfig { .. } => 2,
                _ => 1,
            })
        }
    }
}
