//! Writing result tables to disk.
//!
//! Files written into the output directory, for preset `p`:
//!
//! * `p.csv` / `p.json`: one row per seed and grid point;
//! * `p_summary.csv` / `.json`: mean and standard error per grid point;
//! * `p_<series>.dat`: whitespace-separated `x y stderr` series for plotting;
//! * `p_<attachment>`: preset extras (epoch logs, snapshot partitions);
//! * `p_timing.csv`: wall times, the only file that differs between runs.
//!
//! Numbers carry 12 significant digits; column order is fixed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{ExperimentSpec, Format, ResultRow, ResultTable, SummaryRow, SUMMARY_COLUMNS};
use super::suites::SuiteReport;
use crate::error::{Error, Result};

/// `x` with 12 significant digits, `%g` style; empty for non-finite values.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig(x).parse().expect("formatted float")
    } else {
        x
    }
}

enum Cell {
    Int(u64),
    Num(f64),
    Bool(bool),
    Text(String),
    Missing,
}

impl Cell {
    fn opt(x: Option<f64>) -> Cell {
        x.map_or(Cell::Missing, Cell::Num)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => fmt_sig(*v),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Num(v) if !v.is_finite() => "null".into(),
            Cell::Text(s) => serde_json::to_string(s).expect("string"),
            Cell::Missing => "null".into(),
            other => other.csv(),
        }
    }
}

pub const ROW_COLUMNS: [&str; 16] = [
    "seed",
    "n",
    "k",
    "alpha",
    "speed_kmh",
    "mean_noncoop_payoff",
    "mean_coop_payoff",
    "optimal_welfare",
    "avg_coalition_size",
    "max_coalition_size",
    "avg_known_channels",
    "max_known_channels",
    "switch_count",
    "stable",
    "switches_per_min",
    "mean_lifespan_s",
];

fn row_cells(r: &ResultRow) -> Vec<Cell> {
    vec![
        Cell::Int(r.seed),
        Cell::Int(r.n as u64),
        Cell::Int(r.k as u64),
        Cell::Num(r.alpha),
        Cell::Num(r.speed_kmh),
        Cell::Num(r.mean_noncoop_payoff),
        Cell::Num(r.mean_coop_payoff),
        Cell::opt(r.optimal_welfare),
        Cell::Num(r.avg_coalition_size),
        Cell::Int(r.max_coalition_size as u64),
        Cell::Num(r.avg_known_channels),
        Cell::Int(r.max_known_channels as u64),
        Cell::Int(r.switch_count as u64),
        Cell::Bool(r.stable),
        Cell::opt(r.switches_per_min),
        Cell::opt(r.mean_lifespan_s),
    ]
}

fn summary_header() -> Vec<String> {
    let mut h: Vec<String> = ["n", "k", "alpha", "speed_kmh", "seeds"].map(String::from).to_vec();
    for c in SUMMARY_COLUMNS {
        h.push(format!("{c}_mean"));
        h.push(format!("{c}_stderr"));
    }
    h
}

fn summary_cells(s: &SummaryRow) -> Vec<Cell> {
    let mut cells = vec![
        Cell::Int(s.point.n as u64),
        Cell::Int(s.point.k as u64),
        Cell::Num(s.point.alpha),
        Cell::Num(s.point.speed_kmh),
        Cell::Int(s.seeds as u64),
    ];
    for st in &s.stats {
        cells.push(Cell::opt(st.map(|x| x.mean)));
        cells.push(Cell::opt(st.map(|x| x.stderr)));
    }
    cells
}

const SUITE_COLUMNS: [&str; 5] = ["suite", "cases", "failed", "max_error", "passed"];

fn suite_cells(s: &SuiteReport) -> Vec<Cell> {
    vec![
        Cell::Text(s.suite.clone()),
        Cell::Int(s.cases as u64),
        Cell::Int(s.n_failed as u64),
        Cell::Num(s.max_error),
        Cell::Bool(s.passed()),
    ]
}

fn render(format: Format, header: &[String], rows: &[Vec<Cell>]) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&r.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
                out.push('\n');
            }
        }
        Format::Json => {
            out.push('[');
            for (i, r) in rows.iter().enumerate() {
                out.push_str(if i == 0 { "\n  {" } else { ",\n  {" });
                for (j, (h, c)) in header.iter().zip(r).enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    let _ = write!(out, "\"{h}\": {}", c.json());
                }
                out.push('}');
            }
            out.push_str("\n]\n");
        }
    }
    out
}

/// Renders every file of `table` as `(file name, contents)` without touching
/// the disk.
pub fn render_files(table: &ResultTable, format: Format) -> Vec<(String, String)> {
    let p = table.preset.name();
    let ext = format.extension();
    let mut files = Vec::new();
    if !table.suites.is_empty() {
        let header: Vec<String> = SUITE_COLUMNS.map(String::from).to_vec();
        let rows: Vec<Vec<Cell>> = table.suites.iter().map(suite_cells).collect();
        files.push((format!("{p}.{ext}"), render(format, &header, &rows)));
        return files;
    }
    let header: Vec<String> = ROW_COLUMNS.map(String::from).to_vec();
    let rows: Vec<Vec<Cell>> = table.rows.iter().map(row_cells).collect();
    files.push((format!("{p}.{ext}"), render(format, &header, &rows)));

    let rows: Vec<Vec<Cell>> = table.summary.iter().map(summary_cells).collect();
    files.push((format!("{p}_summary.{ext}"), render(format, &summary_header(), &rows)));

    for s in &table.series {
        let mut text = format!("# {} {} stderr\n", s.x_label, s.name);
        for (x, y, e) in &s.points {
            let _ = writeln!(text, "{} {} {}", fmt_sig(*x), fmt_sig(*y), fmt_sig(*e));
        }
        files.push((format!("{p}_{}.dat", s.name), text));
    }
    for a in &table.attachments {
        files.push((format!("{p}_{}", a.file_name), a.contents.clone()));
    }
    files
}

fn timing_file(table: &ResultTable) -> Option<(String, String)> {
    if table.rows.is_empty() {
        return None;
    }
    let mut text = String::from("seed,n,k,alpha,speed_kmh,runtime_ms\n");
    for r in &table.rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            r.seed,
            r.n,
            r.k,
            fmt_sig(r.alpha),
            fmt_sig(r.speed_kmh),
            fmt_sig(r.runtime_ms)
        );
    }
    Some((format!("{}_timing.csv", table.preset.name()), text))
}

/// Writes all files of `table` under `spec.out` and returns their paths.
pub fn emit(table: &ResultTable, spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    if table.rows.is_empty() && table.suites.is_empty() {
        return Err(Error::InvalidInput("nothing to emit: the table is empty".into()));
    }
    write_files(&spec.out, render_files(table, spec.format).into_iter().chain(timing_file(table)))
}

fn write_files(dir: &Path, files: impl IntoIterator<Item = (String, String)>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        fs::write(&path, contents)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.5), "1.5");
        assert_eq!(fmt_sig(-2.0), "-2");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(123456789.123456789), "123456789.123");
        assert_eq!(fmt_sig(9.9999999999996), "10");
        assert_eq!(fmt_sig(1e-9), "1e-9");
        assert_eq!(fmt_sig(6.02214076e23), "6.02214076e23");
        assert_eq!(fmt_sig(f64::NAN), "");
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
    }

    #[test]
    fn json_cells_are_valid() {
        let header: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let rows = vec![vec![Cell::Num(1e-9), Cell::Missing, Cell::Text("x\"y".into())]];
        let text = render(Format::Json, &header, &rows);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v[0]["a"], 1e-9);
        assert!(v[0]["b"].is_null());
        assert_eq!(v[0]["c"], "x\"y");
    }
}
