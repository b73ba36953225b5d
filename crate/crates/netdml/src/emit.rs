//! Result files: `results.csv`, `raw_theta.csv`, `results.json` and
//! `tables.txt`.
//!
//! Numbers in CSV files use the shortest representation that parses back to
//! the same `f64`, so summaries can be recomputed exactly from the raw file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Method};
use crate::error::{io_at, HarnessError, Result};
use crate::harness::{RawTheta, SimResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Text,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Csv, Format::Json, Format::Text];
}

pub const RESULTS_CSV: &str = "results.csv";
pub const RAW_CSV: &str = "raw_theta.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const TABLES_TXT: &str = "tables.txt";

/// Writes the requested formats into `dir`, creating it if needed, and
/// returns the written paths.
pub fn emit_tables(result: &SimResult, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let mut written = Vec::new();
    let mut put = |name: &str, contents: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(io_at(&path))?;
        written.push(path);
        Ok(())
    };
    for f in formats {
        match f {
            Format::Csv => {
                put(RESULTS_CSV, results_csv(result)?)?;
                put(RAW_CSV, raw_csv(result)?)?;
            }
            Format::Json => put(RESULTS_JSON, to_json(result)?)?,
            Format::Text => put(TABLES_TXT, render_text(result))?,
        }
    }
    Ok(written)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Format(e.to_string()))
}

/// Long format: one row per `(n, method, metric)`.
pub fn results_csv(result: &SimResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "method", "metric", "value"])?;
    let mut row = |n: String, method: &str, metric: &str, value: String| {
        w.write_record([&n, method, metric, &value])
    };
    for t in &result.truths {
        row(t.n.to_string(), "truth", "theta0", num(t.theta0))?;
        if let Some(se) = t.std_error {
            row(t.n.to_string(), "truth", "std_error", num(se))?;
        }
        row(t.n.to_string(), "truth", "networks", t.networks.to_string())?;
    }
    for r in &result.records {
        let (n, m) = (r.n.to_string(), r.method.label());
        row(n.clone(), m, "bias", num(r.bias))?;
        row(n.clone(), m, "std", num(r.std))?;
        row(n.clone(), m, "mean_treated", num(r.mean_treated))?;
        row(n.clone(), m, "theta0", num(r.theta0))?;
        row(
            n.clone(),
            m,
            "mean_training_size",
            num(r.mean_training_size),
        )?;
        row(
            n.clone(),
            m,
            "degenerate_folds",
            r.degenerate_folds.to_string(),
        )?;
        row(
            n.clone(),
            m,
            "max_moment_residual",
            num(r.max_moment_residual),
        )?;
        row(n, m, "reps", r.reps.to_string())?;
    }
    for f in &result.fold_sizes {
        let (n, m) = (
            f.n.to_string(),
            format!("crossfit(delta={},k={})", f.delta, f.folds),
        );
        row(
            n.clone(),
            &m,
            "mean_training_size",
            num(f.mean_training_size),
        )?;
        row(n.clone(), &m, "std_training_size", num(f.std_training_size))?;
        row(n, &m, "reps", f.reps.to_string())?;
    }
    for s in &result.stability {
        for r in &s.report.records {
            let n = r.n.to_string();
            row(
                n.clone(),
                &s.learner,
                "max_rms_in_sample",
                num(r.max_rms_in_sample),
            )?;
            row(n.clone(), &s.learner, "max_rms_fresh", num(r.max_rms_fresh))?;
            row(
                n.clone(),
                &s.learner,
                "sqrt_n_in_sample",
                num(r.sqrt_n_in_sample),
            )?;
            row(n.clone(), &s.learner, "sqrt_n_fresh", num(r.sqrt_n_fresh))?;
            row(n, &s.learner, "mean_swap_size", num(r.mean_swap_size))?;
        }
        if let Some(v) = s.report.slope_in_sample {
            row(String::new(), &s.learner, "slope_in_sample", num(v))?;
        }
        if let Some(v) = s.report.slope_fresh {
            row(String::new(), &s.learner, "slope_fresh", num(v))?;
        }
    }
    drop(row);
    finish(w)
}

pub fn raw_csv(result: &SimResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "method", "rep", "theta_hat"])?;
    for r in &result.raw {
        w.write_record([
            r.n.to_string(),
            r.method.label().to_string(),
            r.rep.to_string(),
            num(r.theta_hat),
        ])?;
    }
    finish(w)
}

pub fn read_raw_csv(text: &str) -> Result<Vec<RawTheta>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| {
            rec.get(i)
                .ok_or_else(|| HarnessError::Format(format!("short row {:?}", rec)))
        };
        let bad = |what: &str| HarnessError::Format(format!("bad {what} in row {:?}", rec));
        out.push(RawTheta {
            n: field(0)?.parse().map_err(|_| bad("n"))?,
            method: Method::from_label(field(1)?).ok_or_else(|| bad("method"))?,
            rep: field(2)?.parse().map_err(|_| bad("rep"))?,
            theta_hat: field(3)?.parse().map_err(|_| bad("theta_hat"))?,
        });
    }
    Ok(out)
}

pub fn to_json(result: &SimResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(result)? + "\n")
}

pub fn from_json(text: &str) -> Result<SimResult> {
    Ok(serde_json::from_str(text)?)
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(v) => format!("{v:.decimals$}"),
        None => "-".to_string(),
    }
}

/// Plain-text tables laid out like the published ones.
pub fn render_text(result: &SimResult) -> String {
    let mut out = String::new();
    match result.experiment {
        Experiment::Table1 | Experiment::Custom => table1_text(result, &mut out),
        Experiment::Table2 => table2_text(result, &mut out),
        Experiment::Stability => stability_text(result, &mut out),
    }
    out
}

fn table1_text(result: &SimResult, out: &mut String) {
    let mut ns: Vec<usize> = result.records.iter().map(|r| r.n).collect();
    ns.dedup();
    let width = 10;
    let group = ns.len() * width;
    let _ = writeln!(out, "Simulation results");
    let _ = writeln!(
        out,
        "{:<20}{:>group$}{:>group$}",
        "", "No cross-fitting", "Cross-fitting"
    );
    let mut line = format!("{:<20}", "n");
    for _ in 0..2 {
        for n in &ns {
            line += &format!("{n:>width$}");
        }
    }
    let _ = writeln!(out, "{line}");
    let schemes = [
        (
            "Bootstrap",
            Method::BootstrapFull,
            Method::BootstrapCrossfit,
        ),
        (
            "Subsampling",
            Method::SubsampleFull,
            Method::SubsampleCrossfit,
        ),
    ];
    for (name, full, cf) in schemes {
        for (k, metric) in ["Bias", "Std"].iter().enumerate() {
            let mut line = format!("{:<12}{:<8}", if k == 0 { name } else { "" }, metric);
            for m in [full, cf] {
                for &n in &ns {
                    let v = result
                        .record(n, m)
                        .map(|r| if k == 0 { r.bias } else { r.std });
                    line += &format!("{:>width$}", fmt_opt(v, 4));
                }
            }
            let _ = writeln!(out, "{line}");
        }
    }
    let first = |n: usize| result.records.iter().find(|r| r.n == n);
    for (label, decimals, get) in [
        (
            "sum W_i",
            2,
            (|r: &crate::harness::MethodRecord| r.mean_treated) as fn(&_) -> f64,
        ),
        ("theta_0", 4, |r| r.theta0),
    ] {
        let mut line = format!("{label:<20}");
        for _ in 0..2 {
            for &n in &ns {
                line += &format!("{:>width$}", fmt_opt(first(n).map(get), decimals));
            }
        }
        let _ = writeln!(out, "{line}");
    }
    let reps = result.records.first().map_or(0, |r| r.reps);
    let _ = writeln!(out, "{reps} replications.");
}

fn table2_text(result: &SimResult, out: &mut String) {
    let mut cells: Vec<(f64, usize)> = Vec::new();
    let mut ns: Vec<usize> = Vec::new();
    for f in &result.fold_sizes {
        if !cells.contains(&(f.delta, f.folds)) {
            cells.push((f.delta, f.folds));
        }
        if !ns.contains(&f.n) {
            ns.push(f.n);
        }
    }
    let width = 9;
    let group = ns.len() * width;
    let _ = writeln!(out, "Training set sizes");
    let mut line = format!("{:<6}", "");
    for (d, k) in &cells {
        line += &format!("{:>group$}", format!("Delta={d}, K={k}"));
    }
    let _ = writeln!(out, "{line}");
    let mut line = format!("{:<6}", "n");
    let mut sizes = format!("{:<6}", "size");
    for &(d, k) in &cells {
        for &n in &ns {
            line += &format!("{n:>width$}");
            sizes += &format!(
                "{:>width$}",
                fmt_opt(result.fold_size(n, d, k).map(|f| f.mean_training_size), 2)
            );
        }
    }
    let _ = writeln!(out, "{line}");
    let _ = writeln!(out, "{sizes}");
    let reps = result.fold_sizes.first().map_or(0, |r| r.reps);
    let _ = writeln!(out, "{reps} replications.");
}

fn stability_text(result: &SimResult, out: &mut String) {
    for s in &result.stability {
        let _ = writeln!(out, "Neighborhood stability: {}", s.learner);
        let _ = writeln!(
            out,
            "{:>8}{:>8}{:>8}{:>14}{:>14}{:>12}{:>12}{:>10}",
            "n", "pairs", "reps", "rms in", "rms fresh", "sqrt(n) in", "sqrt(n) fr", "|swap|"
        );
        for r in &s.report.records {
            let _ = writeln!(
                out,
                "{:>8}{:>8}{:>8}{:>14.6}{:>14.6}{:>12.4}{:>12.4}{:>10.2}",
                r.n,
                r.pairs,
                r.mc_reps,
                r.max_rms_in_sample,
                r.max_rms_fresh,
                r.sqrt_n_in_sample,
                r.sqrt_n_fresh,
                r.mean_swap_size
            );
        }
        let _ = writeln!(
            out,
            "slope in-sample {}, fresh {}; o(n^-1/2) at threshold {}: {}",
            fmt_opt(s.report.slope_in_sample, 3),
            fmt_opt(s.report.slope_fresh, 3),
            s.report.slope_threshold + s.report.slope_tolerance,
            if s.report.decays_faster_than_root_n() {
                "yes"
            } else {
                "no"
            }
        );
        let _ = writeln!(out);
    }
}
