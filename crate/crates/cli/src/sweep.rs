//! Grid evaluation and output emission. Rows are computed by a bounded
//! worker pool but always written in grid order, so a sweep's bytes
//! depend only on its configuration and seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use b92key::{estimation, finitekey, B92Params};

use crate::config::{depolarizing, SweepConfig};

pub const CSV_HEADER: &str = "q,m,n,rate_per_n,rate_per_m,asymptotic_rate,min_SXEP_normalized,leak_HXY,delta_per_n,kl_threshold,feasible,seed";

/// One grid point's row, either computed or failed.
struct Row {
    q: f64,
    m: u64,
    seed: u64,
    outcome: std::result::Result<Computed, String>,
}

struct Computed {
    n: u64,
    rate_per_n: f64,
    rate_per_m: f64,
    min_sxep: f64,
    leak: f64,
    delta_per_n: f64,
    kl_threshold: f64,
    feasible: bool,
    warnings: Vec<String>,
}

pub struct SweepSummary {
    pub rows: usize,
    pub failures: usize,
    pub csv_path: PathBuf,
    pub plot_paths: Vec<PathBuf>,
}

/// Nine significant digits, `NaN` for missing values.
fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.8e}")
    }
}

fn evaluate_point(cfg: &SweepConfig, params: &B92Params, q: f64, m: u64, seed: u64) -> Row {
    let outcome = (|| -> b92key::Result<Computed> {
        let ch = depolarizing(q, cfg.convention)?;
        let report = finitekey::finite_rate(
            &ch,
            params,
            m,
            &cfg.sec,
            cfg.mode,
            seed,
            &cfg.optimizer,
        )?;
        Ok(Computed {
            n: report.n,
            rate_per_n: report.rate,
            rate_per_m: report.rate * report.n as f64 / m as f64,
            min_sxep: report.min_eve_ambiguity_normalized,
            leak: report.leak,
            delta_per_n: report.delta_per_n,
            kl_threshold: estimation::kl_threshold(m, cfg.sec.eps_pe)?,
            feasible: report.feasible,
            warnings: report.warnings,
        })
    })()
    .map_err(|e| e.to_string());
    Row { q, m, seed, outcome }
}

fn write_rows(asymptotes: &BTreeMap<u64, f64>, rows: &[Row]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let asymptote = asymptotes
            .get(&row.q.to_bits())
            .copied()
            .unwrap_or(f64::NAN);
        match &row.outcome {
            Ok(c) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    fmt_float(row.q),
                    row.m,
                    c.n,
                    fmt_float(c.rate_per_n),
                    fmt_float(c.rate_per_m),
                    fmt_float(asymptote),
                    fmt_float(c.min_sxep),
                    fmt_float(c.leak),
                    fmt_float(c.delta_per_n),
                    fmt_float(c.kl_threshold),
                    c.feasible,
                    row.seed,
                );
            }
            Err(_) => {
                let _ = writeln!(
                    out,
                    "{},{},NaN,NaN,NaN,{},NaN,NaN,NaN,NaN,false,{}",
                    fmt_float(row.q),
                    row.m,
                    fmt_float(asymptote),
                    row.seed,
                );
            }
        }
    }
    out
}

fn plot_path(csv_path: &Path, tag: &str) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".to_string());
    csv_path.with_file_name(format!("{stem}.{tag}.dat"))
}

fn rate_of(row: &Row) -> f64 {
    match &row.outcome {
        Ok(c) => c.rate_per_n,
        Err(_) => f64::NAN,
    }
}

/// Two whitespace-separated columns with `#` comments. The rate-vs-q
/// file fixes m at the first grid value; the rate-vs-sample-size file
/// fixes q at the first grid value and plots against log10(m).
fn plot_files(cfg: &SweepConfig, rows: &[Row]) -> Vec<(PathBuf, String)> {
    let mut files = Vec::new();
    if cfg.q_grid.len() > 1 {
        let m_fixed = cfg.m_grid[0];
        let mut text = String::new();
        let _ = writeln!(text, "# key rate vs depolarizing rate at m = {m_fixed}");
        let _ = writeln!(text, "# columns: q rate_per_n");
        for row in rows.iter().filter(|r| r.m == m_fixed) {
            let _ = writeln!(text, "{} {}", fmt_float(row.q), fmt_float(rate_of(row)));
        }
        files.push((plot_path(&cfg.output_path, "rate_vs_q"), text));
    }
    if cfg.m_grid.len() > 1 {
        let q_fixed = cfg.q_grid[0];
        let mut text = String::new();
        let _ = writeln!(
            text,
            "# key rate vs sample size at q = {}",
            fmt_float(q_fixed)
        );
        let _ = writeln!(text, "# columns: log10(m) rate_per_n");
        for row in rows.iter().filter(|r| r.q.to_bits() == q_fixed.to_bits()) {
            let _ = writeln!(
                text,
                "{} {}",
                fmt_float((row.m as f64).log10()),
                fmt_float(rate_of(row))
            );
        }
        files.push((plot_path(&cfg.output_path, "rate_vs_m"), text));
    }
    files
}

/// Runs the whole grid and writes the CSV and plot files. Point
/// failures become NaN rows and a warning on standard error; they are
/// counted in the summary instead of aborting the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepSummary> {
    let params = B92Params::new(cfg.alpha, cfg.r_pub)?;

    let mut grid = Vec::new();
    for &q in &cfg.q_grid {
        for &m in &cfg.m_grid {
            let index = grid.len() as u64;
            grid.push((q, m, cfg.seed ^ index));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building the worker pool")?;

    let mut unique_q: Vec<f64> = Vec::new();
    for &q in &cfg.q_grid {
        if !unique_q.iter().any(|u| u.to_bits() == q.to_bits()) {
            unique_q.push(q);
        }
    }

    let (asymptotes, rows) = pool.install(|| {
        let asymptotes: BTreeMap<u64, f64> = unique_q
            .par_iter()
            .map(|&q| {
                let rate = depolarizing(q, cfg.convention)
                    .and_then(|ch| finitekey::asymptotic_rate(&ch, &params, &cfg.optimizer))
                    .unwrap_or(f64::NAN);
                (q.to_bits(), rate)
            })
            .collect();
        let rows: Vec<Row> = grid
            .par_iter()
            .map(|&(q, m, seed)| evaluate_point(cfg, &params, q, m, seed))
            .collect();
        (asymptotes, rows)
    });

    let mut failures = 0usize;
    for row in &rows {
        match &row.outcome {
            Ok(c) => {
                for w in &c.warnings {
                    eprintln!("warning: q={} m={}: {w}", row.q, row.m);
                }
            }
            Err(e) => {
                failures += 1;
                eprintln!("error: q={} m={}: {e}", row.q, row.m);
            }
        }
    }

    let csv = write_rows(&asymptotes, &rows);
    std::fs::write(&cfg.output_path, csv)
        .with_context(|| format!("writing {}", cfg.output_path.display()))?;

    let mut plot_paths = Vec::new();
    for (path, text) in plot_files(cfg, &rows) {
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        plot_paths.push(path);
    }

    Ok(SweepSummary {
        rows: rows.len(),
        failures,
        csv_path: cfg.output_path.clone(),
        plot_paths,
    })
}
