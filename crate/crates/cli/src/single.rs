//! One grid point, reported field by field on standard output.

use anyhow::Result;
use b92key::{finitekey, B92Params, RateReport, StatisticsMode};

use crate::config::{depolarizing, DepolarizingConvention};

pub struct SingleRequest {
    pub q: f64,
    pub m: u64,
    pub alpha: f64,
    pub r_pub: f64,
    pub sec: b92key::SecurityParams,
    pub mode: StatisticsMode,
    pub seed: u64,
    pub convention: DepolarizingConvention,
    pub optimizer: b92key::OptimizerOptions,
}

pub fn run_single(req: &SingleRequest) -> Result<RateReport> {
    let params = B92Params::new(req.alpha, req.r_pub)?;
    let ch = depolarizing(req.q, req.convention)?;
    let report = finitekey::finite_rate(
        &ch,
        &params,
        req.m,
        &req.sec,
        req.mode,
        req.seed,
        &req.optimizer,
    )?;
    Ok(report)
}

pub fn render_report(req: &SingleRequest, report: &RateReport) -> String {
    let mode = match report.mode {
        StatisticsMode::Expected => "expected",
        StatisticsMode::Sampled => "sampled",
    };
    let r = report.argmin_channel.r();
    let t = report.argmin_channel.t();
    let mut out = String::new();
    out.push_str(&format!("q                        = {:.9}\n", req.q));
    out.push_str(&format!("alpha                    = {:.9}\n", req.alpha));
    out.push_str(&format!("r_pub                    = {:.9}\n", req.r_pub));
    out.push_str(&format!("m                        = {}\n", report.m));
    out.push_str(&format!("n                        = {}\n", report.n));
    out.push_str(&format!("rate_per_n               = {:.9e}\n", report.rate));
    out.push_str(&format!(
        "min_SXEP_normalized      = {:.9e}\n",
        report.min_eve_ambiguity_normalized
    ));
    out.push_str(&format!("leak_HXY                 = {:.9e}\n", report.leak));
    out.push_str(&format!(
        "delta_per_n              = {:.9e}\n",
        report.delta_per_n
    ));
    out.push_str(&format!("feasible                 = {}\n", report.feasible));
    out.push_str(&format!("mode                     = {mode}\n"));
    out.push_str(&format!("seed                     = {}\n", req.seed));
    out.push_str("argmin R (rows, z x y)   =\n");
    for i in 0..3 {
        out.push_str(&format!(
            "    [{:+.9e} {:+.9e} {:+.9e}]\n",
            r[(i, 0)],
            r[(i, 1)],
            r[(i, 2)]
        ));
    }
    out.push_str(&format!(
        "argmin t (z x y)         = [{:+.9e} {:+.9e} {:+.9e}]\n",
        t[0], t[1], t[2]
    ));
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}
