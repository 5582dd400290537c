use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use b92key_cli::config::{self, Overlay};
use b92key_cli::selftest::run_selftest;
use b92key_cli::single::{render_report, run_single, SingleRequest};
use b92key_cli::sweep::run_sweep;

#[derive(Parser)]
#[command(
    name = "b92key",
    version,
    about = "Finite-size secure key rates for the B92 protocol over depolarizing channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a (q, m) grid and write CSV plus plot data.
    Sweep(SweepArgs),
    /// Evaluate one (q, m) point and print the full report.
    Single(SingleArgs),
    /// Run the fast invariant checks.
    Selftest,
}

/// Every config key is also a flag of the same name; flags win.
#[derive(Args)]
struct SweepArgs {
    /// Config file with key = value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "alpha")]
    alpha: Option<String>,
    #[arg(long = "r_pub")]
    r_pub: Option<String>,
    /// Comma list and start:step:end ranges, e.g. 0.0:0.005:0.07.
    #[arg(long = "q_grid")]
    q_grid: Option<String>,
    /// Comma list of sample counts, e.g. 1e5, 1e6, 1e7.
    #[arg(long = "m_grid")]
    m_grid: Option<String>,
    #[arg(long = "eps_pe")]
    eps_pe: Option<String>,
    #[arg(long = "eps_bar")]
    eps_bar: Option<String>,
    #[arg(long = "eps_pa")]
    eps_pa: Option<String>,
    /// expected | sampled
    #[arg(long = "mode")]
    mode: Option<String>,
    #[arg(long = "seed")]
    seed: Option<String>,
    /// bloch-4q3 | kraus-1q
    #[arg(long = "depolarizing_convention")]
    depolarizing_convention: Option<String>,
    /// Worker pool size; 0 means all available cores.
    #[arg(long = "workers")]
    workers: Option<String>,
    /// CSV destination; plot files take its stem plus .dat suffixes.
    #[arg(long = "output")]
    output: Option<String>,
    #[arg(long = "opt_max_iterations")]
    opt_max_iterations: Option<String>,
    #[arg(long = "opt_restarts")]
    opt_restarts: Option<String>,
    #[arg(long = "opt_penalty_schedule")]
    opt_penalty_schedule: Option<String>,
    #[arg(long = "opt_simplex_scale")]
    opt_simplex_scale: Option<String>,
    #[arg(long = "opt_convergence_tol")]
    opt_convergence_tol: Option<String>,
}

impl SweepArgs {
    fn overlay(&self) -> Result<Overlay> {
        config::overlay_from_flags(&[
            ("alpha", self.alpha.clone()),
            ("r_pub", self.r_pub.clone()),
            ("q_grid", self.q_grid.clone()),
            ("m_grid", self.m_grid.clone()),
            ("eps_pe", self.eps_pe.clone()),
            ("eps_bar", self.eps_bar.clone()),
            ("eps_pa", self.eps_pa.clone()),
            ("mode", self.mode.clone()),
            ("seed", self.seed.clone()),
            (
                "depolarizing_convention",
                self.depolarizing_convention.clone(),
            ),
            ("workers", self.workers.clone()),
            ("output", self.output.clone()),
            ("opt_max_iterations", self.opt_max_iterations.clone()),
            ("opt_restarts", self.opt_restarts.clone()),
            ("opt_penalty_schedule", self.opt_penalty_schedule.clone()),
            ("opt_simplex_scale", self.opt_simplex_scale.clone()),
            ("opt_convergence_tol", self.opt_convergence_tol.clone()),
        ])
    }
}

#[derive(Args)]
struct SingleArgs {
    /// Depolarizing rate.
    #[arg(long)]
    q: f64,
    /// Estimation sample count; 1e6 style values are accepted.
    #[arg(long, value_parser = config::integer_value)]
    m: u64,
    #[arg(long, default_value_t = 0.39)]
    alpha: f64,
    #[arg(long = "r_pub", default_value_t = 0.5)]
    r_pub: f64,
    #[arg(long = "eps_pe", default_value_t = 1e-5)]
    eps_pe: f64,
    #[arg(long = "eps_bar", default_value_t = 1e-5)]
    eps_bar: f64,
    #[arg(long = "eps_pa", default_value_t = 1e-5)]
    eps_pa: f64,
    /// expected | sampled
    #[arg(long, default_value = "expected")]
    mode: String,
    #[arg(long, default_value_t = 0, value_parser = config::integer_value)]
    seed: u64,
    /// bloch-4q3 | kraus-1q
    #[arg(long = "depolarizing_convention", default_value = "bloch-4q3")]
    depolarizing_convention: String,
}

fn run_sweep_command(args: &SweepArgs) -> Result<ExitCode> {
    let cfg = config::load(args.config.as_deref(), args.overlay()?)?;
    let summary = run_sweep(&cfg)?;
    println!(
        "wrote {} rows to {}",
        summary.rows,
        summary.csv_path.display()
    );
    for path in &summary.plot_paths {
        println!("wrote plot data to {}", path.display());
    }
    if summary.failures > 0 {
        eprintln!("{} grid points failed (NaN rows)", summary.failures);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_single_command(args: &SingleArgs) -> Result<ExitCode> {
    let mode = match args.mode.as_str() {
        "expected" => b92key::StatisticsMode::Expected,
        "sampled" => b92key::StatisticsMode::Sampled,
        other => anyhow::bail!("mode must be `expected` or `sampled`, found `{other}`"),
    };
    let convention = match args.depolarizing_convention.as_str() {
        "bloch-4q3" => config::DepolarizingConvention::Bloch4q3,
        "kraus-1q" => config::DepolarizingConvention::Kraus1q,
        other => anyhow::bail!(
            "depolarizing_convention must be `bloch-4q3` or `kraus-1q`, found `{other}`"
        ),
    };
    let req = SingleRequest {
        q: args.q,
        m: args.m,
        alpha: args.alpha,
        r_pub: args.r_pub,
        sec: b92key::SecurityParams::new(args.eps_pe, args.eps_bar, args.eps_pa)?,
        mode,
        seed: args.seed,
        convention,
        optimizer: b92key::OptimizerOptions::default(),
    };
    let report = run_single(&req)?;
    print!("{}", render_report(&req, &report));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(args) => run_sweep_command(args),
        Command::Single(args) => run_single_command(args),
        Command::Selftest => run_selftest().map(|()| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
