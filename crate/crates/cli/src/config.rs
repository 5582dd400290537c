//! Sweep configuration: a flat UTF-8 key=value file, every key also
//! settable by a command flag of the same name. Grid values accept
//! comma-separated lists and inclusive `start:step:end` ranges. Errors
//! carry the file line (or flag name) that produced them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use b92key::{OptimizerOptions, SecurityParams, StatisticsMode};

/// How a depolarizing rate q maps onto the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepolarizingConvention {
    /// Bloch contraction 1 - 4q/3; q is the full-flip weight.
    Bloch4q3,
    /// Contraction 1 - q; q is the per-axis Kraus weight.
    Kraus1q,
}

impl fmt::Display for DepolarizingConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepolarizingConvention::Bloch4q3 => write!(f, "bloch-4q3"),
            DepolarizingConvention::Kraus1q => write!(f, "kraus-1q"),
        }
    }
}

/// A fully resolved sweep: defaults, then file keys, then flags.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub alpha: f64,
    pub r_pub: f64,
    pub q_grid: Vec<f64>,
    pub m_grid: Vec<u64>,
    pub sec: SecurityParams,
    pub mode: StatisticsMode,
    pub seed: u64,
    pub convention: DepolarizingConvention,
    pub optimizer: OptimizerOptions,
    pub workers: usize,
    pub output_path: PathBuf,
}

const KNOWN_KEYS: &[&str] = &[
    "alpha",
    "r_pub",
    "q_grid",
    "m_grid",
    "eps_pe",
    "eps_bar",
    "eps_pa",
    "mode",
    "seed",
    "depolarizing_convention",
    "workers",
    "output",
    "opt_max_iterations",
    "opt_restarts",
    "opt_penalty_schedule",
    "opt_simplex_scale",
    "opt_convergence_tol",
];

/// Key=value pairs with their origin, last assignment wins.
#[derive(Debug, Default)]
pub struct Overlay {
    entries: BTreeMap<String, (String, String)>,
}

impl Overlay {
    pub fn set(&mut self, key: &str, value: &str, origin: String) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            bail!("{origin}: unknown key `{key}`");
        }
        self.entries
            .insert(key.to_string(), (value.trim().to_string(), origin));
        Ok(())
    }

    fn get(&self, key: &str) -> Option<(&str, &str)> {
        self.entries
            .get(key)
            .map(|(v, o)| (v.as_str(), o.as_str()))
    }

    fn merge(&mut self, other: Overlay) {
        self.entries.extend(other.entries);
    }
}

/// Reads a config file. Blank lines and `#` comments are ignored;
/// everything else must be `key = value`.
pub fn parse_file(path: &Path) -> Result<Overlay> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let mut overlay = Overlay::default();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let origin = format!("{}:{line_no}", path.display());
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{origin}: expected `key = value`, found `{line}`");
        };
        overlay.set(key.trim(), value, origin)?;
    }
    Ok(overlay)
}

fn parse_f64(value: &str, origin: &str, key: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| anyhow!("{origin}: {key}: `{}` is not a number", value.trim()))
}

/// Nonnegative integer; scientific notation like 1e8 is accepted when
/// it is an exact integer. Shared with the command-line flags so both
/// spellings work everywhere.
pub fn integer_value(value: &str) -> std::result::Result<u64, String> {
    let trimmed = value.trim();
    if let Ok(v) = trimmed.parse::<u64>() {
        return Ok(v);
    }
    let as_float: f64 = trimmed
        .parse()
        .map_err(|_| format!("`{trimmed}` is not a number"))?;
    if as_float < 0.0 || as_float > 2f64.powi(53) || as_float.fract() != 0.0 {
        return Err(format!("`{trimmed}` is not a nonnegative integer"));
    }
    Ok(as_float as u64)
}

fn parse_u64(value: &str, origin: &str, key: &str) -> Result<u64> {
    integer_value(value).map_err(|msg| anyhow!("{origin}: {key}: {msg}"))
}

fn parse_usize(value: &str, origin: &str, key: &str) -> Result<usize> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| anyhow!("{origin}: {key}: `{}` is not a count", value.trim()))
}

/// Comma-separated values; each item is a number or `start:step:end`
/// (inclusive, with a half-step tolerance at the upper end).
fn parse_f64_list(value: &str, origin: &str, key: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in value.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        if let Some((start, rest)) = item.split_once(':') {
            let Some((step, end)) = rest.split_once(':') else {
                bail!("{origin}: {key}: range `{item}` must be start:step:end");
            };
            let start = parse_f64(start, origin, key)?;
            let step = parse_f64(step, origin, key)?;
            let end = parse_f64(end, origin, key)?;
            if !(step > 0.0) || end < start {
                bail!("{origin}: {key}: range `{item}` needs step > 0 and end >= start");
            }
            let mut k = 0u64;
            loop {
                let x = start + step * k as f64;
                if x > end + 0.5 * step {
                    break;
                }
                out.push(x.min(end));
                k += 1;
            }
        } else {
            out.push(parse_f64(item, origin, key)?);
        }
    }
    Ok(out)
}

fn parse_u64_list(value: &str, origin: &str, key: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in value.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        if item.contains(':') {
            for x in parse_f64_list(item, origin, key)? {
                if x < 0.0 || x.fract() != 0.0 {
                    bail!("{origin}: {key}: range value {x} is not an integer");
                }
                out.push(x as u64);
            }
        } else {
            out.push(parse_u64(item, origin, key)?);
        }
    }
    Ok(out)
}

/// Applies defaults and validates bounds; grid keys are mandatory.
pub fn resolve(overlay: &Overlay) -> Result<SweepConfig> {
    let mut alpha = 0.39;
    let mut r_pub = 0.5;
    let mut q_grid: Option<Vec<f64>> = None;
    let mut m_grid: Option<Vec<u64>> = None;
    let mut eps_pe = 1e-5;
    let mut eps_bar = 1e-5;
    let mut eps_pa = 1e-5;
    let mut mode = StatisticsMode::Expected;
    let mut seed = 0u64;
    let mut convention = DepolarizingConvention::Bloch4q3;
    let mut workers = 0usize;
    let mut output_path = PathBuf::from("sweep.csv");
    let mut optimizer = OptimizerOptions::default();

    if let Some((v, o)) = overlay.get("alpha") {
        alpha = parse_f64(v, o, "alpha")?;
    }
    if let Some((v, o)) = overlay.get("r_pub") {
        r_pub = parse_f64(v, o, "r_pub")?;
    }
    if let Some((v, o)) = overlay.get("q_grid") {
        let grid = parse_f64_list(v, o, "q_grid")?;
        if grid.is_empty() {
            bail!("{o}: q_grid is empty");
        }
        q_grid = Some(grid);
    }
    if let Some((v, o)) = overlay.get("m_grid") {
        let grid = parse_u64_list(v, o, "m_grid")?;
        if grid.is_empty() {
            bail!("{o}: m_grid is empty");
        }
        m_grid = Some(grid);
    }
    if let Some((v, o)) = overlay.get("eps_pe") {
        eps_pe = parse_f64(v, o, "eps_pe")?;
    }
    if let Some((v, o)) = overlay.get("eps_bar") {
        eps_bar = parse_f64(v, o, "eps_bar")?;
    }
    if let Some((v, o)) = overlay.get("eps_pa") {
        eps_pa = parse_f64(v, o, "eps_pa")?;
    }
    if let Some((v, o)) = overlay.get("mode") {
        mode = match v {
            "expected" => StatisticsMode::Expected,
            "sampled" => StatisticsMode::Sampled,
            other => bail!("{o}: mode must be `expected` or `sampled`, found `{other}`"),
        };
    }
    if let Some((v, o)) = overlay.get("seed") {
        seed = parse_u64(v, o, "seed")?;
    }
    if let Some((v, o)) = overlay.get("depolarizing_convention") {
        convention = match v {
            "bloch-4q3" => DepolarizingConvention::Bloch4q3,
            "kraus-1q" => DepolarizingConvention::Kraus1q,
            other => bail!(
                "{o}: depolarizing_convention must be `bloch-4q3` or `kraus-1q`, found `{other}`"
            ),
        };
    }
    if let Some((v, o)) = overlay.get("workers") {
        workers = parse_usize(v, o, "workers")?;
    }
    if let Some((v, _)) = overlay.get("output") {
        output_path = PathBuf::from(v);
    }
    if let Some((v, o)) = overlay.get("opt_max_iterations") {
        optimizer.max_iterations = parse_usize(v, o, "opt_max_iterations")?;
    }
    if let Some((v, o)) = overlay.get("opt_restarts") {
        optimizer.restarts = parse_usize(v, o, "opt_restarts")?;
    }
    if let Some((v, o)) = overlay.get("opt_penalty_schedule") {
        let schedule = parse_f64_list(v, o, "opt_penalty_schedule")?;
        if schedule.is_empty() {
            bail!("{o}: opt_penalty_schedule is empty");
        }
        optimizer.constraint_penalty_schedule = schedule;
    }
    if let Some((v, o)) = overlay.get("opt_simplex_scale") {
        optimizer.simplex_or_step_scale = parse_f64(v, o, "opt_simplex_scale")?;
    }
    if let Some((v, o)) = overlay.get("opt_convergence_tol") {
        optimizer.convergence_tol = parse_f64(v, o, "opt_convergence_tol")?;
    }
    optimizer.seed = seed;

    let q_grid = q_grid.ok_or_else(|| anyhow!("q_grid must be set (config key or --q_grid)"))?;
    let m_grid = m_grid.ok_or_else(|| anyhow!("m_grid must be set (config key or --m_grid)"))?;
    let sec = SecurityParams::new(eps_pe, eps_bar, eps_pa)?;
    // Protocol bounds are enforced once here so a bad alpha fails before
    // any grid point runs.
    b92key::B92Params::new(alpha, r_pub)?;
    for &q in &q_grid {
        depolarizing(q, convention)?;
    }

    Ok(SweepConfig {
        alpha,
        r_pub,
        q_grid,
        m_grid,
        sec,
        mode,
        seed,
        convention,
        optimizer,
        workers,
        output_path,
    })
}

/// Builds the channel for a depolarizing rate under the configured
/// convention.
pub fn depolarizing(
    q: f64,
    convention: DepolarizingConvention,
) -> b92key::Result<b92key::BlochChannel> {
    match convention {
        DepolarizingConvention::Bloch4q3 => b92key::BlochChannel::depolarizing(q),
        DepolarizingConvention::Kraus1q => b92key::BlochChannel::depolarizing_kraus(q),
    }
}

/// Flag values repeat the config grammar; origin strings name the flag.
pub fn overlay_from_flags(pairs: &[(&str, Option<String>)]) -> Result<Overlay> {
    let mut overlay = Overlay::default();
    for (key, value) in pairs {
        if let Some(value) = value {
            overlay.set(key, value, format!("--{key}"))?;
        }
    }
    Ok(overlay)
}

/// File overlay (if any) with flag overrides on top.
pub fn load(config_path: Option<&Path>, flags: Overlay) -> Result<SweepConfig> {
    let mut overlay = match config_path {
        Some(path) => parse_file(path)?,
        None => Overlay::default(),
    };
    overlay.merge(flags);
    resolve(&overlay)
}
