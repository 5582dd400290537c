//! Constrained minimization of the adversary's ambiguity over the
//! confidence region.
//!
//! The minimum of S(X|EP) over completely positive maps consistent
//! with the observed statistics is attained on the slice
//! R_xy = R_yx = R_yz = R_zy = t_y = 0, so the search runs over the
//! seven remaining parameters. The method is derivative-free simplex
//! descent under an exterior quadratic penalty for the two constraints
//! (KL excess over the threshold, negative Choi eigenvalue), with the
//! penalty weight stepped up along a configured schedule and a final
//! bisection polish onto the feasible set. The objective and the
//! region are both convex along parameter segments, which multi-start
//! descent exploits and the test suite probes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::b92::{self, B92Params};
use crate::channel::{BlochChannel, FreeChannelParams};
use crate::estimation::{self, ConfidenceRegion};
use crate::{Error, Result};

/// Simplex vertices must collapse to this diameter (in parameter
/// space) before a stage is considered converged.
const SIMPLEX_DIAMETER_TOL: f64 = 1e-7;

/// Probability floor used inside the penalty term so that a support
/// mismatch produces a huge finite penalty instead of infinity.
const PENALTY_PROB_FLOOR: f64 = 1e-300;

/// Number of random feasible probes evaluated for the dominance gap.
const PROBE_COUNT: usize = 20;

/// Search configuration. `restarts` counts the independent starts
/// built from the reconstructed channel, the identity, and seeded
/// jitters of the reconstruction; any `hints` run in addition.
#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    /// Simplex iterations allowed per penalty stage.
    pub max_iterations: usize,
    /// Independent starting points (at least two are always used).
    pub restarts: usize,
    /// Increasing exterior-penalty weights, one descent stage each.
    pub constraint_penalty_schedule: Vec<f64>,
    /// Edge length of the initial simplex around each start.
    pub simplex_or_step_scale: f64,
    /// Objective spread (bits) below which a stage stops.
    pub convergence_tol: f64,
    /// Seed for start jitter and probe generation.
    pub seed: u64,
    /// Extra starting points, tried first; the caller's best guess at
    /// the channel (the true channel in expected mode) belongs here.
    pub hints: Vec<FreeChannelParams>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iterations: 3000,
            restarts: 4,
            constraint_penalty_schedule: vec![1e3, 1e5, 1e7],
            simplex_or_step_scale: 0.15,
            convergence_tol: 1e-9,
            seed: 0,
            hints: Vec::new(),
        }
    }
}

impl OptimizerOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Domain {
                name: "max_iterations",
                value: 0.0,
                bounds: "positive",
            });
        }
        if self.restarts == 0 {
            return Err(Error::Domain {
                name: "restarts",
                value: 0.0,
                bounds: "positive",
            });
        }
        if self.constraint_penalty_schedule.is_empty() {
            return Err(Error::Domain {
                name: "constraint_penalty_schedule",
                value: 0.0,
                bounds: "nonempty increasing positive sequence",
            });
        }
        let mut last = 0.0;
        for &w in &self.constraint_penalty_schedule {
            if !(w > last) {
                return Err(Error::Domain {
                    name: "constraint_penalty_schedule",
                    value: w,
                    bounds: "nonempty increasing positive sequence",
                });
            }
            last = w;
        }
        if !(self.simplex_or_step_scale > 0.0) {
            return Err(Error::Domain {
                name: "simplex_or_step_scale",
                value: self.simplex_or_step_scale,
                bounds: "positive",
            });
        }
        if !(self.convergence_tol >= 1e-10) {
            return Err(Error::Domain {
                name: "convergence_tol",
                value: self.convergence_tol,
                bounds: "at least 1e-10",
            });
        }
        Ok(())
    }
}

/// Outcome of one constrained minimization.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    /// Minimized S(X|EP), in bits (not normalized by the sift
    /// probability).
    pub min_value: f64,
    /// Parameters attaining the minimum.
    pub argmin: FreeChannelParams,
    /// Whether the argmin passes the region membership test.
    pub feasible: bool,
    /// Total simplex iterations across all starts and stages.
    pub iterations: usize,
    /// min over random feasible probes of S(probe) - min_value;
    /// nonnegative up to solver tolerance when the minimum is genuine.
    pub probe_gap: f64,
}

/// Single-point diagnostics: the objective value and the two
/// constraint margins.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveReport {
    /// S(X|EP) at the embedded channel, evaluated through the
    /// projected state so that infeasible points still report a value.
    pub value: f64,
    /// Region membership (CP within tolerance and KL within radius).
    pub feasible: bool,
    /// kl_threshold - D(lambda_m || lambda_inf(channel)); negative or
    /// -inf when the statistics exclude the channel.
    pub kl_slack: f64,
    /// Least Choi eigenvalue; feasible when >= -cp_tol.
    pub choi_slack: f64,
}

/// Evaluates the objective and constraint margins at one parameter
/// point. Works at arbitrary (even wildly infeasible) parameters.
pub fn objective(params: &FreeChannelParams, region: &ConfidenceRegion) -> ObjectiveReport {
    let ch = params.embed();
    let choi_slack = ch.min_choi_eigenvalue();
    let divergence = region.divergence_from(&ch);
    let kl_slack = region.kl_threshold - divergence;
    let feasible = choi_slack >= -region.cp_tol && divergence <= region.kl_threshold;
    let value = ambiguity_at(&ch, region).unwrap_or(f64::INFINITY);
    ObjectiveReport {
        value,
        feasible,
        kl_slack,
        choi_slack,
    }
}

/// S(X|EP) through the projected joint state; identical to the strict
/// evaluation on feasible channels.
fn ambiguity_at(ch: &BlochChannel, region: &ConfidenceRegion) -> Result<f64> {
    let rho1 = b92::joint_state_lenient(ch, region.alpha)?;
    b92::eve_ambiguity(&rho1, region.alpha)
}

/// Minimizes S(X|EP) over the confidence region on the 7-parameter
/// slice. Deterministic given the region and options.
pub fn min_eve_ambiguity(
    region: &ConfidenceRegion,
    opts: &OptimizerOptions,
) -> Result<OptimizationResult> {
    let (result, _) = minimize_with_details(region, opts)?;
    Ok(result)
}

/// As [`min_eve_ambiguity`], also returning the per-start polished
/// values (used by the restart-stability property check).
pub(crate) fn minimize_with_details(
    region: &ConfidenceRegion,
    opts: &OptimizerOptions,
) -> Result<(OptimizationResult, Vec<f64>)> {
    opts.validate()?;
    let x_ls = reconstructed_params(region)?;
    let identity = FreeChannelParams::identity();

    let mut starts: Vec<[f64; 7]> = Vec::new();
    for hint in &opts.hints {
        starts.push(hint.to_array());
    }
    starts.push(x_ls.to_array());
    starts.push(identity.to_array());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.hints.len() + opts.restarts.max(2) {
        let mut jittered = x_ls.to_array();
        for v in &mut jittered {
            *v += rng.gen_range(-1.0..1.0) * opts.simplex_or_step_scale;
        }
        starts.push(jittered);
    }

    // The region must be shown nonempty before descending: the
    // reconstructed channel, the identity, or a supplied hint has to
    // lie inside it.
    let anchor = starts
        .iter()
        .find(|x| feasible7(region, x))
        .copied()
        .ok_or(Error::InfeasibleRegion {
            restarts: opts.restarts,
        })?;

    let mut iterations = 0;
    let mut any_converged = false;
    let mut per_start: Vec<f64> = Vec::new();
    let anchor_value = value7(region, &anchor);
    let mut best: ([f64; 7], f64) = (anchor, anchor_value);
    if let Some(refined) = refine7(region, &anchor, opts) {
        let value = value7(region, &refined);
        if value < best.1 {
            best = (refined, value);
        }
    }

    for start in &starts {
        let mut x = start.to_vec();
        for (stage, &weight) in opts.constraint_penalty_schedule.iter().enumerate() {
            let step = opts.simplex_or_step_scale * 0.5_f64.powi(stage as i32);
            let outcome = nelder_mead(
                |y| penalized7(region, y, weight),
                &x,
                step,
                opts.max_iterations,
                opts.convergence_tol,
            );
            x = outcome.x;
            iterations += outcome.iterations;
            any_converged |= outcome.converged;
        }
        let mut candidate = polish7(region, &to_array7(&x), &anchor);
        let mut value = value7(region, &candidate);
        if let Some(refined) = refine7(region, &candidate, opts) {
            let refined_value = value7(region, &refined);
            if refined_value < value {
                candidate = refined;
                value = refined_value;
            }
        }
        per_start.push(value);
        if value < best.1 {
            best = (candidate, value);
        }
    }

    if !any_converged {
        return Err(Error::OptimizerConvergence(format!(
            "no penalty stage contracted its simplex within {} iterations",
            opts.max_iterations
        )));
    }

    let argmin = FreeChannelParams::from_array(best.0);
    let feasible = region.contains(&argmin.embed());
    let probe_gap = probe_gap7(region, &anchor, best.1, opts.seed);
    Ok((
        OptimizationResult {
            min_value: best.1,
            argmin,
            feasible,
            iterations,
            probe_gap,
        },
        per_start,
    ))
}

/// Diagnostic search over all 12 Bloch parameters (the 3x3 matrix and
/// the shift), used to check that the 7-parameter slice does not miss
/// a lower minimum. Returns the polished minimum value.
pub fn min_eve_ambiguity_full12(
    region: &ConfidenceRegion,
    opts: &OptimizerOptions,
) -> Result<f64> {
    opts.validate()?;
    let x_ls = reconstructed_params(region)?;
    let identity12 = to_vec12(&FreeChannelParams::identity().embed());

    let mut starts: Vec<Vec<f64>> = Vec::new();
    for hint in &opts.hints {
        starts.push(to_vec12(&hint.embed()));
    }
    starts.push(to_vec12(&x_ls.embed()));
    starts.push(identity12);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.hints.len() + opts.restarts.max(2) {
        let mut jittered = to_vec12(&x_ls.embed());
        for v in &mut jittered {
            *v += rng.gen_range(-1.0..1.0) * opts.simplex_or_step_scale;
        }
        starts.push(jittered);
    }

    let anchor = starts
        .iter()
        .find(|x| feasible12(region, x))
        .cloned()
        .ok_or(Error::InfeasibleRegion {
            restarts: opts.restarts,
        })?;

    let mut any_converged = false;
    let anchor_value = value12(region, &anchor);
    let mut best = anchor_value;
    if let Some(refined) = refine_in_null_space(region, &anchor, 12, channel12, opts) {
        best = best.min(value12(region, &refined));
    }

    for start in &starts {
        let mut x = start.clone();
        for (stage, &weight) in opts.constraint_penalty_schedule.iter().enumerate() {
            let step = opts.simplex_or_step_scale * 0.5_f64.powi(stage as i32);
            let outcome = nelder_mead(
                |y| penalized12(region, y, weight),
                &x,
                step,
                opts.max_iterations,
                opts.convergence_tol,
            );
            x = outcome.x;
            any_converged |= outcome.converged;
        }
        let polished = polish12(region, &x, &anchor);
        let mut value = value12(region, &polished);
        if let Some(refined) = refine_in_null_space(region, &polished, 12, channel12, opts) {
            value = value.min(value12(region, &refined));
        }
        if value < best {
            best = value;
        }
    }

    if !any_converged {
        return Err(Error::OptimizerConvergence(format!(
            "no penalty stage contracted its simplex within {} iterations",
            opts.max_iterations
        )));
    }
    Ok(best)
}

/// Design matrix and offset of the parameter-to-outcome map for an
/// n-dimensional channel embedding. The map is exactly affine, so
/// unit-vector evaluations determine it completely.
fn affine_design(
    region: &ConfidenceRegion,
    n: usize,
    embed: impl Fn(&[f64]) -> BlochChannel,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let params = region.params();
    let zero = vec![0.0_f64; n];
    let offset = raw_distribution(&embed(&zero), &params)?;
    let mut design = DMatrix::<f64>::zeros(9, n);
    for j in 0..n {
        let mut unit = zero.clone();
        unit[j] = 1.0;
        let column = raw_distribution(&embed(&unit), &params)?;
        for i in 0..9 {
            design[(i, j)] = column[i] - offset[i];
        }
    }
    Ok((design, DVector::from_row_slice(&offset)))
}

/// Least-squares channel reconstruction from the observed statistics,
/// via the minimum-norm solution of the affine outcome map. The map
/// has a nontrivial null space, so this is one consistent channel, not
/// the only one.
fn reconstructed_params(region: &ConfidenceRegion) -> Result<FreeChannelParams> {
    let (design, offset) = affine_design(region, 7, |x| channel7(&to_array7(x)))?;
    let rhs = DVector::<f64>::from_iterator(
        9,
        region
            .lambda_m
            .probs
            .iter()
            .zip(offset.iter())
            .map(|(&lam, &off)| lam - off),
    );
    let solution = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::OptimizerConvergence(format!("channel reconstruction failed: {e}")))?;
    Ok(FreeChannelParams::from_array([
        solution[0], solution[1], solution[2], solution[3], solution[4], solution[5], solution[6],
    ]))
}

/// Outcome traces without any positivity projection; exactly affine in
/// the channel parameters, as the reconstruction requires.
fn raw_distribution(ch: &BlochChannel, params: &B92Params) -> Result<[f64; 9]> {
    let psi = b92::source_state(params.alpha())?;
    let rho_raw = ch.apply_on_second_factor_raw(&psi.projector());
    let povm = estimation::estimation_povm(params)?;
    let mut out = [0.0_f64; 9];
    for (slot, op) in out.iter_mut().zip(povm.elements.iter()) {
        *slot = (&rho_raw * op).trace().re;
    }
    Ok(out)
}

fn to_array7(x: &[f64]) -> [f64; 7] {
    let mut out = [0.0_f64; 7];
    out.copy_from_slice(&x[..7]);
    out
}

fn channel7(x: &[f64; 7]) -> BlochChannel {
    FreeChannelParams::from_array(*x).embed()
}

fn to_vec12(ch: &BlochChannel) -> Vec<f64> {
    let r = ch.r();
    let t = ch.t();
    vec![
        r[(0, 0)],
        r[(0, 1)],
        r[(0, 2)],
        r[(1, 0)],
        r[(1, 1)],
        r[(1, 2)],
        r[(2, 0)],
        r[(2, 1)],
        r[(2, 2)],
        t[0],
        t[1],
        t[2],
    ]
}

fn channel12(x: &[f64]) -> BlochChannel {
    let r = nalgebra::Matrix3::new(
        x[0], x[1], x[2], //
        x[3], x[4], x[5], //
        x[6], x[7], x[8],
    );
    let t = nalgebra::Vector3::new(x[9], x[10], x[11]);
    BlochChannel::new(r, t).expect("simplex iterates are finite")
}

fn feasible7(region: &ConfidenceRegion, x: &[f64; 7]) -> bool {
    region.contains(&channel7(x))
}

fn feasible12(region: &ConfidenceRegion, x: &[f64]) -> bool {
    region.contains(&channel12(x))
}

fn value7(region: &ConfidenceRegion, x: &[f64; 7]) -> f64 {
    ambiguity_at(&channel7(x), region).unwrap_or(f64::INFINITY)
}

fn value12(region: &ConfidenceRegion, x: &[f64]) -> f64 {
    ambiguity_at(&channel12(x), region).unwrap_or(f64::INFINITY)
}

fn penalized7(region: &ConfidenceRegion, x: &[f64], weight: f64) -> f64 {
    penalized_channel(region, &channel7(&to_array7(x)), weight)
}

fn penalized12(region: &ConfidenceRegion, x: &[f64], weight: f64) -> f64 {
    penalized_channel(region, &channel12(x), weight)
}

/// Objective plus exterior quadratic penalty: S + w((D - thr)_+^2 +
/// (-(choi_min + cp_tol))_+^2). The KL term floors the candidate
/// probabilities so a support mismatch stays finite.
fn penalized_channel(region: &ConfidenceRegion, ch: &BlochChannel, weight: f64) -> f64 {
    let value = match ambiguity_at(ch, region) {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };
    let choi_min = ch.min_choi_eigenvalue();
    let divergence = floored_divergence(region, ch);
    let kl_excess = (divergence - region.kl_threshold).max(0.0);
    let choi_excess = (-(choi_min + region.cp_tol)).max(0.0);
    value + weight * (kl_excess * kl_excess + choi_excess * choi_excess)
}

fn floored_divergence(region: &ConfidenceRegion, ch: &BlochChannel) -> f64 {
    let params = region.params();
    let lam = match estimation::channel_distribution_lenient(ch, &params) {
        Ok(lam) => lam,
        Err(_) => return f64::MAX.sqrt(),
    };
    let mut d = 0.0;
    for (&p, &q) in region.lambda_m.probs.iter().zip(lam.probs.iter()) {
        if p > 0.0 {
            d += p * (p / q.max(PENALTY_PROB_FLOOR)).log2();
        }
    }
    d.max(0.0)
}

/// Restores feasibility of a descent endpoint with minimal loss of
/// progress. A least-squares step along the affine outcome map cancels
/// the statistics mismatch without disturbing displacement in the
/// map's null space, where the penalty stages make most of their
/// gains; when that misses (statistics off the affine image, or a
/// complete-positivity boundary crossing), bisection toward a known
/// feasible anchor takes over.
fn project_feasible(
    region: &ConfidenceRegion,
    x: &[f64],
    n: usize,
    embed: impl Fn(&[f64]) -> BlochChannel + Copy,
) -> Option<Vec<f64>> {
    let (design, offset) = affine_design(region, n, embed).ok()?;
    let svd = design.clone().svd(true, true);
    let target = DVector::<f64>::from_row_slice(&region.lambda_m.probs);
    let mut y = DVector::<f64>::from_row_slice(x);
    // The map is affine, so one step lands on the least-squares
    // manifold; the extras absorb rounding and mild clamping effects.
    for _ in 0..4 {
        let residual = &target - (&offset + &design * &y);
        let delta = svd.solve(&residual, 1e-12).ok()?;
        y += delta;
        let point: Vec<f64> = y.iter().copied().collect();
        if region.contains(&embed(&point)) {
            return Some(point);
        }
    }
    None
}

/// Pulls an infeasible endpoint onto the feasible set by bisecting
/// toward a known feasible anchor. Region convexity makes the
/// feasibility boundary a single crossing along the segment.
fn polish(x: &[f64], anchor: &[f64], feasible: impl Fn(&[f64]) -> bool) -> Vec<f64> {
    if feasible(x) {
        return x.to_vec();
    }
    let blend = |lambda: f64| -> Vec<f64> {
        x.iter()
            .zip(anchor.iter())
            .map(|(&a, &b)| (1.0 - lambda) * a + lambda * b)
            .collect()
    };
    let mut lo = 0.0_f64; // infeasible end
    let mut hi = 1.0_f64; // feasible end (the anchor)
    if !feasible(anchor) {
        return anchor.to_vec();
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if feasible(&blend(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let candidate = blend(hi);
    if feasible(&candidate) {
        candidate
    } else {
        anchor.to_vec()
    }
}

fn polish7(region: &ConfidenceRegion, x: &[f64; 7], anchor: &[f64; 7]) -> [f64; 7] {
    if feasible7(region, x) {
        return *x;
    }
    if let Some(projected) = project_feasible(region, x, 7, |y| channel7(&to_array7(y))) {
        return to_array7(&projected);
    }
    let polished = polish(x, anchor, |y| feasible7(region, &to_array7(y)));
    to_array7(&polished)
}

fn polish12(region: &ConfidenceRegion, x: &[f64], anchor: &[f64]) -> Vec<f64> {
    if feasible12(region, x) {
        return x.to_vec();
    }
    if let Some(projected) = project_feasible(region, x, 12, channel12) {
        return projected;
    }
    polish(x, anchor, |y| feasible12(region, y))
}

/// Slides a feasible point along the outcome map's null space. The
/// predicted statistics are invariant there, so the divergence
/// constraint holds by construction and only complete positivity
/// bounds the move; these are exactly the directions estimation cannot
/// see, where the ambiguity still varies and the minimum hides. The
/// penalty-stage simplex handles them poorly because the orthogonal
/// directions wall it in, so a dedicated descent restricted to the
/// null coordinates does the sliding: repeated simplex rounds with
/// fresh, shrinking simplexes, each endpoint pulled back inside the
/// positivity wall it presses against. Returns a feasible improvement
/// or nothing.
fn refine_in_null_space(
    region: &ConfidenceRegion,
    x: &[f64],
    n: usize,
    embed: impl Fn(&[f64]) -> BlochChannel + Copy,
    opts: &OptimizerOptions,
) -> Option<Vec<f64>> {
    let (design, _) = affine_design(region, n, embed).ok()?;
    let gram = design.transpose() * &design;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let max_eig = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for (j, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev <= max_eig * 1e-12 {
            basis.push(eig.eigenvectors.column(j).into_owned());
        }
    }
    if basis.is_empty() || !region.contains(&embed(x)) {
        return None;
    }
    let weight = opts
        .constraint_penalty_schedule
        .last()
        .copied()
        .unwrap_or(1e7);

    let mut current = x.to_vec();
    let mut current_value = ambiguity_at(&embed(&current), region).ok()?;
    for round in 0..6 {
        let base = DVector::<f64>::from_row_slice(&current);
        let to_point = |z: &[f64]| -> Vec<f64> {
            let mut p = base.clone();
            for (zj, b) in z.iter().zip(basis.iter()) {
                p += b * *zj;
            }
            p.iter().copied().collect()
        };
        let step = opts.simplex_or_step_scale * 0.5_f64.powi(round.min(3));
        let outcome = nelder_mead(
            |z| penalized_channel(region, &embed(&to_point(z)), weight),
            &vec![0.0_f64; basis.len()],
            step,
            opts.max_iterations,
            opts.convergence_tol,
        );
        // The soft positivity penalty lets the endpoint overshoot the
        // wall by its equilibrium slack. The round's base is feasible
        // and the feasible set is convex along the null plane, so
        // scaling the displacement back recovers the inside.
        let endpoint = if region.contains(&embed(&to_point(&outcome.x))) {
            to_point(&outcome.x)
        } else {
            let scaled = |t: f64| -> Vec<f64> { outcome.x.iter().map(|&z| t * z).collect() };
            let mut lo = 0.0_f64; // feasible
            let mut hi = 1.0_f64; // infeasible
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if region.contains(&embed(&to_point(&scaled(mid)))) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            to_point(&scaled(lo))
        };
        let value = ambiguity_at(&embed(&endpoint), region).unwrap_or(f64::INFINITY);
        if value + 1e-9 < current_value {
            current = endpoint;
            current_value = value;
        } else {
            break;
        }
    }
    Some(current)
}

fn refine7(region: &ConfidenceRegion, x: &[f64; 7], opts: &OptimizerOptions) -> Option<[f64; 7]> {
    let refined = refine_in_null_space(region, x, 7, |y| channel7(&to_array7(y)), opts)?;
    Some(to_array7(&refined))
}

/// Draws random feasible points around the anchor (shrinking toward it
/// until feasible) and reports min S(probe) - min_value.
fn probe_gap7(region: &ConfidenceRegion, anchor: &[f64; 7], min_value: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let radius = (3.0 * region.kl_threshold.sqrt()).clamp(1e-4, 0.5);
    let mut gap = f64::INFINITY;
    for _ in 0..PROBE_COUNT {
        let mut delta = [0.0_f64; 7];
        for d in &mut delta {
            *d = rng.gen_range(-1.0..1.0) * radius;
        }
        let mut probe = *anchor;
        let mut ok = false;
        for _ in 0..60 {
            for i in 0..7 {
                probe[i] = anchor[i] + delta[i];
            }
            if feasible7(region, &probe) {
                ok = true;
                break;
            }
            for d in &mut delta {
                *d *= 0.5;
            }
        }
        if !ok {
            probe = *anchor;
        }
        gap = gap.min(value7(region, &probe) - min_value);
    }
    gap
}

struct SimplexOutcome {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Nelder-Mead descent with the standard coefficients (reflect 1,
/// expand 2, contract 1/2, shrink 1/2). Stops when the simplex
/// diameter falls under 1e-7 and the value spread under `tol`, or when
/// the best value stagnates (under `tol` of improvement across a
/// window of iterations); the objective is flat along the statistics
/// map's null directions, where the simplex drifts without shrinking.
fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_iterations: usize,
    tol: f64,
) -> SimplexOutcome {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        let fv = f(&v);
        simplex.push((v, fv));
    }

    let better = |a: f64, b: f64| a < b || b.is_nan();
    let stagnation_window = (15 * n).max(50);
    let mut next_stagnation_check = stagnation_window;
    let mut value_at_last_check = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(simplex[0].0.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0_f64, f64::max);
        let spread = simplex[n].1 - simplex[0].1;
        if diameter < SIMPLEX_DIAMETER_TOL && spread.abs() < tol {
            converged = true;
            break;
        }
        if iterations >= next_stagnation_check {
            if value_at_last_check - simplex[0].1 < tol {
                converged = true;
                break;
            }
            value_at_last_check = simplex[0].1;
            next_stagnation_check += stagnation_window;
        }
        iterations += 1;

        let mut centroid = vec![0.0_f64; n];
        for (v, _) in &simplex[..n] {
            for (c, &vi) in centroid.iter_mut().zip(v.iter()) {
                *c += vi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(worst.0.iter())
            .map(|(&c, &w)| c + (c - w))
            .collect();
        let f_reflect = f(&reflect);

        if better(f_reflect, simplex[0].1) {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(reflect.iter())
                .map(|(&c, &r)| c + 2.0 * (r - c))
                .collect();
            let f_expand = f(&expand);
            simplex[n] = if better(f_expand, f_reflect) {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
        } else if better(f_reflect, simplex[n - 1].1) {
            simplex[n] = (reflect, f_reflect);
        } else {
            let toward = if better(f_reflect, worst.1) {
                &reflect
            } else {
                &worst.0
            };
            let contract: Vec<f64> = centroid
                .iter()
                .zip(toward.iter())
                .map(|(&c, &t)| c + 0.5 * (t - c))
                .collect();
            let f_contract = f(&contract);
            if better(f_contract, f_reflect.min(worst.1)) {
                simplex[n] = (contract, f_contract);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = best
                        .iter()
                        .zip(entry.0.iter())
                        .map(|(&b, &v)| b + 0.5 * (v - b))
                        .collect();
                    let fv = f(&shrunk);
                    *entry = (shrunk, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    SimplexOutcome {
        x: simplex[0].0.clone(),
        iterations,
        converged,
    }
}
