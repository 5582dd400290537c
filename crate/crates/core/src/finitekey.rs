//! The finite-size key rate: minimized adversary ambiguity over the
//! confidence region, reconciliation leakage from the observed
//! statistics, and the privacy-amplification correction.
//!
//! The per-bit rate is
//!   rate = min S(X|EP) / Pr(sift) - H(X'|Y') - Delta/n,
//! where the minimum runs over the confidence region built from m
//! estimation rounds, the leakage comes from the disclosed sift
//! statistics, and Delta/n accounts for smoothing and hashing failure
//! probabilities over the n-bit privacy-amplification block.

use crate::b92::{self, B92Params};
use crate::channel::{BlochChannel, FreeChannelParams, CP_TOL};
use crate::estimation::{self, ConfidenceRegion, OutcomeDistribution, StatisticsMode};
use crate::optimize::{self, OptimizerOptions};
use crate::{Error, Result};

/// KL radius standing in for the m -> infinity limit: small enough
/// that the statistics pin the channel to working precision, nonzero
/// so the region retains the null directions of the outcome map that
/// genuine estimation can never resolve.
pub const ASYMPTOTIC_KL_RADIUS: f64 = 1e-12;

/// Failure-probability budget: estimation, smoothing, and privacy
/// amplification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityParams {
    pub eps_pe: f64,
    pub eps_bar: f64,
    pub eps_pa: f64,
}

impl SecurityParams {
    pub fn new(eps_pe: f64, eps_bar: f64, eps_pa: f64) -> Result<Self> {
        for (name, value) in [
            ("eps_pe", eps_pe),
            ("eps_bar", eps_bar),
            ("eps_pa", eps_pa),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::Domain {
                    name: match name {
                        "eps_pe" => "eps_pe",
                        "eps_bar" => "eps_bar",
                        _ => "eps_pa",
                    },
                    value,
                    bounds: "0 < eps < 1",
                });
            }
        }
        Ok(SecurityParams {
            eps_pe,
            eps_bar,
            eps_pa,
        })
    }
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams {
            eps_pe: 1e-5,
            eps_bar: 1e-5,
            eps_pa: 1e-5,
        }
    }
}

/// Which quantity the reported rate normalizes the minimized ambiguity
/// by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateNormalization {
    /// Divide min S(X|EP) by the sift probability at the minimizing
    /// channel, so the finite rate converges to the asymptotic formula
    /// as the region shrinks. The default.
    SiftAtArgmin,
    /// Report min S(X|EP) unnormalized, for comparison.
    Literal,
}

/// Everything the rate computation produced for one parameter point.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// Secret bits per privacy-amplified bit; negative means no secure
    /// key.
    pub rate: f64,
    /// Minimized S(X|EP) after normalization.
    pub min_eve_ambiguity_normalized: f64,
    /// Reconciliation leakage H(X'|Y') from the disclosed statistics.
    pub leak: f64,
    /// Privacy-amplification correction Delta/n.
    pub delta_per_n: f64,
    /// Privacy-amplification block size.
    pub n: u64,
    /// Estimation rounds.
    pub m: u64,
    /// Channel attaining the minimum.
    pub argmin_channel: BlochChannel,
    /// Whether the argmin passed the region membership test.
    pub feasible: bool,
    /// How the statistics were produced.
    pub mode: StatisticsMode,
    pub warnings: Vec<String>,
}

/// Number of bits entering privacy amplification: the undisclosed
/// conclusive rounds, i.e. the weight of the last estimation outcome.
/// Expected mode rounds m times the probability; sampled frequencies
/// are exact counts over m, so the same expression recovers the count.
pub fn privacy_block_size(lam: &OutcomeDistribution, m: u64) -> Result<u64> {
    if m == 0 {
        return Err(Error::Domain {
            name: "m",
            value: 0.0,
            bounds: "m >= 1",
        });
    }
    let n = (m as f64 * lam.probs[8]).round() as u64;
    if n == 0 {
        return Err(Error::DegenerateBlock { m });
    }
    Ok(n)
}

/// The per-bit finite-size correction
/// Delta/n = 7 sqrt(log2(2/eps_bar)/n) + (2/n) log2(1/eps_pa),
/// strictly decreasing in n and vanishing as n grows.
pub fn delta_correction(n: u64, sec: &SecurityParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain {
            name: "n",
            value: 0.0,
            bounds: "n >= 1",
        });
    }
    let n_f = n as f64;
    let smoothing = 7.0 * ((2.0 / sec.eps_bar).log2() / n_f).sqrt();
    let hashing = 2.0 / n_f * (1.0 / sec.eps_pa).log2();
    Ok(smoothing + hashing)
}

/// Reconciliation leakage from the disclosed conclusive outcomes:
/// entries 0, 1, 4, 5 of the empirical distribution form the joint
/// (bit, outcome) statistics; leak = H(X'|Y') of their normalization.
fn leak_from_statistics(lam: &OutcomeDistribution) -> Result<f64> {
    let joint = [lam.probs[0], lam.probs[1], lam.probs[4], lam.probs[5]];
    let total: f64 = joint.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSift(
            "no disclosed conclusive outcomes in the statistics".into(),
        ));
    }
    let marginal_y = [joint[0] + joint[2], joint[1] + joint[3]];
    Ok(b92::shannon_bits(&joint, total) - b92::shannon_bits(&marginal_y, total))
}

/// Sift probability at the minimizing channel, used to normalize the
/// minimized ambiguity.
fn sift_at(ch: &BlochChannel, params: &B92Params) -> Result<f64> {
    let rho1 = b92::joint_state_lenient(ch, params.alpha())?;
    b92::sift_probability(&rho1, params.alpha())
}

/// Pushes the channel itself onto the optimizer's hint list when it
/// lies on the search slice, giving the search a feasible anchor.
fn with_channel_hint(ch: &BlochChannel, opts: &OptimizerOptions) -> OptimizerOptions {
    let mut opts = opts.clone();
    if let Ok(params) = FreeChannelParams::from_channel(ch, 1e-12) {
        opts.hints.push(params);
    }
    opts
}

/// The finite-size key rate at a channel, by the full pipeline:
/// statistics of the true channel, empirical distribution in the given
/// mode, confidence region at kl_threshold(m, eps_pe), minimized
/// ambiguity, leakage, block size, and correction.
pub fn finite_rate(
    ch: &BlochChannel,
    params: &B92Params,
    m: u64,
    sec: &SecurityParams,
    mode: StatisticsMode,
    seed: u64,
    opts: &OptimizerOptions,
) -> Result<RateReport> {
    finite_rate_with(
        ch,
        params,
        m,
        sec,
        mode,
        seed,
        opts,
        RateNormalization::SiftAtArgmin,
    )
}

/// As [`finite_rate`], with the normalization convention explicit.
#[allow(clippy::too_many_arguments)]
pub fn finite_rate_with(
    ch: &BlochChannel,
    params: &B92Params,
    m: u64,
    sec: &SecurityParams,
    mode: StatisticsMode,
    seed: u64,
    opts: &OptimizerOptions,
    normalization: RateNormalization,
) -> Result<RateReport> {
    let lam_inf = estimation::channel_distribution(ch, params)?;
    let lam_m = estimation::empirical_distribution(&lam_inf, m, mode, seed)?;
    let threshold = estimation::kl_threshold(m, sec.eps_pe)?;
    let region = ConfidenceRegion::new(lam_m.clone(), threshold, CP_TOL, params)?;
    let opts = with_channel_hint(ch, opts);
    let result = optimize::min_eve_ambiguity(&region, &opts)?;

    let mut warnings = Vec::new();
    let argmin_channel = result.argmin.embed();
    if !result.feasible {
        warnings.push("minimizing channel failed the region membership test".to_string());
    }
    let min_eve_ambiguity_normalized = match normalization {
        RateNormalization::SiftAtArgmin => {
            let p_sift = sift_at(&argmin_channel, params)?;
            if p_sift <= 0.0 {
                return Err(Error::DegenerateSift(
                    "sift probability vanishes at the minimizing channel".into(),
                ));
            }
            result.min_value / p_sift
        }
        RateNormalization::Literal => result.min_value,
    };
    let leak = leak_from_statistics(&lam_m)?;
    let n = privacy_block_size(&lam_m, m)?;
    let delta_per_n = delta_correction(n, sec)?;
    let rate = min_eve_ambiguity_normalized - leak - delta_per_n;
    if rate < 0.0 {
        warnings.push("negative key rate: no secure key at these parameters".to_string());
    }
    Ok(RateReport {
        rate,
        min_eve_ambiguity_normalized,
        leak,
        delta_per_n,
        n,
        m,
        argmin_channel,
        feasible: result.feasible,
        mode,
        warnings,
    })
}

/// The estimation-limited asymptotic rate: the m -> infinity limit of
/// the finite-size rate, where the statistical radius and the
/// correction vanish but the outcome map's null directions remain free
/// for the adversary. Always at or above every finite-m rate of the
/// same channel; strictly below the single-channel evaluation wherever
/// the null directions admit a worse consistent channel.
pub fn asymptotic_rate(
    ch: &BlochChannel,
    params: &B92Params,
    opts: &OptimizerOptions,
) -> Result<f64> {
    let lam_inf = estimation::channel_distribution(ch, params)?;
    let region =
        ConfidenceRegion::new(lam_inf.clone(), ASYMPTOTIC_KL_RADIUS, CP_TOL, params)?;
    let opts = with_channel_hint(ch, opts);
    let result = optimize::min_eve_ambiguity(&region, &opts)?;
    let p_sift = sift_at(&result.argmin.embed(), params)?;
    if p_sift <= 0.0 {
        return Err(Error::DegenerateSift(
            "sift probability vanishes at the minimizing channel".into(),
        ));
    }
    let leak = leak_from_statistics(&lam_inf)?;
    Ok(result.min_value / p_sift - leak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::TotalWeight;
    use approx::assert_abs_diff_eq;

    fn params() -> B92Params {
        B92Params::new(0.39, 0.5).unwrap()
    }

    fn fast_opts() -> OptimizerOptions {
        OptimizerOptions {
            max_iterations: 2000,
            restarts: 2,
            constraint_penalty_schedule: vec![1e4, 1e6],
            ..OptimizerOptions::default()
        }
    }

    #[test]
    fn security_params_bounds() {
        assert!(SecurityParams::new(1e-5, 1e-5, 1e-5).is_ok());
        assert!(SecurityParams::new(0.0, 1e-5, 1e-5).is_err());
        assert!(SecurityParams::new(1e-5, 1.0, 1e-5).is_err());
        let defaults = SecurityParams::default();
        assert_eq!(defaults.eps_pe, 1e-5);
        assert_eq!(defaults.eps_bar, 1e-5);
        assert_eq!(defaults.eps_pa, 1e-5);
    }

    #[test]
    fn block_size_of_identity_statistics() {
        let lam =
            estimation::channel_distribution(&BlochChannel::identity(), &params()).unwrap();
        assert_eq!(privacy_block_size(&lam, 100_000_000).unwrap(), 12_896_559);
    }

    #[test]
    fn block_size_counts_sampled_outcomes_exactly() {
        let p = params();
        let lam_inf =
            estimation::channel_distribution(&BlochChannel::depolarizing(0.05).unwrap(), &p)
                .unwrap();
        let m = 10_000;
        let lam_m =
            estimation::empirical_distribution(&lam_inf, m, StatisticsMode::Sampled, 3).unwrap();
        let n = privacy_block_size(&lam_m, m).unwrap();
        assert_abs_diff_eq!(n as f64, lam_m.probs[8] * m as f64, epsilon = 1e-9);
    }

    #[test]
    fn empty_block_is_degenerate() {
        let mut probs = [0.0_f64; 9];
        probs[3] = 1.0;
        let lam = OutcomeDistribution::new(probs, TotalWeight::Samples(1)).unwrap();
        match privacy_block_size(&lam, 1) {
            Err(Error::DegenerateBlock { m: 1 }) => {}
            other => panic!("expected a degenerate-block error, got {other:?}"),
        }
    }

    #[test]
    fn delta_correction_reference_value() {
        let sec = SecurityParams::default();
        assert_abs_diff_eq!(
            delta_correction(1_000_000, &sec).unwrap(),
            0.029_407_908_781_391_323,
            epsilon = 1e-15
        );
        assert!(delta_correction(1_000_000_000, &sec).unwrap() < 1e-3);
        assert!(delta_correction(0, &sec).is_err());
    }

    #[test]
    fn delta_correction_decreases_in_block_size() {
        let sec = SecurityParams::default();
        let mut n = 1_000_u64;
        let mut last = f64::INFINITY;
        for _ in 0..10 {
            let d = delta_correction(n, &sec).unwrap();
            assert!(d < last);
            last = d;
            n *= 2;
        }
    }

    #[test]
    fn finite_rate_reference_point() {
        let report = finite_rate(
            &BlochChannel::depolarizing(0.05).unwrap(),
            &params(),
            1_000_000,
            &SecurityParams::default(),
            StatisticsMode::Expected,
            0,
            &fast_opts(),
        )
        .unwrap();
        // Barely positive at a million rounds; the margin is thin
        // enough that only magnitude is pinned here.
        assert_abs_diff_eq!(report.rate, 2.53e-4, epsilon = 5e-4);
        assert_abs_diff_eq!(report.leak, 0.330_660, epsilon = 1e-5);
        assert_abs_diff_eq!(
            report.rate,
            report.min_eve_ambiguity_normalized - report.leak - report.delta_per_n,
            epsilon = 1e-12
        );
        assert!(report.feasible);
        assert_eq!(report.m, 1_000_000);
        let expected_n = (1_000_000.0
            * estimation::channel_distribution(
                &BlochChannel::depolarizing(0.05).unwrap(),
                &params(),
            )
            .unwrap()
            .probs[8])
            .round() as u64;
        assert_eq!(report.n, expected_n);
    }

    #[test]
    fn rate_grows_with_sample_size() {
        let ch = BlochChannel::depolarizing(0.05).unwrap();
        let p = params();
        let sec = SecurityParams::default();
        let opts = fast_opts();
        let r5 = finite_rate(&ch, &p, 100_000, &sec, StatisticsMode::Expected, 0, &opts)
            .unwrap()
            .rate;
        let r6 = finite_rate(&ch, &p, 1_000_000, &sec, StatisticsMode::Expected, 0, &opts)
            .unwrap()
            .rate;
        assert!(r5 < r6);
        assert!(r5 < 0.0, "a hundred thousand rounds are not enough here");
    }

    #[test]
    fn rate_shrinks_as_estimation_confidence_tightens() {
        let ch = BlochChannel::depolarizing(0.05).unwrap();
        let p = params();
        let opts = fast_opts();
        let loose = SecurityParams::new(1e-3, 1e-5, 1e-5).unwrap();
        let tight = SecurityParams::new(1e-9, 1e-5, 1e-5).unwrap();
        let r_loose = finite_rate(&ch, &p, 1_000_000, &loose, StatisticsMode::Expected, 0, &opts)
            .unwrap()
            .rate;
        let r_tight = finite_rate(&ch, &p, 1_000_000, &tight, StatisticsMode::Expected, 0, &opts)
            .unwrap()
            .rate;
        assert!(r_tight <= r_loose + 1e-6);
    }

    #[test]
    fn negative_rate_carries_a_warning() {
        let report = finite_rate(
            &BlochChannel::depolarizing(0.10).unwrap(),
            &params(),
            1_000_000,
            &SecurityParams::default(),
            StatisticsMode::Expected,
            0,
            &fast_opts(),
        )
        .unwrap();
        assert!(report.rate < 0.0);
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("no secure key")));
    }

    #[test]
    fn literal_normalization_reports_the_raw_minimum() {
        let ch = BlochChannel::depolarizing(0.05).unwrap();
        let p = params();
        let sec = SecurityParams::default();
        let opts = fast_opts();
        let normalized = finite_rate(&ch, &p, 1_000_000, &sec, StatisticsMode::Expected, 0, &opts)
            .unwrap();
        let literal = finite_rate_with(
            &ch,
            &p,
            1_000_000,
            &sec,
            StatisticsMode::Expected,
            0,
            &opts,
            RateNormalization::Literal,
        )
        .unwrap();
        // Dividing by a sift probability below one only raises the
        // ambiguity term.
        assert!(literal.min_eve_ambiguity_normalized < normalized.min_eve_ambiguity_normalized);
        assert!(literal.rate < normalized.rate);
    }

    #[test]
    fn sampled_mode_is_deterministic_in_the_seed() {
        let ch = BlochChannel::depolarizing(0.05).unwrap();
        let p = params();
        let sec = SecurityParams::default();
        let opts = fast_opts();
        let a = finite_rate(&ch, &p, 100_000, &sec, StatisticsMode::Sampled, 11, &opts).unwrap();
        let b = finite_rate(&ch, &p, 100_000, &sec, StatisticsMode::Sampled, 11, &opts).unwrap();
        assert_eq!(a.rate, b.rate);
        assert_eq!(a.n, b.n);
    }

    #[test]
    fn asymptotic_rate_is_exact_on_a_noiseless_line() {
        // Any completely positive map consistent with noiseless
        // statistics must fix both non-orthogonal signals, which pins
        // it to the identity.
        let rate = asymptotic_rate(&BlochChannel::identity(), &params(), &fast_opts()).unwrap();
        assert_abs_diff_eq!(rate, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn asymptotic_rate_reference_point() {
        let rate = asymptotic_rate(
            &BlochChannel::depolarizing(0.05).unwrap(),
            &params(),
            &fast_opts(),
        )
        .unwrap();
        assert_abs_diff_eq!(rate, 0.104_459, epsilon = 1e-3);
        // Strictly below the single-channel evaluation: the
        // statistics leave null directions free for the adversary.
        let direct =
            b92::asymptotic_rate(&BlochChannel::depolarizing(0.05).unwrap(), 0.39).unwrap();
        assert!(rate < direct - 0.2);
    }

    #[test]
    fn finite_rates_stay_below_the_asymptote() {
        let ch = BlochChannel::depolarizing(0.05).unwrap();
        let p = params();
        let opts = fast_opts();
        let asym = asymptotic_rate(&ch, &p, &opts).unwrap();
        for m in [100_000_u64, 1_000_000] {
            let rate = finite_rate(
                &ch,
                &p,
                m,
                &SecurityParams::default(),
                StatisticsMode::Expected,
                0,
                &opts,
            )
            .unwrap()
            .rate;
            assert!(rate < asym);
        }
    }
}
