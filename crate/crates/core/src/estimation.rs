//! Channel-estimation statistics: the nine-outcome measurement, its
//! theoretical and empirical outcome distributions, KL divergence, the
//! type-class threshold, and the confidence-region membership test.
//!
//! Each transmitted round yields one of nine coarse outcomes: Alice's
//! bit crossed with Bob's four measurement results for disclosed
//! rounds (a conclusive result is disclosed with probability r_pub),
//! plus a single aggregate outcome for conclusive rounds that were
//! kept for the key. The empirical frequencies over m rounds pin the
//! channel down to a KL ball that shrinks like log(m)/m.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::b92::{sift_povm, B92Params};
use crate::channel::BlochChannel;
use crate::qmath::{tensor, CMatrix, DensityMatrix};
use crate::{b92, Error, Result};

/// Entries of the theoretical distribution more negative than this are
/// a genuine inconsistency; anything in (`PROB_FLOOR`, 0) is clamped.
const PROB_FLOOR: f64 = -1e-10;

fn complex(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// The nine-outcome estimation measurement on A ⊗ B. Indices 0..3 are
/// Alice's bit 0 with Bob's outcomes (F0, F1, F̄0, F̄1), indices 4..7
/// the same for bit 1, and index 8 aggregates the undisclosed
/// conclusive rounds.
#[derive(Debug, Clone)]
pub struct EstimationPovm {
    pub elements: [CMatrix; 9],
}

impl EstimationPovm {
    pub fn element(&self, i: usize) -> &CMatrix {
        &self.elements[i]
    }
}

/// Whether a distribution is a theoretical limit or an m-sample
/// empirical frequency vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TotalWeight {
    /// Theoretical distribution; the infinite-sample marker.
    Infinite,
    /// Empirical distribution built from this many samples.
    Samples(u64),
}

/// How empirical statistics are produced: `Expected` copies the
/// theoretical distribution (the smooth-curve convention), `Sampled`
/// draws an actual multinomial sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatisticsMode {
    Expected,
    Sampled,
}

/// A probability vector over the nine estimation outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    pub probs: [f64; 9],
    pub total_weight: TotalWeight,
}

impl OutcomeDistribution {
    /// Entries must be nonnegative and sum to one within 1e-12.
    pub fn new(probs: [f64; 9], total_weight: TotalWeight) -> Result<Self> {
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) {
                return Err(Error::NotAState(format!(
                    "outcome probability {i} is {p}, expected nonnegative"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::NotAState(format!(
                "outcome probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(OutcomeDistribution {
            probs,
            total_weight,
        })
    }
}

/// The nine operators: conclusive outcomes under Alice's bit j are
/// disclosed with probability r_pub (E_{4j}, E_{4j+1}), inconclusive
/// outcomes are always public (E_{4j+2}, E_{4j+3}), and E8 collects
/// the undisclosed conclusive rounds that feed the key.
pub fn estimation_povm(params: &B92Params) -> Result<EstimationPovm> {
    let povm = sift_povm(params.alpha())?;
    let r_pub = params.r_pub();
    let mut proj = [CMatrix::zeros(2, 2), CMatrix::zeros(2, 2)];
    proj[0][(0, 0)] = complex(1.0);
    proj[1][(1, 1)] = complex(1.0);

    let elements = [
        tensor(&proj[0], &povm.f0) * complex(r_pub),
        tensor(&proj[0], &povm.f1) * complex(r_pub),
        tensor(&proj[0], &povm.f0_bar),
        tensor(&proj[0], &povm.f1_bar),
        tensor(&proj[1], &povm.f0) * complex(r_pub),
        tensor(&proj[1], &povm.f1) * complex(r_pub),
        tensor(&proj[1], &povm.f0_bar),
        tensor(&proj[1], &povm.f1_bar),
        tensor(&CMatrix::identity(2, 2), &povm.sift_element()) * complex(1.0 - r_pub),
    ];
    Ok(EstimationPovm { elements })
}

/// The outcome distribution of the estimation measurement on a given
/// joint state: probs[i] = Tr[rho1 E_i]. Tiny negative traces from
/// eigensolver noise are clamped and the vector renormalized.
pub fn theoretical_distribution(
    rho1: &DensityMatrix,
    params: &B92Params,
) -> Result<OutcomeDistribution> {
    let povm = estimation_povm(params)?;
    let mut probs = [0.0_f64; 9];
    for (i, op) in povm.elements.iter().enumerate() {
        let p = (rho1.matrix() * op).trace().re;
        if p < PROB_FLOOR {
            return Err(Error::NotAState(format!(
                "estimation outcome {i} has probability {p:.3e}; state and measurement are inconsistent"
            )));
        }
        probs[i] = p.max(0.0);
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    OutcomeDistribution::new(probs, TotalWeight::Infinite)
}

/// Convenience: the theoretical distribution of a channel, going
/// through the joint state. The channel must be completely positive.
pub fn channel_distribution(ch: &BlochChannel, params: &B92Params) -> Result<OutcomeDistribution> {
    let rho1 = b92::joint_state(ch, params.alpha())?;
    theoretical_distribution(&rho1, params)
}

/// Channel distribution for arbitrary affine maps, projecting the
/// intermediate state onto the physical cone first. Used by the
/// penalty-based search, where iterates stray outside the CP set.
pub(crate) fn channel_distribution_lenient(
    ch: &BlochChannel,
    params: &B92Params,
) -> Result<OutcomeDistribution> {
    let rho1 = b92::joint_state_lenient(ch, params.alpha())?;
    theoretical_distribution(&rho1, params)
}

/// Empirical frequencies over m rounds. Expected mode copies the
/// theoretical vector and only changes the weight; sampled mode draws
/// a multinomial sample deterministically from the seed.
pub fn empirical_distribution(
    lam_inf: &OutcomeDistribution,
    m: u64,
    mode: StatisticsMode,
    seed: u64,
) -> Result<OutcomeDistribution> {
    if m == 0 {
        return Err(Error::Domain {
            name: "m",
            value: 0.0,
            bounds: "m >= 1",
        });
    }
    match mode {
        StatisticsMode::Expected => {
            OutcomeDistribution::new(lam_inf.probs, TotalWeight::Samples(m))
        }
        StatisticsMode::Sampled => {
            let counts = multinomial_counts(&lam_inf.probs, m, seed);
            let mut probs = [0.0_f64; 9];
            for (p, &c) in probs.iter_mut().zip(counts.iter()) {
                *p = c as f64 / m as f64;
            }
            OutcomeDistribution::new(probs, TotalWeight::Samples(m))
        }
    }
}

/// Multinomial sampling by chained binomials: outcome i receives a
/// Binomial(remaining, p_i / p_rest) draw. Deterministic in the seed.
fn multinomial_counts(probs: &[f64; 9], m: u64, seed: u64) -> [u64; 9] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0_u64; 9];
    let mut remaining = m;
    let mut rest = 1.0_f64;
    for i in 0..8 {
        if remaining == 0 {
            break;
        }
        let ratio = if rest > 0.0 {
            (probs[i] / rest).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let draw = Binomial::new(remaining, ratio)
            .expect("ratio is clamped to [0, 1]")
            .sample(&mut rng);
        counts[i] = draw;
        remaining -= draw;
        rest -= probs[i];
    }
    counts[8] = remaining;
    counts
}

/// KL divergence D(p ‖ q) in bits. Terms with p_i = 0 contribute
/// nothing; p_i > 0 against q_i = 0 makes the divergence infinite,
/// returned as `f64::INFINITY` rather than an error.
pub fn kl_divergence(p: &OutcomeDistribution, q: &OutcomeDistribution) -> f64 {
    let mut d = 0.0;
    for (&pi, &qi) in p.probs.iter().zip(q.probs.iter()) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            d += pi * (pi / qi).log2();
        }
    }
    d.max(0.0)
}

/// The KL radius t(m, eps) = (9 log2(m+1) + log2(1/eps)) / m: the
/// value at which the type-class union bound (m+1)^9 2^(-m t) equals
/// eps, so the KL ball of this radius is a confidence region of level
/// at least 1 - eps.
pub fn kl_threshold(m: u64, eps_pe: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain {
            name: "m",
            value: 0.0,
            bounds: "m >= 1",
        });
    }
    if !(eps_pe > 0.0 && eps_pe < 1.0) {
        return Err(Error::Domain {
            name: "eps_pe",
            value: eps_pe,
            bounds: "0 < eps_pe < 1",
        });
    }
    let m_f = m as f64;
    Ok((9.0 * (m_f + 1.0).log2() + (1.0 / eps_pe).log2()) / m_f)
}

/// The set of channels statistically consistent with an observed
/// distribution: completely positive maps whose theoretical
/// distribution lies within `kl_threshold` of `lambda_m`.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    pub lambda_m: OutcomeDistribution,
    pub kl_threshold: f64,
    pub cp_tol: f64,
    pub alpha: f64,
    pub r_pub: f64,
}

impl ConfidenceRegion {
    pub fn new(
        lambda_m: OutcomeDistribution,
        kl_threshold: f64,
        cp_tol: f64,
        params: &B92Params,
    ) -> Result<Self> {
        if !(kl_threshold >= 0.0) {
            return Err(Error::Domain {
                name: "kl_threshold",
                value: kl_threshold,
                bounds: "kl_threshold >= 0",
            });
        }
        Ok(ConfidenceRegion {
            lambda_m,
            kl_threshold,
            cp_tol,
            alpha: params.alpha(),
            r_pub: params.r_pub(),
        })
    }

    pub(crate) fn params(&self) -> B92Params {
        B92Params::new(self.alpha, self.r_pub)
            .expect("region stores validated protocol parameters")
    }

    /// KL divergence of the observed statistics from the channel's
    /// theoretical distribution; infinite on support mismatch.
    ///
    /// Completely positive channels go through the same code path that
    /// produced `lambda_m` in expected mode, so the true channel's
    /// divergence is an exact zero rather than an eigensolver-noise
    /// residual; only infeasible maps fall back to the projected
    /// evaluation.
    pub fn divergence_from(&self, ch: &BlochChannel) -> f64 {
        let params = self.params();
        let lam = if ch.is_cp(self.cp_tol) {
            channel_distribution(ch, &params)
        } else {
            channel_distribution_lenient(ch, &params)
        };
        match lam {
            Ok(lam) => kl_divergence(&self.lambda_m, &lam),
            Err(_) => f64::INFINITY,
        }
    }

    /// Membership: the map must be completely positive and its
    /// distribution within the KL radius.
    pub fn contains(&self, ch: &BlochChannel) -> bool {
        ch.is_cp(self.cp_tol) && self.divergence_from(ch) <= self.kl_threshold
    }
}
