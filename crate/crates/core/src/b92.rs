//! B92 protocol quantities: signal states, the sifting POVM, the joint
//! state after the channel, the adversary's ambiguity S(X|EP), the
//! reconciliation entropy H(X'|Y'), and the asymptotic key rate.
//!
//! Alice sends |φ_j> = β|0> + (-1)^j α|1> with β = sqrt(1 - α²) and
//! 0 < α < 1/√2, so the two signals are non-orthogonal. Bob's
//! unambiguous-discrimination POVM either identifies the bit (sift
//! outcomes F_0, F_1) or declares the round inconclusive (F̄_0, F̄_1).
//! Security quantities are evaluated on the entanglement-based picture
//! where Alice keeps half of |Ψ> = (|0>|φ_0> + |1>|φ_1>)/√2 and the
//! channel acts on the transmitted half.

use num_complex::Complex64;

use crate::channel::{BlochChannel, CP_TOL};
use crate::qmath::{
    self, partial_trace_raw, tensor, CMatrix, DensityMatrix, Factor, Label, PureState,
};
use crate::{Error, Result};

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn complex(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Protocol parameters: signal amplitude and disclosure probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct B92Params {
    alpha: f64,
    r_pub: f64,
}

impl B92Params {
    /// Both bounds are strict: 0 < alpha < 1/sqrt(2) keeps the signals
    /// distinct and non-orthogonal, 0 < r_pub < 1 keeps both the
    /// disclosed and undisclosed branches populated.
    pub fn new(alpha: f64, r_pub: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(r_pub > 0.0 && r_pub < 1.0) {
            return Err(Error::Domain {
                name: "r_pub",
                value: r_pub,
                bounds: "0 < r_pub < 1",
            });
        }
        Ok(B92Params { alpha, r_pub })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r_pub(&self) -> f64 {
        self.r_pub
    }

    /// beta = sqrt(1 - alpha^2), always derived.
    pub fn beta(&self) -> f64 {
        (1.0 - self.alpha * self.alpha).sqrt()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < INV_SQRT2) {
        return Err(Error::Domain {
            name: "alpha",
            value: alpha,
            bounds: "0 < alpha < 1/sqrt(2)",
        });
    }
    Ok(())
}

/// Bob's four-outcome measurement. F0 and F1 identify the key bit,
/// F0bar and F1bar are the inconclusive outcomes; the four sum to the
/// identity.
#[derive(Debug, Clone)]
pub struct SiftPovm {
    pub f0: CMatrix,
    pub f1: CMatrix,
    pub f0_bar: CMatrix,
    pub f1_bar: CMatrix,
}

impl SiftPovm {
    /// Sum of the two conclusive elements.
    pub fn sift_element(&self) -> CMatrix {
        &self.f0 + &self.f1
    }
}

/// The signal states and their orthogonal complements:
/// phi_j = beta|0> + (-1)^j alpha|1> and phibar_j = alpha|0> - (-1)^j beta|1>,
/// returned as (phi0, phi1, phibar0, phibar1). Each pair (phi_j, phibar_j)
/// is an orthonormal basis.
pub fn signal_states(alpha: f64) -> Result<(PureState, PureState, PureState, PureState)> {
    check_alpha(alpha)?;
    let beta = (1.0 - alpha * alpha).sqrt();
    let phi0 = PureState::from_slice(&[complex(beta), complex(alpha)])?;
    let phi1 = PureState::from_slice(&[complex(beta), complex(-alpha)])?;
    let phibar0 = PureState::from_slice(&[complex(alpha), complex(-beta)])?;
    let phibar1 = PureState::from_slice(&[complex(alpha), complex(beta)])?;
    Ok((phi0, phi1, phibar0, phibar1))
}

/// The four POVM elements F0 = |phibar1><phibar1|/2, F1 = |phibar0><phibar0|/2,
/// F̄0 = |phi1><phi1|/2, F̄1 = |phi0><phi0|/2. Outcome F_k is impossible
/// when the transmitted state was phi_{1-k}, which is what makes the
/// conclusive outcomes error-free on a noiseless line.
pub fn sift_povm(alpha: f64) -> Result<SiftPovm> {
    let (phi0, phi1, phibar0, phibar1) = signal_states(alpha)?;
    let half = complex(0.5);
    Ok(SiftPovm {
        f0: phibar1.projector() * half,
        f1: phibar0.projector() * half,
        f0_bar: phi1.projector() * half,
        f1_bar: phi0.projector() * half,
    })
}

/// Square roots of the rank-1 POVM elements: sqrt(|v><v|/2) = |v><v|/sqrt(2).
struct SiftPovmRoots {
    sqrt_f: [CMatrix; 2],
    sqrt_f_bar: [CMatrix; 2],
}

fn sift_povm_roots(alpha: f64) -> Result<SiftPovmRoots> {
    let (phi0, phi1, phibar0, phibar1) = signal_states(alpha)?;
    let scale = complex(INV_SQRT2);
    Ok(SiftPovmRoots {
        sqrt_f: [phibar1.projector() * scale, phibar0.projector() * scale],
        sqrt_f_bar: [phi1.projector() * scale, phi0.projector() * scale],
    })
}

/// The source state |Psi> = (|0>|phi0> + |1>|phi1>)/sqrt(2) of the
/// entanglement-based picture.
pub(crate) fn source_state(alpha: f64) -> Result<PureState> {
    check_alpha(alpha)?;
    let beta = (1.0 - alpha * alpha).sqrt();
    PureState::from_slice(&[
        complex(beta * INV_SQRT2),
        complex(alpha * INV_SQRT2),
        complex(beta * INV_SQRT2),
        complex(-alpha * INV_SQRT2),
    ])
}

fn joint_factors() -> Vec<Factor> {
    vec![Factor::new(Label::A, 2), Factor::new(Label::B, 2)]
}

/// The joint state rho1 = (I ⊗ E)|Psi><Psi| after the channel acts on
/// the transmitted half. The A marginal is channel-independent:
/// (1/2)[[1, β²-α²], [β²-α², 1]].
pub fn joint_state(ch: &BlochChannel, alpha: f64) -> Result<DensityMatrix> {
    check_alpha(alpha)?;
    let min_eig = ch.min_choi_eigenvalue();
    if min_eig < -CP_TOL {
        return Err(Error::NotCompletelyPositive {
            min_eigenvalue: min_eig,
        });
    }
    let psi = source_state(alpha)?;
    let raw = ch.apply_on_second_factor_raw(&psi.projector());
    match DensityMatrix::new(raw.clone(), joint_factors()) {
        Ok(rho) => Ok(rho),
        // A channel on the CP boundary can leave eigenvalues a hair
        // below the validation floor; project them away rather than
        // reject a map that passed the Choi test.
        Err(Error::NotAState(_)) => clamped_state(&raw, joint_factors(), 10.0 * CP_TOL),
        Err(e) => Err(e),
    }
}

/// Joint state for an arbitrary affine map, projecting the spectrum
/// onto the physical cone however negative it comes out. Penalty-based
/// search needs the objective to evaluate at infeasible points.
pub(crate) fn joint_state_lenient(ch: &BlochChannel, alpha: f64) -> Result<DensityMatrix> {
    let psi = source_state(alpha)?;
    let raw = ch.apply_on_second_factor_raw(&psi.projector());
    clamped_state(&raw, joint_factors(), f64::INFINITY)
}

/// Nearest-state projection: clamp negative eigenvalues to zero and
/// renormalize. Errors if the deficit exceeds `max_deficit` (pass
/// infinity to accept anything with a nonzero positive part).
fn clamped_state(m: &CMatrix, factors: Vec<Factor>, max_deficit: f64) -> Result<DensityMatrix> {
    let hermitized = (m + m.adjoint()) * complex(0.5);
    let eig = qmath::hermitian_eigen(&hermitized)?;
    if eig.values[0] < -max_deficit {
        return Err(Error::NotAState(format!(
            "eigenvalue {:.3e} is below the clamping window {:.3e}",
            eig.values[0], -max_deficit
        )));
    }
    let clamped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(Error::NotAState(
            "clamped spectrum has no positive part".into(),
        ));
    }
    let dim = m.nrows();
    let mut out = CMatrix::zeros(dim, dim);
    for (i, &p) in clamped.iter().enumerate() {
        if p > 0.0 {
            let v = eig.vectors.column(i);
            for a in 0..dim {
                for b in 0..dim {
                    out[(a, b)] += v[a] * v[b].conj() * complex(p / total);
                }
            }
        }
    }
    let out = (&out + out.adjoint()) * complex(0.5);
    DensityMatrix::new(out, factors)
}

/// Probability that a round survives sifting:
/// Tr[rho1 (I ⊗ (F0 + F1))].
pub fn sift_probability(rho1: &DensityMatrix, alpha: f64) -> Result<f64> {
    check_joint_shape(rho1)?;
    let povm = sift_povm(alpha)?;
    let op = tensor(&CMatrix::identity(2, 2), &povm.sift_element());
    let p = (rho1.matrix() * op).trace().re;
    Ok(p.clamp(0.0, 1.0))
}

fn check_joint_shape(rho1: &DensityMatrix) -> Result<()> {
    let factors = rho1.factors();
    if factors.len() != 2
        || factors[0] != Factor::new(Label::A, 2)
        || factors[1] != Factor::new(Label::B, 2)
    {
        return Err(Error::Dimension(
            "expected a joint state with qubit factors [A, B]".into(),
        ));
    }
    Ok(())
}

/// Builds the post-selection state rho2 on A ⊗ B ⊗ E ⊗ P from the
/// purified input on A ⊗ B ⊗ E. The kept branch conjugates by
/// sqrt(F_k) on B and flags P = 0; the inconclusive branch resets A to
/// |0>, conjugates the A-traced state by sqrt(F̄_k), and flags P = 1.
/// The combined map is trace preserving.
fn rho2_abep(rho_abe: &CMatrix, roots: &SiftPovmRoots) -> CMatrix {
    let id2 = CMatrix::identity(2, 2);
    let id4 = CMatrix::identity(4, 4);
    let mut flag0 = CMatrix::zeros(2, 2);
    flag0[(0, 0)] = complex(1.0);
    let mut flag1 = CMatrix::zeros(2, 2);
    flag1[(1, 1)] = complex(1.0);

    let mut out = CMatrix::zeros(32, 32);
    for sqrt_f in &roots.sqrt_f {
        let op = tensor(&id2, &tensor(sqrt_f, &id4));
        let branch = &op * rho_abe * &op;
        out += tensor(&branch, &flag0);
    }
    let traced = partial_trace_raw(rho_abe, &[2, 2, 4], &[1, 2]);
    let mut proj0 = CMatrix::zeros(2, 2);
    proj0[(0, 0)] = complex(1.0);
    for sqrt_f_bar in &roots.sqrt_f_bar {
        let op = tensor(sqrt_f_bar, &id4);
        let branch = &op * &traced * &op;
        out += tensor(&proj0, &tensor(&branch, &flag1));
    }
    out
}

/// Zeroes coherences of the leading qubit factor: the map
/// rho -> sum_j (|j><j| ⊗ I) rho (|j><j| ⊗ I), which turns A into the
/// classical key register X.
fn dephase_leading_qubit(m: &CMatrix) -> CMatrix {
    let half = m.nrows() / 2;
    let mut out = m.clone();
    for a in 0..half {
        for b in 0..half {
            out[(a, half + b)] = Complex64::new(0.0, 0.0);
            out[(half + a, b)] = Complex64::new(0.0, 0.0);
        }
    }
    out
}

/// The adversary's ambiguity S(X|EP) = S(rho_XEP) - S(rho_EP), in bits.
///
/// The input is purified over a dim-4 environment held by the
/// adversary; the post-selection state rho2 is formed on A⊗B⊗E⊗P, B is
/// traced out, and A is dephased into the classical register X. The
/// result lies in [0, 1].
pub fn eve_ambiguity(rho1: &DensityMatrix, alpha: f64) -> Result<f64> {
    check_joint_shape(rho1)?;
    let roots = sift_povm_roots(alpha)?;
    let psi = qmath::purify(rho1)?;
    let rho_abe = psi.projector();
    let rho2 = rho2_abep(&rho_abe, &roots);
    let rho_aep = partial_trace_raw(&rho2, &[2, 2, 4, 2], &[0, 2, 3]);
    let rho_xep = dephase_leading_qubit(&rho_aep);
    let rho_ep = partial_trace_raw(&rho_xep, &[2, 4, 2], &[1, 2]);
    let s_xep = qmath::entropy_from_eigenvalues(&qmath::hermitian_eigenvalues(&rho_xep)?)?;
    let s_ep = qmath::entropy_from_eigenvalues(&qmath::hermitian_eigenvalues(&rho_ep)?)?;
    Ok(s_xep - s_ep)
}

/// Shannon entropy in bits of an unnormalized nonnegative weight
/// vector, taken over its normalized distribution.
pub(crate) fn shannon_bits(weights: &[f64], total: f64) -> f64 {
    let mut h = 0.0;
    for &w in weights {
        if w > 0.0 {
            let p = w / total;
            h -= p * p.log2();
        }
    }
    h
}

/// Joint sift-conditional distribution P(X'=j, Y'=k) as a 2x2 array
/// indexed [j][k], plus the sift probability it was conditioned on.
fn sifted_joint_distribution(rho1: &DensityMatrix, alpha: f64) -> Result<([[f64; 2]; 2], f64)> {
    let povm = sift_povm(alpha)?;
    let conclusive = [&povm.f0, &povm.f1];
    let mut joint = [[0.0_f64; 2]; 2];
    let mut total = 0.0;
    for j in 0..2 {
        let mut proj = CMatrix::zeros(2, 2);
        proj[(j, j)] = complex(1.0);
        for (k, f) in conclusive.iter().enumerate() {
            let op = tensor(&proj, f);
            let p = (rho1.matrix() * op).trace().re.max(0.0);
            joint[j][k] = p;
            total += p;
        }
    }
    Ok((joint, total))
}

/// Reconciliation cost H(X'|Y') in bits, where X' is Alice's bit and
/// Y' is Bob's conclusive outcome, both conditioned on sifting.
pub fn reconciliation_entropy(rho1: &DensityMatrix, alpha: f64) -> Result<f64> {
    check_joint_shape(rho1)?;
    let (joint, total) = sifted_joint_distribution(rho1, alpha)?;
    if total <= 0.0 {
        return Err(Error::DegenerateSift(
            "sift probability is zero, so the conditional distribution is undefined".into(),
        ));
    }
    let flat = [joint[0][0], joint[0][1], joint[1][0], joint[1][1]];
    let marginal_y = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    Ok(shannon_bits(&flat, total) - shannon_bits(&marginal_y, total))
}

/// The asymptotic key rate S(X|EP)/Pr(sift) - H(X'|Y') evaluated at
/// the given channel.
pub fn asymptotic_rate(ch: &BlochChannel, alpha: f64) -> Result<f64> {
    let rho1 = joint_state(ch, alpha)?;
    let p_sift = sift_probability(&rho1, alpha)?;
    let h = reconciliation_entropy(&rho1, alpha)?;
    let s = eve_ambiguity(&rho1, alpha)?;
    Ok(s / p_sift - h)
}
