//! Dense complex Hermitian linear algebra for small multipartite
//! systems: tensor-product bookkeeping over labeled factors, a Jacobi
//! spectral solver, von Neumann entropy, and purification.
//!
//! Every state in the pipeline lives on at most five qubit-or-larger
//! factors (dimension 32), so the solver favors robustness over speed:
//! cyclic Jacobi rotations until the off-diagonal mass is negligible.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::fmt;

use crate::{Error, Result};

/// Dense complex matrix; carries every operator in the pipeline.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex vector; carries pure-state amplitudes.
pub type CVector = DVector<Complex64>;

/// Absolute tolerance for Hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Absolute tolerance for unit-trace checks on density matrices.
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues of a state may dip this far below zero before the state
/// is rejected; anything in [EIGENVALUE_FLOOR, 0) is clamped to 0.
pub const EIGENVALUE_FLOOR: f64 = -1e-10;
/// The Jacobi sweep stops once the off-diagonal Frobenius mass drops
/// below this value times the dimension.
pub const JACOBI_TOL_PER_DIM: f64 = 1e-13;

const MAX_JACOBI_SWEEPS: usize = 100;

/// Subsystem labels. A is Alice's kept qubit (X after dephasing), B the
/// transmitted qubit, E the purifying environment, P the public sift
/// flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    A,
    B,
    E,
    P,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::A => write!(f, "A"),
            Label::B => write!(f, "B"),
            Label::E => write!(f, "E"),
            Label::P => write!(f, "P"),
        }
    }
}

/// One tensor factor: a label plus its dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factor {
    pub label: Label,
    pub dim: usize,
}

impl Factor {
    pub fn new(label: Label, dim: usize) -> Self {
        Factor { label, dim }
    }
}

/// Complex Hermitian, positive-semidefinite, unit-trace matrix over an
/// ordered list of labeled tensor factors.
///
/// The factor list fixes the Kronecker ordering: factor 0 owns the most
/// significant index digit. Labels must be unique.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: CMatrix,
    factors: Vec<Factor>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace, spectrum above
    /// [`EIGENVALUE_FLOOR`], and that the factor dimensions multiply to
    /// the matrix dimension.
    pub fn new(matrix: CMatrix, factors: Vec<Factor>) -> Result<Self> {
        let dim = check_square(&matrix)?;
        let product: usize = factors.iter().map(|f| f.dim).product();
        if product != dim {
            return Err(Error::Dimension(format!(
                "factor dimensions multiply to {product}, matrix is {dim}x{dim}"
            )));
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].iter().any(|g| g.label == f.label) {
                return Err(Error::Dimension(format!("duplicate subsystem label {}", f.label)));
            }
        }
        check_hermitian(&matrix)?;
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::NotAState(format!(
                "trace is {:.12} + {:.3e}i, expected 1",
                trace.re, trace.im
            )));
        }
        let eigenvalues = hermitian_eigenvalues(&matrix)?;
        if let Some(&lowest) = eigenvalues.first() {
            if lowest < EIGENVALUE_FLOOR {
                return Err(Error::NotAState(format!(
                    "eigenvalue {lowest:.3e} below floor {EIGENVALUE_FLOOR:.1e}"
                )));
            }
        }
        Ok(DensityMatrix { matrix, factors })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Traces out every factor not listed in `keep`. The kept factors
    /// retain their original relative order regardless of the order of
    /// `keep`.
    pub fn partial_trace(&self, keep: &[Label]) -> Result<DensityMatrix> {
        for label in keep {
            if !self.factors.iter().any(|f| f.label == *label) {
                return Err(Error::UnknownLabel(*label));
            }
        }
        if keep.is_empty() {
            return Err(Error::Dimension("cannot trace out every factor".into()));
        }
        let kept: Vec<usize> = (0..self.factors.len())
            .filter(|&i| keep.contains(&self.factors[i].label))
            .collect();
        let matrix = partial_trace_raw(
            &self.matrix,
            &self.factors.iter().map(|f| f.dim).collect::<Vec<_>>(),
            &kept,
        );
        let factors = kept.iter().map(|&i| self.factors[i]).collect();
        Ok(DensityMatrix { matrix, factors })
    }
}

/// Normalized pure state; `dim` amplitudes in the computational basis.
#[derive(Debug, Clone)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    /// Requires the squared norm to be 1 within 1e-12.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > 1e-12 {
            return Err(Error::NotAState(format!(
                "pure-state squared norm is {norm_sq:.15}, expected 1"
            )));
        }
        Ok(PureState { amplitudes })
    }

    pub fn from_slice(amplitudes: &[Complex64]) -> Result<Self> {
        Self::new(CVector::from_row_slice(amplitudes))
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// Rank-1 projector |psi><psi|.
    pub fn projector(&self) -> CMatrix {
        let v = &self.amplitudes;
        CMatrix::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
    }
}

/// Kronecker product; the left operand owns the most significant index.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Partial trace over unlabeled dimensions: keeps the factors at the
/// index positions in `kept` (ascending), traces the rest.
pub(crate) fn partial_trace_raw(matrix: &CMatrix, dims: &[usize], kept: &[usize]) -> CMatrix {
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();
    let kept_dim: usize = kept.iter().map(|&i| dims[i]).product();
    let traced_dim: usize = traced.iter().map(|&i| dims[i]).product();

    // Strides of each factor in the full row-major index.
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }

    let offset_of = |composite: usize, members: &[usize]| -> usize {
        let mut rest = composite;
        let mut offset = 0;
        for &f in members.iter().rev() {
            offset += (rest % dims[f]) * strides[f];
            rest /= dims[f];
        }
        offset
    };

    let mut out = CMatrix::zeros(kept_dim, kept_dim);
    for row in 0..kept_dim {
        let row_base = offset_of(row, kept);
        for col in 0..kept_dim {
            let col_base = offset_of(col, kept);
            let mut sum = Complex64::new(0.0, 0.0);
            for tr in 0..traced_dim {
                let tr_offset = offset_of(tr, &traced);
                sum += matrix[(row_base + tr_offset, col_base + tr_offset)];
            }
            out[(row, col)] = sum;
        }
    }
    out
}

/// Full spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: CMatrix,
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(matrix: &CMatrix) -> Result<Vec<f64>> {
    Ok(hermitian_eigen(matrix)?.values)
}

/// Cyclic Jacobi diagonalization. Each sweep visits all upper-triangle
/// pivots; a complex plane rotation zeroes each pivot exactly. Stops
/// when the off-diagonal Frobenius mass falls below
/// [`JACOBI_TOL_PER_DIM`] times the dimension.
pub fn hermitian_eigen(matrix: &CMatrix) -> Result<EigenDecomposition> {
    let dim = check_square(matrix)?;
    check_hermitian(matrix)?;

    let mut a = matrix.clone();
    // Force exact Hermiticity so rounding in the input cannot drift.
    for i in 0..dim {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..dim {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
    let mut vectors = CMatrix::identity(dim, dim);
    let tol = JACOBI_TOL_PER_DIM * dim as f64;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_mass(&a);
        if off < tol {
            break;
        }
        if sweeps >= MAX_JACOBI_SWEEPS {
            return Err(Error::EigenConvergence {
                sweeps,
                offdiag: off,
            });
        }
        sweeps += 1;
        for p in 0..dim {
            for q in (p + 1)..dim {
                rotate(&mut a, &mut vectors, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap());
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let sorted = CMatrix::from_fn(dim, dim, |r, c| vectors[(r, order[c])]);
    Ok(EigenDecomposition {
        values,
        vectors: sorted,
    })
}

/// One complex Jacobi rotation zeroing the (p, q) pivot of `a`,
/// accumulated into `v`.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let pivot = a[(p, q)];
    let magnitude = pivot.norm();
    if magnitude == 0.0 {
        return;
    }
    let phase = pivot / magnitude;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // Real 2x2 problem for the rotation angle: tan(2 theta) with the
    // stable smaller-root formula.
    let tau = (app - aqq) / (2.0 * magnitude);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = phase.conj() * (t * c);

    let dim = a.nrows();
    // Column update A <- A G, then row update A <- G^dagger A.
    for i in 0..dim {
        let aip = a[(i, p)];
        let aiq = a[(i, q)];
        a[(i, p)] = aip * c + aiq * s;
        a[(i, q)] = -aip * s.conj() + aiq * c;
    }
    for j in 0..dim {
        let apj = a[(p, j)];
        let aqj = a[(q, j)];
        a[(p, j)] = apj * c + aqj * s.conj();
        a[(q, j)] = -apj * s + aqj * c;
    }
    for i in 0..dim {
        let vip = v[(i, p)];
        let viq = v[(i, q)];
        v[(i, p)] = vip * c + viq * s;
        v[(i, q)] = -vip * s.conj() + viq * c;
    }
    // The pivot is zero analytically; pin it and the diagonal exactly.
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
}

fn off_diagonal_mass(a: &CMatrix) -> f64 {
    let dim = a.nrows();
    let mut sum = 0.0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            sum += 2.0 * a[(i, j)].norm_sqr();
        }
    }
    sum.sqrt()
}

/// Von Neumann entropy in bits: -sum lambda log2 lambda with
/// 0 log 0 := 0. Eigenvalues in [[`EIGENVALUE_FLOOR`], 0) are clamped
/// to 0; anything lower is an error.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let eigenvalues = hermitian_eigenvalues(rho.matrix())?;
    entropy_from_eigenvalues(&eigenvalues)
}

pub(crate) fn entropy_from_eigenvalues(eigenvalues: &[f64]) -> Result<f64> {
    let mut entropy = 0.0;
    for &lambda in eigenvalues {
        if lambda < EIGENVALUE_FLOOR {
            return Err(Error::NotAState(format!(
                "eigenvalue {lambda:.3e} below floor {EIGENVALUE_FLOOR:.1e}"
            )));
        }
        if lambda > 0.0 {
            entropy -= lambda * lambda.log2();
        }
    }
    Ok(entropy)
}

/// Purification over an environment of the same dimension as the input:
/// sum_i sqrt(p_i) |e_i> tensor |i>, eigenpairs in descending order so a
/// pure input purifies to itself tensored with the first environment
/// basis vector. Zero-eigenvalue branches are kept, so the output
/// dimension is always dim * dim.
pub fn purify(rho: &DensityMatrix) -> Result<PureState> {
    let dim = rho.dim();
    let eigen = hermitian_eigen(rho.matrix())?;
    let mut amplitudes = CVector::zeros(dim * dim);
    for rank in 0..dim {
        let idx = dim - 1 - rank; // descending
        let p = eigen.values[idx].max(0.0);
        if eigen.values[idx] < EIGENVALUE_FLOOR {
            return Err(Error::NotAState(format!(
                "eigenvalue {:.3e} below floor {EIGENVALUE_FLOOR:.1e}",
                eigen.values[idx]
            )));
        }
        let weight = p.sqrt();
        for row in 0..dim {
            amplitudes[row * dim + rank] += eigen.vectors[(row, idx)] * weight;
        }
    }
    let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amplitudes /= Complex64::new(norm, 0.0);
    PureState::new(amplitudes)
}

fn check_square(matrix: &CMatrix) -> Result<usize> {
    if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "expected a nonempty square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    Ok(matrix.nrows())
}

fn check_hermitian(matrix: &CMatrix) -> Result<()> {
    let dim = matrix.nrows();
    let mut deviation: f64 = 0.0;
    for i in 0..dim {
        for j in i..dim {
            deviation = deviation.max((matrix[(i, j)] - matrix[(j, i)].conj()).norm());
        }
    }
    if deviation > HERMITICITY_TOL {
        return Err(Error::NotHermitian {
            deviation,
            tolerance: HERMITICITY_TOL,
        });
    }
    Ok(())
}
