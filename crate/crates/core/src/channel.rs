//! Qubit channels as affine maps on Bloch vectors, with Choi-matrix
//! complete-positivity predicates and the depolarizing constructors.
//!
//! Bloch coordinates are ordered (z, x, y) in every interface. A
//! channel (R, t) sends a Bloch vector v to R v + t; equivalently it
//! fixes E(I) = I + sum_k t_k sigma_k and E(sigma_j) = sum_k R_kj
//! sigma_k, which extends to all operators by linearity.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::qmath::{tensor, CMatrix, DensityMatrix};
use crate::{qmath, Error, Result};

/// Default tolerance on the least Choi eigenvalue for [`BlochChannel::is_cp`];
/// commensurate with the eigensolver residual.
pub const CP_TOL: f64 = 1e-9;

fn complex(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Pauli matrices in the (z, x, y) coordinate order.
fn pauli(k: usize) -> CMatrix {
    match k {
        0 => CMatrix::from_row_slice(
            2,
            2,
            &[complex(1.0), complex(0.0), complex(0.0), complex(-1.0)],
        ),
        1 => CMatrix::from_row_slice(
            2,
            2,
            &[complex(0.0), complex(1.0), complex(1.0), complex(0.0)],
        ),
        2 => CMatrix::from_row_slice(
            2,
            2,
            &[
                complex(0.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(0.0, 1.0),
                complex(0.0),
            ],
        ),
        _ => unreachable!("Pauli index out of range"),
    }
}

/// Trace-preserving qubit channel in affine Bloch form, coordinates
/// (z, x, y).
///
/// Completely positive channels always have every entry of R and t in
/// [-1, 1]; the constructor nevertheless accepts any finite entries so
/// that infeasible search iterates stay representable, and
/// [`BlochChannel::is_cp`] remains the authoritative physicality
/// predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochChannel {
    r: Matrix3<f64>,
    t: Vector3<f64>,
}

impl BlochChannel {
    pub fn new(r: Matrix3<f64>, t: Vector3<f64>) -> Result<Self> {
        for value in r.iter().chain(t.iter()) {
            if !value.is_finite() {
                return Err(Error::Domain {
                    name: "channel entry",
                    value: *value,
                    bounds: "finite reals",
                });
            }
        }
        Ok(BlochChannel { r, t })
    }

    pub fn identity() -> Self {
        BlochChannel {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    /// Depolarizing channel with Bloch scale 1 - 4q/3 and no shift; the
    /// convention used by the figure sweeps.
    pub fn depolarizing(q: f64) -> Result<Self> {
        check_unit_interval("q", q)?;
        Ok(BlochChannel {
            r: Matrix3::identity() * (1.0 - 4.0 * q / 3.0),
            t: Vector3::zeros(),
        })
    }

    /// Depolarizing channel in the Kraus convention
    /// (1-q) rho + (q/2) I, i.e. Bloch scale 1 - q.
    pub fn depolarizing_kraus(q: f64) -> Result<Self> {
        check_unit_interval("q", q)?;
        Ok(BlochChannel {
            r: Matrix3::identity() * (1.0 - q),
            t: Vector3::zeros(),
        })
    }

    pub fn r(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn t(&self) -> &Vector3<f64> {
        &self.t
    }

    /// Image of the identity: I + sum_k t_k sigma_k.
    fn image_of_identity(&self) -> CMatrix {
        let mut out = CMatrix::identity(2, 2);
        for k in 0..3 {
            out += pauli(k) * complex(self.t[k]);
        }
        out
    }

    /// Image of sigma_j: sum_k R_kj sigma_k.
    fn image_of_pauli(&self, j: usize) -> CMatrix {
        let mut out = CMatrix::zeros(2, 2);
        for k in 0..3 {
            out += pauli(k) * complex(self.r[(k, j)]);
        }
        out
    }

    /// Applies the channel to a single-qubit state.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != 2 {
            return Err(Error::Dimension(format!(
                "apply expects a qubit state, got dimension {}",
                rho.dim()
            )));
        }
        let m = rho.matrix();
        let mut v = Vector3::zeros();
        for k in 0..3 {
            v[k] = (m * pauli(k)).trace().re;
        }
        let out_bloch = self.r * v + self.t;
        let mut out = CMatrix::identity(2, 2) * complex(0.5);
        for k in 0..3 {
            out += pauli(k) * complex(out_bloch[k] * 0.5);
        }
        DensityMatrix::new(out, rho.factors().to_vec())
    }

    /// Applies the channel to the second factor of a two-qubit state,
    /// by expanding that factor in the operator basis {I, sigma_z,
    /// sigma_x, sigma_y} and mapping each basis element through the
    /// channel. Trace is preserved for any (R, t).
    pub fn apply_on_second_factor(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let factors = rho.factors();
        if rho.dim() != 4 || factors.len() != 2 || factors[0].dim != 2 || factors[1].dim != 2 {
            return Err(Error::Dimension(
                "apply_on_second_factor expects a two-qubit state".into(),
            ));
        }
        let matrix = self.apply_on_second_factor_raw(rho.matrix());
        DensityMatrix::new(matrix, factors.to_vec())
    }

    /// Unvalidated core of [`Self::apply_on_second_factor`]; the output
    /// of a non-CP parameter point is not a physical state, which the
    /// optimizer's penalty path tolerates on purpose.
    pub(crate) fn apply_on_second_factor_raw(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(4, 4);
        for w in 0..4 {
            let (basis_op, image) = if w == 0 {
                (CMatrix::identity(2, 2), self.image_of_identity())
            } else {
                (pauli(w - 1), self.image_of_pauli(w - 1))
            };
            // Coefficient operator on the first qubit:
            // A_W = Tr_B[rho (I tensor W)] / 2.
            let weighted = m * tensor(&CMatrix::identity(2, 2), &basis_op);
            let mut coeff = CMatrix::zeros(2, 2);
            for a in 0..2 {
                for b in 0..2 {
                    coeff[(a, b)] =
                        (weighted[(2 * a, 2 * b)] + weighted[(2 * a + 1, 2 * b + 1)]) * complex(0.5);
                }
            }
            out += tensor(&coeff, &image);
        }
        out
    }

    /// Choi matrix with trace 2: the channel applied to the second half
    /// of the unnormalized maximally entangled operator
    /// sum_ij |ii><jj|.
    pub fn choi(&self) -> CMatrix {
        let images = [
            self.image_of_identity(),
            self.image_of_pauli(0),
            self.image_of_pauli(1),
            self.image_of_pauli(2),
        ];
        let mut out = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                // |i><j| = sum_W Tr[W |i><j|] W / 2 extends the Bloch
                // action to non-Hermitian basis elements by linearity.
                let mut unit = CMatrix::zeros(2, 2);
                unit[(i, j)] = complex(1.0);
                let mut mapped = CMatrix::zeros(2, 2);
                for (w, image) in images.iter().enumerate() {
                    let basis_op = if w == 0 {
                        CMatrix::identity(2, 2)
                    } else {
                        pauli(w - 1)
                    };
                    let coeff = (basis_op * &unit).trace() * complex(0.5);
                    mapped += image * coeff;
                }
                let mut slot = CMatrix::zeros(2, 2);
                slot[(i, j)] = complex(1.0);
                out += tensor(&slot, &mapped);
            }
        }
        out
    }

    /// Least eigenvalue of the Choi matrix; negative beyond tolerance
    /// means the map is not completely positive.
    pub fn min_choi_eigenvalue(&self) -> f64 {
        let choi = self.choi();
        match qmath::hermitian_eigenvalues(&choi) {
            Ok(values) => values[0],
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Complete positivity via the Choi spectrum.
    pub fn is_cp(&self, tol: f64) -> bool {
        self.min_choi_eigenvalue() >= -tol
    }
}

/// The seven channel parameters left free after the symmetry reduction:
/// the minimizer of the ambiguity can be sought with
/// R_xy = R_yx = R_yz = R_zy = t_y = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeChannelParams {
    pub r_zz: f64,
    pub r_zx: f64,
    pub r_xz: f64,
    pub r_xx: f64,
    pub r_yy: f64,
    pub t_z: f64,
    pub t_x: f64,
}

impl FreeChannelParams {
    pub fn identity() -> Self {
        FreeChannelParams {
            r_zz: 1.0,
            r_zx: 0.0,
            r_xz: 0.0,
            r_xx: 1.0,
            r_yy: 1.0,
            t_z: 0.0,
            t_x: 0.0,
        }
    }

    /// Embeds into the full Bloch form with the symmetry zeros.
    pub fn embed(&self) -> BlochChannel {
        let r = Matrix3::new(
            self.r_zz, self.r_zx, 0.0, //
            self.r_xz, self.r_xx, 0.0, //
            0.0, 0.0, self.r_yy,
        );
        BlochChannel {
            r,
            t: Vector3::new(self.t_z, self.t_x, 0.0),
        }
    }

    /// Projects a channel already on the symmetry slice; errors if any
    /// of the zero-pattern entries exceeds `tol`.
    pub fn from_channel(ch: &BlochChannel, tol: f64) -> Result<Self> {
        let r = ch.r();
        let t = ch.t();
        let off_slice = [r[(0, 2)], r[(1, 2)], r[(2, 0)], r[(2, 1)], t[2]];
        for value in off_slice {
            if value.abs() > tol {
                return Err(Error::Domain {
                    name: "off-slice channel entry",
                    value,
                    bounds: "the symmetry-reduced slice (zero within tolerance)",
                });
            }
        }
        Ok(FreeChannelParams {
            r_zz: r[(0, 0)],
            r_zx: r[(0, 1)],
            r_xz: r[(1, 0)],
            r_xx: r[(1, 1)],
            r_yy: r[(2, 2)],
            t_z: t[0],
            t_x: t[1],
        })
    }

    pub fn to_array(self) -> [f64; 7] {
        [
            self.r_zz, self.r_zx, self.r_xz, self.r_xx, self.r_yy, self.t_z, self.t_x,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        FreeChannelParams {
            r_zz: a[0],
            r_zx: a[1],
            r_xz: a[2],
            r_xx: a[3],
            r_yy: a[4],
            t_z: a[5],
            t_x: a[6],
        }
    }
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Domain {
            name,
            value,
            bounds: "[0, 1]",
        });
    }
    Ok(())
}
