//! Symmetric eigendecomposition by cyclic Jacobi rotations, and the
//! spectral functions built on it.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

use super::matrix::{Matrix, SymMatrix};

/// Sweep cap for the Jacobi iteration.
pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        let m = Matrix::from_fn(n, n, |i, j| (0..n).map(|k| v[(i, k)] * fv[k] * v[(j, k)]).sum());
        SymMatrix::symmetrize(m)
    }
}

/// Full spectrum of a symmetric matrix.
pub fn sym_eig(s: &SymMatrix) -> Result<Spectrum> {
    let n = s.dim();
    let mut a = s.as_matrix().clone();
    let mut v = Matrix::identity(n);

    let mut converged = false;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Rotation is a no-op in floating point once a_pq is
                // negligible next to both diagonal entries.
                let g = 100.0 * math::abs(apq);
                if math::abs(app) + g == math::abs(app) && math::abs(aqq) + g == math::abs(aqq) {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = {
                    let t = 1.0 / (math::abs(theta) + math::sqrt(theta * theta + 1.0));
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            what: "Jacobi eigensolver",
            iterations: MAX_JACOBI_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(Spectrum { values, vectors })
}

/// Default definiteness threshold `1e-12 · (1 + ‖S‖_F)`.
pub fn definiteness_tolerance(s: &Matrix) -> f64 {
    1e-12 * (1.0 + s.frobenius_norm())
}

pub fn min_eigenvalue(s: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(s)?.min())
}

pub fn max_eigenvalue(s: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(s)?.max())
}

/// `λ_min(S) > tol`. An eigensolver failure counts as "not definite".
pub fn is_positive_definite(s: &SymMatrix, tol: f64) -> bool {
    sym_eig(s).map(|sp| sp.min() > tol).unwrap_or(false)
}

/// Checks `S ≻ 0` with the default tolerance, naming the matrix on failure.
pub fn require_positive_definite(s: &SymMatrix, what: &'static str) -> Result<Spectrum> {
    let sp = sym_eig(s)?;
    if sp.min() > definiteness_tolerance(s) {
        Ok(sp)
    } else {
        Err(Error::NotPositiveDefinite {
            what,
            min_eigenvalue: sp.min(),
        })
    }
}

/// Checks `S ⪰ 0` up to the default tolerance.
pub fn require_positive_semidefinite(s: &SymMatrix, what: &'static str) -> Result<Spectrum> {
    let sp = sym_eig(s)?;
    if sp.min() >= -definiteness_tolerance(s) {
        Ok(sp)
    } else {
        Err(Error::NotPositiveSemidefinite {
            what,
            min_eigenvalue: sp.min(),
        })
    }
}

/// Principal square root of an SPD matrix and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdRoot {
    pub root: SymMatrix,
    pub inv_root: SymMatrix,
}

pub fn spd_sqrt(s: &SymMatrix) -> Result<SpdRoot> {
    let sp = require_positive_definite(s, "matrix")?;
    Ok(SpdRoot {
        root: sp.map(math::sqrt),
        inv_root: sp.map(|l| 1.0 / math::sqrt(l)),
    })
}

/// Square root of a PSD matrix; eigenvalues within tolerance of zero are
/// clipped.
pub fn psd_sqrt(s: &SymMatrix) -> Result<SymMatrix> {
    let sp = require_positive_semidefinite(s, "matrix")?;
    Ok(sp.map(|l| math::sqrt(l.max(0.0))))
}

/// `λ_min(Q^{-1/2} S Q^{-1/2})`, equal to `λ_min(S Q⁻¹)` by similarity.
pub fn min_gen_eig(s: &SymMatrix, q: &SymMatrix) -> Result<f64> {
    gen_eig(s, q).map(|sp| sp.min())
}

/// Spectrum of the pencil `(S, Q)` via `Q^{-1/2} S Q^{-1/2}`.
pub fn gen_eig(s: &SymMatrix, q: &SymMatrix) -> Result<Spectrum> {
    if s.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            context: "generalized eigenproblem",
            expected: q.dim(),
            found: s.dim(),
        });
    }
    let qs = require_positive_definite(q, "Q")?;
    let inv_root = qs.map(|l| 1.0 / math::sqrt(l));
    sym_eig(&s.congruence(inv_root.as_matrix())?)
}

/// Largest singular value.
pub fn operator_norm(m: &Matrix) -> Result<f64> {
    let gram = if m.rows() <= m.cols() {
        m * &m.transpose()
    } else {
        &m.transpose() * m
    };
    if gram.rows() == 0 {
        return Ok(0.0);
    }
    let l = max_eigenvalue(&SymMatrix::symmetrize(gram))?;
    Ok(math::sqrt(l.max(0.0)))
}
