//! Sylvester and Lyapunov equations by Kronecker vectorization.
//!
//! `A X + X B = C` becomes `(A ⊗ I + I ⊗ Bᵀ) vec(X) = vec(C)` in row-major
//! vectorization. The dense system is `(nm)²`, which is fine for the state
//! dimensions this crate targets.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

use super::lu;
use super::matrix::{Matrix, SymMatrix};

/// Kronecker systems whose smallest pivot falls below this fraction of the
/// largest entry are reported as having no unique solution.
pub const KRONECKER_SINGULAR_RATIO: f64 = 1e-12;

const REFINEMENT_STEPS: usize = 3;

fn kronecker_operator(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.rows();
    let m = b.rows();
    let dim = n * m;
    let mut l = Matrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..m {
            let row = i * m + j;
            for k in 0..n {
                l[(row, k * m + j)] += a[(i, k)];
            }
            for p in 0..m {
                l[(row, i * m + p)] += b[(p, j)];
            }
        }
    }
    l
}

fn sylvester_residual(a: &Matrix, b: &Matrix, c: &Matrix, x: &Matrix) -> Matrix {
    let lhs = &(a * x) + &(x * b);
    c - &lhs
}

/// Solves `A X + X B = C`.
pub fn solve_sylvester(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            what: "Sylvester A",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !b.is_square() {
        return Err(Error::NotSquare {
            what: "Sylvester B",
            rows: b.rows(),
            cols: b.cols(),
        });
    }
    if c.rows() != a.rows() || c.cols() != b.rows() {
        return Err(Error::DimensionMismatch {
            context: "Sylvester right-hand side",
            expected: a.rows() * b.rows(),
            found: c.rows() * c.cols(),
        });
    }
    let n = a.rows();
    let m = b.rows();
    let dim = n * m;
    let mut work = kronecker_operator(a, b).into_vec();
    let f = lu::factor_unchecked(&mut work, dim);
    if f.pivot_ratio <= KRONECKER_SINGULAR_RATIO {
        return Err(Error::NoUniqueSolution);
    }

    let mut rhs: Vec<f64> = c.as_slice().to_vec();
    f.solve_in_place(&work, &mut rhs);
    let mut x = Matrix::from_row_major(n, m, rhs)?;

    // A few rounds of iterative refinement tighten the residual to roundoff.
    let mut res = sylvester_residual(a, b, c, &x);
    let mut res_norm = res.frobenius_norm();
    let mut corr = vec![0.0; dim];
    for _ in 0..REFINEMENT_STEPS {
        if res_norm == 0.0 {
            break;
        }
        corr.copy_from_slice(res.as_slice());
        f.solve_in_place(&work, &mut corr);
        let candidate = &x + &Matrix::from_row_major(n, m, corr.clone())?;
        let cand_res = sylvester_residual(a, b, c, &candidate);
        let cand_norm = cand_res.frobenius_norm();
        if cand_norm >= res_norm {
            break;
        }
        x = candidate;
        res = cand_res;
        res_norm = cand_norm;
    }
    Ok(x)
}

/// Solves `A X + X Aᵀ + V = 0` and returns the symmetrized solution.
pub fn solve_lyapunov(a: &Matrix, v: &SymMatrix) -> Result<SymMatrix> {
    if a.rows() != v.dim() {
        return Err(Error::DimensionMismatch {
            context: "Lyapunov equation",
            expected: a.rows(),
            found: v.dim(),
        });
    }
    let x = solve_sylvester(a, &a.transpose(), &v.scale(-1.0))?;
    Ok(SymMatrix::symmetrize(x))
}

/// Frobenius norm of `A X + X Aᵀ + V`.
pub fn lyapunov_residual(a: &Matrix, x: &SymMatrix, v: &SymMatrix) -> f64 {
    let ax = a * x.as_matrix();
    (&(&ax + &ax.transpose()) + v.as_matrix()).frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn damped_oscillator_unit() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [-1.0, -1.0]]);
        let v = SymMatrix::diag(&[0.0, 1.0]);
        let x = solve_lyapunov(&a, &v).unwrap();
        assert!((&*x - &Matrix::identity(2).scale(0.5)).max_abs() < 1e-14);
    }

    #[test]
    fn damped_oscillator_stiff() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [-4.0, -2.0]]);
        let v = SymMatrix::diag(&[0.0, 1.0]);
        let x = solve_lyapunov(&a, &v).unwrap();
        assert!((&*x - &Matrix::diag(&[1.0 / 16.0, 0.25])).max_abs() < 1e-14);
    }

    #[test]
    fn negative_identity() {
        let a = Matrix::identity(2).scale(-1.0);
        let x = solve_lyapunov(&a, &SymMatrix::identity(2)).unwrap();
        assert!((&*x - &Matrix::identity(2).scale(0.5)).max_abs() < 1e-15);
    }

    #[test]
    fn undamped_is_singular() {
        let j = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]);
        assert_eq!(
            solve_lyapunov(&j, &SymMatrix::identity(2)),
            Err(Error::NoUniqueSolution)
        );
        let a = Matrix::from_rows(&[
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [-1.0, 0.0, 0.0, 0.0],
            [0.0, -4.0, 0.0, 0.0],
        ]);
        assert_eq!(
            solve_lyapunov(&a, &SymMatrix::identity(4)),
            Err(Error::NoUniqueSolution)
        );
    }

    #[test]
    fn rectangular_sylvester() {
        let a = Matrix::from_rows(&[[-1.0, 0.5], [0.0, -2.0]]);
        let b = Matrix::scalar(-3.0);
        let c = Matrix::column(&[1.0, 2.0]);
        let x = solve_sylvester(&a, &b, &c).unwrap();
        assert!(sylvester_residual(&a, &b, &c, &x).max_abs() < 1e-15);
    }

    fn stable_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..=5).prop_flat_map(|n| {
            proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |d| {
                let g = Matrix::from_row_major(n, n, d).unwrap();
                // Shift the spectrum left of the Gershgorin discs.
                let shift = (0..n)
                    .map(|i| g.row(i).iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max)
                    + 0.1;
                &g - &Matrix::identity(n).scale(shift)
            })
        })
    }

    proptest! {
        #[test]
        fn residual_small_and_symmetric(
            a in stable_strategy(),
            vs in proptest::collection::vec(-1.0f64..1.0, 25),
        ) {
            let n = a.rows();
            let g = Matrix::from_fn(n, n, |i, j| vs[i * 5 + j]);
            let v = SymMatrix::new(&g * &g.transpose()).unwrap();
            let x = solve_lyapunov(&a, &v).unwrap();
            prop_assert!(lyapunov_residual(&a, &x, &v) <= 1e-10 * (1.0 + v.frobenius_norm()));
            prop_assert_eq!(x.asymmetry(), 0.0);
        }
    }
}
