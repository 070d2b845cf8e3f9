//! Matrix exponential by scaling and squaring with a truncated Taylor series.

use crate::error::{Error, Result};
use crate::math;

use super::matrix::Matrix;

const MAX_TERMS: usize = 40;

fn one_norm(m: &Matrix) -> f64 {
    (0..m.cols())
        .map(|j| (0..m.rows()).map(|i| math::abs(m[(i, j)])).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{A}`; the series is truncated once terms drop below `1e-17` of the
/// partial sum, after scaling `A` to one-norm at most 1/2.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            what: "matrix exponential argument",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::InvalidArgument("non-finite matrix exponential argument".into()));
    }
    let squarings = if norm > 0.5 {
        math::ceil(math::log2(norm / 0.5)) as u32
    } else {
        0
    };
    let scaled = a.scale(1.0 / math::powi(2.0, squarings as i32));

    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=MAX_TERMS {
        term = (&term * &scaled).scale(1.0 / k as f64);
        sum = &sum + &term;
        if term.max_abs() <= 1e-17 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation() {
        // exp(t J) for J = [[0,1],[-1,0]] is a rotation.
        let t = 2.5;
        let a = Matrix::from_rows(&[[0.0, t], [-t, 0.0]]);
        let e = expm(&a).unwrap();
        let want = Matrix::from_rows(&[[t.cos(), t.sin()], [-t.sin(), t.cos()]]);
        assert!((&e - &want).max_abs() < 1e-13);
    }

    #[test]
    fn diagonal_and_zero() {
        let e = expm(&Matrix::diag(&[1.0, -3.0])).unwrap();
        assert!(((e[(0, 0)] - 1f64.exp()) / 1f64.exp()).abs() < 1e-14);
        assert!(((e[(1, 1)] - (-3f64).exp()) / (-3f64).exp()).abs() < 1e-12);
        assert_eq!(expm(&Matrix::zeros(3, 3)).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn nilpotent() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        let e = expm(&a).unwrap();
        assert_eq!(e, Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]));
    }
}
