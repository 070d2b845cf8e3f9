//! LU factorization with partial pivoting, generic over real and complex
//! scalars.

use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::math;

pub(crate) trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn one() -> Self;
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn one() -> Self {
        1.0
    }
    fn modulus(self) -> f64 {
        math::abs(self)
    }
}

impl Scalar for Complex64 {
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn modulus(self) -> f64 {
        math::hypot(self.re, self.im)
    }
}

/// Pivot ratio below which a factor is declared singular for solves.
pub(crate) const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

/// Row permutation and pivot bookkeeping; the factors live in the caller's
/// buffer (unit-lower L below the diagonal, U on and above).
pub(crate) struct Lu {
    n: usize,
    perm: Vec<usize>,
    odd: bool,
    /// min |u_kk| / max |a_ij| over the input.
    pub(crate) pivot_ratio: f64,
}

/// Factors `a` (n x n, row-major) in place. A zero pivot column is skipped,
/// so the factor always exists; singularity shows up in `pivot_ratio`.
pub(crate) fn factor_unchecked<T: Scalar>(a: &mut [T], n: usize) -> Lu {
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.modulus()));
    let mut perm: Vec<usize> = (0..n).collect();
    let mut odd = false;
    let mut min_pivot = f64::INFINITY;
    for k in 0..n {
        let mut p = k;
        let mut best = a[k * n + k].modulus();
        for i in (k + 1)..n {
            let v = a[i * n + k].modulus();
            if v > best {
                best = v;
                p = i;
            }
        }
        min_pivot = min_pivot.min(best);
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            odd = !odd;
        }
        if best == 0.0 {
            continue;
        }
        let pivot = a[k * n + k];
        for i in (k + 1)..n {
            let l = a[i * n + k] / pivot;
            a[i * n + k] = l;
            for j in (k + 1)..n {
                let u = a[k * n + j];
                a[i * n + j] = a[i * n + j] - l * u;
            }
        }
    }
    let pivot_ratio = if scale == 0.0 { 0.0 } else { min_pivot / scale };
    Lu {
        n,
        perm,
        odd,
        pivot_ratio,
    }
}

/// Factors and rejects numerically singular matrices.
pub(crate) fn factor<T: Scalar>(a: &mut [T], n: usize) -> Result<Lu, ()> {
    let f = factor_unchecked(a, n);
    if f.pivot_ratio <= SINGULAR_PIVOT_RATIO * (n.max(1) as f64) {
        Err(())
    } else {
        Ok(f)
    }
}

impl Lu {
    pub(crate) fn determinant<T: Scalar>(&self, lu: &[T]) -> T {
        let mut d = T::one();
        for k in 0..self.n {
            d = d * lu[k * self.n + k];
        }
        if self.odd {
            -d
        } else {
            d
        }
    }

    pub(crate) fn solve_in_place<T: Scalar>(&self, lu: &[T], b: &mut [T]) {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s = s - lu[i * n + j] * x[j];
            }
            x[i] = s / lu[i * n + i];
        }
        b.copy_from_slice(&x);
    }
}
