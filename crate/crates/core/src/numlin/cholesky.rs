use crate::math;

use super::matrix::{Matrix, SymMatrix};

/// Lower-triangular `L` with `L Lᵀ ≈ S` for positive semi-definite `S`.
///
/// Pivots at or below `floor · (1 + max diag)` are treated as zero and their
/// column is dropped, so rank-deficient covariances factor without failure.
pub fn cholesky_psd(s: &SymMatrix, floor: f64) -> Matrix {
    let n = s.dim();
    let scale = 1.0 + (0..n).map(|i| math::abs(s[(i, i)])).fold(0.0, f64::max);
    let threshold = floor * scale;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= threshold {
            continue;
        }
        let ljj = math::sqrt(d);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    l
}
