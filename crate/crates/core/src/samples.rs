//! Random test systems for property suites and the acceptance harness.

use rand_core::RngCore;

use crate::model::LshSystem;
use crate::numlin::{Matrix, SymMatrix};

/// Uniform on `[lo, hi)`.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + (hi - lo) * u
}

pub fn random_matrix<R: RngCore + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| uniform(rng, -1.0, 1.0))
}

/// `G Gᵀ / n + floor · I` with `G` uniform on `[-1, 1)`.
pub fn random_spd<R: RngCore + ?Sized>(rng: &mut R, n: usize, floor: f64) -> SymMatrix {
    let g = random_matrix(rng, n, n);
    let gram = (&g * &g.transpose()).scale(1.0 / n as f64);
    SymMatrix::new(&gram + &Matrix::identity(n).scale(floor)).expect("square")
}

/// A system with `K, M, F ≻ 0` and an `m × n` coupling.
pub fn random_system<R: RngCore + ?Sized>(rng: &mut R, n: usize, m: usize) -> LshSystem {
    let k = random_spd(rng, n, 0.2);
    let mass = random_spd(rng, n, 0.5);
    let f = random_spd(rng, n, 0.2);
    let coupling = random_matrix(rng, m, n);
    LshSystem::new(k, mass, f, coupling).expect("random system is valid")
}

/// Identity mass with diagonal stiffness and damping, so both windows bind
/// exactly on one coordinate.
pub fn random_diagonal_system<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> LshSystem {
    let k: alloc::vec::Vec<f64> = (0..n).map(|_| uniform(rng, 0.3, 3.0)).collect();
    let f: alloc::vec::Vec<f64> = (0..n).map(|_| uniform(rng, 0.2, 2.0)).collect();
    LshSystem::new(
        SymMatrix::diag(&k),
        SymMatrix::identity(n),
        SymMatrix::diag(&f),
        Matrix::identity(n),
    )
    .expect("diagonal system is valid")
}

/// Dimensions `1 ≤ n ≤ max_n`, `1 ≤ m ≤ max_m`.
pub fn random_dims<R: RngCore + ?Sized>(rng: &mut R, max_n: usize, max_m: usize) -> (usize, usize) {
    let n = 1 + (rng.next_u64() % max_n as u64) as usize;
    let m = 1 + (rng.next_u64() % max_m as u64) as usize;
    (n, m)
}
