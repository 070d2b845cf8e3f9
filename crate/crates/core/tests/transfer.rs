use lsh_core::model::{
    char_poly_eval, char_poly_state_space, normalize_mass, realize, static_gain, transfer,
    transfer_resolvent,
};
use lsh_core::samples::{random_dims, random_system, uniform};
use lsh_core::{Complex64, LshSystem};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn systems(seed: u64, count: usize, max_n: usize, max_m: usize) -> Vec<LshSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let (n, m) = random_dims(&mut rng, max_n, max_m);
            random_system(&mut rng, n, m)
        })
        .collect()
}

#[test]
fn pencil_and_resolvent_formulas_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for sys in systems(1, 100, 4, 4) {
        for _ in 0..20 {
            let s = Complex64::new(uniform(&mut rng, -2.0, 2.0), uniform(&mut rng, -3.0, 3.0));
            let pencil = transfer(&sys, s).unwrap();
            let resolvent = transfer_resolvent(&sys, s).unwrap();
            let scale = resolvent.frobenius_norm();
            assert!(pencil.sub(&resolvent).frobenius_norm() <= 1e-9 * scale.max(1e-300));
        }
    }
}

#[test]
fn static_gain_is_symmetric_and_matches_formula() {
    for sys in systems(2, 100, 5, 3) {
        let g = static_gain(&sys).unwrap();
        let at_zero = transfer_resolvent(&sys, Complex64::new(0.0, 0.0)).unwrap();
        let m = sys.channels();
        for i in 0..m {
            for j in 0..m {
                let z = at_zero.as_slice()[i * m + j];
                assert!((z.re - g[(i, j)]).abs() <= 1e-10 * (1.0 + g.max_abs()));
                assert!(z.im.abs() <= 1e-12);
                assert!((at_zero.as_slice()[j * m + i] - z).norm() <= 1e-12 * (1.0 + g.max_abs()));
            }
        }
    }
}

/// Coefficients of a degree `< count` polynomial from its values at the
/// `count`-th roots of unity.
fn interpolate(values: &[Complex64]) -> Vec<Complex64> {
    let count = values.len();
    (0..count)
        .map(|j| {
            values
                .iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (j * k) as f64 / count as f64))
                .sum::<Complex64>()
                / count as f64
        })
        .collect()
}

fn horner(coeffs: &[Complex64], s: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + c)
}

#[test]
fn characteristic_polynomial_is_similarity_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for sys in systems(3, 50, 4, 2) {
        let a = realize(&sys).a;
        let degree = a.rows();
        let nodes = degree + 1;
        let values: Vec<Complex64> = (0..nodes)
            .map(|k| {
                let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / nodes as f64);
                char_poly_state_space(&a, w)
            })
            .collect();
        let coeffs = interpolate(&values);
        assert!((coeffs[degree] - 1.0).norm() <= 1e-8);
        for _ in 0..5 {
            let s = Complex64::new(uniform(&mut rng, -1.5, 1.5), uniform(&mut rng, -1.5, 1.5));
            let chi = char_poly_eval(&sys, s);
            assert!((horner(&coeffs, s) - chi).norm() <= 1e-8 * (1.0 + chi.norm()));
        }
    }
}

#[test]
fn normalization_preserves_trace_and_determinant() {
    for sys in systems(4, 50, 5, 3) {
        let a = realize(&sys).a;
        let ns = normalize_mass(&sys);
        let b = realize(&ns.to_system().unwrap()).a;
        assert!((a.trace() - b.trace()).abs() <= 1e-10 * (1.0 + a.trace().abs()));
        let (da, db) = (a.determinant().unwrap(), b.determinant().unwrap());
        assert!((da - db).abs() <= 1e-9 * (1.0 + da.abs()));
        let again = normalize_mass(&ns.to_system().unwrap());
        assert!((&*again.stiffness - &*ns.stiffness).max_abs() <= 1e-12 * (1.0 + ns.stiffness.max_abs()));
        assert!((&again.coupling - &ns.coupling).max_abs() <= 1e-12 * (1.0 + ns.coupling.max_abs()));
    }
}
