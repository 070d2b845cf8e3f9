//! The ε-window, the deformed-Hamiltonian certificate and a Hurwitz test.

use crate::error::{Error, Result};
use crate::math;
use crate::model::{normalize_mass, realize, LshSystem};
use crate::numlin::{
    definiteness_tolerance, is_positive_definite, min_eigenvalue, min_gen_eig,
    require_positive_definite, solve_lyapunov, Matrix, SymMatrix,
};

/// Upper bounds on ε from the stiffness and from the damping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsWindow {
    /// `√λ_min(K̃)`, the lowest undamped frequency.
    pub stiffness_bound: f64,
    /// `½ λ_min((I + ¼F̃K̃⁻¹F̃)⁻¹ F̃)`.
    pub damping_bound: f64,
}

impl EpsWindow {
    pub fn min(&self) -> f64 {
        self.stiffness_bound.min(self.damping_bound)
    }

    /// Half the binding bound.
    pub fn default_eps(&self) -> f64 {
        0.5 * self.min()
    }

    pub fn contains(&self, eps: f64) -> bool {
        eps > 0.0 && eps < self.min()
    }
}

pub fn eps_bounds(sys: &LshSystem) -> Result<EpsWindow> {
    require_positive_definite(sys.stiffness(), "K")?;
    require_positive_definite(sys.damping(), "F")?;
    let ns = normalize_mass(sys);
    let stiffness_bound = math::sqrt(min_eigenvalue(&ns.stiffness)?);
    let k_inv_f = ns.stiffness.solve(&ns.damping)?;
    let g = SymMatrix::symmetrize(
        &Matrix::identity(ns.dof()) + &(ns.damping.as_matrix() * &k_inv_f).scale(0.25),
    );
    // G⁻¹F̃ is similar to G^{-1/2} F̃ G^{-1/2}, so its spectrum is the
    // generalized spectrum of (F̃, G).
    let damping_bound = 0.5 * min_gen_eig(&ns.damping, &g)?;
    Ok(EpsWindow {
        stiffness_bound,
        damping_bound,
    })
}

/// `Q = R + ε[[0, I], [I, 0]]` with its dissipation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub eps: f64,
    pub q: SymMatrix,
    /// `[[2εK, εFM⁻¹], [εM⁻¹F, M⁻¹FM⁻¹ − 2εM⁻¹]]`, the block form whose
    /// definiteness yields the damping bound on ε.
    pub psi: SymMatrix,
    /// `−QA − AᵀQ`. Exceeds `psi` by `diag(0, M⁻¹FM⁻¹) ⪰ 0`.
    pub psi_exact: SymMatrix,
    pub valid: bool,
}

impl LyapunovCertificate {
    /// `Υ(x) = ½ xᵀQx`.
    pub fn deformed_hamiltonian(&self, x: &[f64]) -> f64 {
        0.5 * self.q.quad_form(x)
    }

    /// `dΥ/dt = −½ xᵀ(−QA − AᵀQ)x` along `ẋ = Ax`.
    pub fn dissipation_rate(&self, x: &[f64]) -> f64 {
        -0.5 * self.psi_exact.quad_form(x)
    }

    /// `λ_min(Q)`.
    pub fn q_min_eigenvalue(&self) -> Result<f64> {
        min_eigenvalue(&self.q)
    }
}

/// `[[0, I], [I, 0]]` of order `2n`.
fn exchange(n: usize) -> Matrix {
    Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).kron(&Matrix::identity(n))
}

pub fn lyapunov_matrix(sys: &LshSystem, eps: f64) -> SymMatrix {
    let r = sys.energy_matrix();
    SymMatrix::symmetrize(r.matrix().as_matrix() + &exchange(sys.dof()).scale(eps))
}

pub fn certificate(sys: &LshSystem, eps: f64) -> LyapunovCertificate {
    let n = sys.dof();
    let q = lyapunov_matrix(sys, eps);
    let minv = sys.mass_inverse().as_matrix();
    let fminv = sys.damping().as_matrix() * minv;
    let minv_f_minv = minv * &fminv;
    let psi = SymMatrix::symmetrize(
        Matrix::from_blocks(
            &sys.stiffness().scale(2.0 * eps),
            &fminv.scale(eps),
            &fminv.transpose().scale(eps),
            &(&minv_f_minv - &minv.scale(2.0 * eps)),
        )
        .expect("conforming blocks"),
    );
    let a = realize(sys).a;
    let qa = q.as_matrix() * &a;
    let psi_exact = SymMatrix::symmetrize(-&(&qa + &qa.transpose()));
    debug_assert!({
        let mut gap = Matrix::zeros(2 * n, 2 * n);
        gap.set_block(n, n, &minv_f_minv);
        let defect = (&(&*psi_exact - &*psi) - &gap).max_abs();
        defect <= 1e-12 * (1.0 + psi_exact.max_abs())
    });
    let valid = is_positive_definite(&q, definiteness_tolerance(&q))
        && is_positive_definite(&psi, definiteness_tolerance(&psi));
    LyapunovCertificate {
        eps,
        q,
        psi,
        psi_exact,
        valid,
    }
}

/// Certificate at the default ε, or an error if the result is not valid.
pub fn default_certificate(sys: &LshSystem) -> Result<LyapunovCertificate> {
    let eps = eps_bounds(sys)?.default_eps();
    let cert = certificate(sys, eps);
    if cert.valid {
        Ok(cert)
    } else {
        Err(Error::InvalidCertificate { eps })
    }
}

/// `Υ(x) = H(x) + ε qᵀp`.
pub fn deformed_hamiltonian(sys: &LshSystem, eps: f64, x: &[f64]) -> f64 {
    let n = sys.dof();
    let coupling: f64 = x[..n].iter().zip(&x[n..]).map(|(q, p)| q * p).sum();
    let value = sys.hamiltonian(x) + eps * coupling;
    debug_assert!({
        let via_q = 0.5 * lyapunov_matrix(sys, eps).quad_form(x);
        math::abs(value - via_q) <= 1e-12 * (1.0 + math::abs(value))
    });
    value
}

/// Outcome of the Lyapunov test for a Hurwitz matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HurwitzDiagnosis {
    Hurwitz,
    /// `AᵀX + XA = −I` has no unique solution: an eigenvalue pair sums to zero.
    Marginal,
    /// The solve succeeded but `X` is not positive definite.
    Unstable,
}

impl HurwitzDiagnosis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hurwitz => "hurwitz",
            Self::Marginal => "marginal",
            Self::Unstable => "unstable",
        }
    }
}

pub fn hurwitz_diagnosis(a: &Matrix) -> Result<HurwitzDiagnosis> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            what: "state matrix",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    match solve_lyapunov(&a.transpose(), &SymMatrix::identity(a.rows())) {
        Ok(x) if is_positive_definite(&x, definiteness_tolerance(&x)) => {
            Ok(HurwitzDiagnosis::Hurwitz)
        }
        Ok(_) => Ok(HurwitzDiagnosis::Unstable),
        Err(Error::NoUniqueSolution) => Ok(HurwitzDiagnosis::Marginal),
        Err(e) => Err(e),
    }
}

pub fn is_hurwitz(a: &Matrix) -> bool {
    matches!(hurwitz_diagnosis(a), Ok(HurwitzDiagnosis::Hurwitz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::{random_diagonal_system, random_dims, random_system, uniform};
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit() -> LshSystem {
        LshSystem::scalar(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn window_examples() {
        let w = eps_bounds(&unit()).unwrap();
        assert!((w.stiffness_bound - 1.0).abs() < 1e-15);
        assert!((w.damping_bound - 0.4).abs() < 1e-15);
        let w = eps_bounds(&LshSystem::scalar(4.0, 1.0, 2.0, 1.0).unwrap()).unwrap();
        assert!((w.stiffness_bound - 2.0).abs() < 1e-15);
        assert!((w.damping_bound - 0.8).abs() < 1e-15);
        let w = eps_bounds(&LshSystem::scalar(9.0, 1.0, 1e-8, 1.0).unwrap()).unwrap();
        assert!(w.damping_bound < 1e-8);
    }

    #[test]
    fn window_requires_definite_stiffness_and_damping() {
        let e = eps_bounds(&LshSystem::scalar(1.0, 1.0, 0.0, 1.0).unwrap()).unwrap_err();
        assert!(matches!(e, Error::NotPositiveDefinite { what: "F", .. }));
        let e = eps_bounds(&LshSystem::scalar(-1.0, 1.0, 1.0, 1.0).unwrap()).unwrap_err();
        assert!(matches!(e, Error::NotPositiveDefinite { what: "K", .. }));
    }

    #[test]
    fn certificate_examples() {
        let c = certificate(&unit(), 0.2);
        assert!((&*c.q - &Matrix::from_rows(&[[1.0, 0.2], [0.2, 1.0]])).max_abs() < 1e-15);
        assert!((&*c.psi - &Matrix::from_rows(&[[0.4, 0.2], [0.2, 0.6]])).max_abs() < 1e-15);
        assert!(c.valid);

        let c = certificate(&unit(), 2.0);
        assert!(!c.valid);
        assert!((c.q_min_eigenvalue().unwrap() + 1.0).abs() < 1e-12);

        let c = certificate(&unit(), 1e-300);
        assert!(!c.valid);
    }

    #[test]
    fn hurwitz_examples() {
        let damped = Matrix::from_rows(&[[0.0, 1.0], [-1.0, -1.0]]);
        assert!(is_hurwitz(&damped));
        let undamped = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]);
        assert!(!is_hurwitz(&undamped));
        assert_eq!(hurwitz_diagnosis(&undamped).unwrap(), HurwitzDiagnosis::Marginal);
        assert!(is_hurwitz(&Matrix::identity(2).scale(-1.0)));
        assert_eq!(
            hurwitz_diagnosis(&Matrix::identity(2)).unwrap(),
            HurwitzDiagnosis::Unstable
        );
    }

    #[test]
    fn deformed_hamiltonian_examples() {
        assert_eq!(deformed_hamiltonian(&unit(), 0.2, &[0.0, 0.0]), 0.0);
        assert!((deformed_hamiltonian(&unit(), 0.2, &[1.0, 1.0]) - 1.2).abs() < 1e-15);
        let x = [0.3, -0.7];
        assert_eq!(deformed_hamiltonian(&unit(), 0.0, &x), unit().hamiltonian(&x));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn theorem_window_certifies(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, m) = random_dims(&mut rng, 5, 3);
            let sys = random_system(&mut rng, n, m);
            let w = eps_bounds(&sys).unwrap();
            let cert = certificate(&sys, w.default_eps());
            prop_assert!(cert.valid);
            prop_assert!(is_hurwitz(&realize(&sys).a));
            for _ in 0..10 {
                let x: alloc::vec::Vec<f64> =
                    (0..2 * n).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
                prop_assert!(cert.dissipation_rate(&x) < 0.0);
            }
        }

        #[test]
        fn psi_forms_differ_by_damping_block(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, m) = random_dims(&mut rng, 4, 2);
            let sys = random_system(&mut rng, n, m);
            let cert = certificate(&sys, uniform(&mut rng, 0.0, 1.0));
            let minv = sys.mass_inverse().as_matrix();
            let block = &(minv * sys.damping().as_matrix()) * minv;
            let mut gap = Matrix::zeros(2 * n, 2 * n);
            gap.set_block(n, n, &block);
            let defect = (&(&*cert.psi_exact - &*cert.psi) - &gap).max_abs();
            prop_assert!(defect <= 1e-12 * (1.0 + cert.psi_exact.max_abs()));
        }

        #[test]
        fn window_is_sharp_on_diagonal_systems(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + (seed % 4) as usize;
            let sys = random_diagonal_system(&mut rng, n);
            let w = eps_bounds(&sys).unwrap();
            prop_assert!(!certificate(&sys, w.min() * (1.0 + 1e-6)).valid);
            prop_assert!(!certificate(&sys, 2.0 * w.stiffness_bound).valid);
            prop_assert!(certificate(&sys, w.min() * (1.0 - 1e-3)).valid);
        }
    }
}
