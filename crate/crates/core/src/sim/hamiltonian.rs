//! Nonlinear stochastic Hamiltonian systems
//! `H(q, p) = ½ pᵀM(q)⁻¹p + V(q)`, `dp = (−∂_qH − F(q)q̇) dt + G(q) dW`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::model::LshSystem;
use crate::numlin::{definiteness_tolerance, sym_eig, Matrix, SymMatrix};

/// The data of a stochastic Hamiltonian system. Implemented by
/// [`NonlinearHamiltonianSystem`] and by [`LshSystem`].
pub trait HamiltonianModel: Sync {
    fn dof(&self) -> usize;
    fn channels(&self) -> usize;
    fn potential(&self, q: &[f64]) -> f64;
    fn potential_gradient(&self, q: &[f64]) -> Vec<f64>;
    fn mass(&self, q: &[f64]) -> SymMatrix;
    /// `∂M/∂q_k`.
    fn mass_derivative(&self, q: &[f64], k: usize) -> SymMatrix;
    fn damping(&self, q: &[f64]) -> SymMatrix;
    /// `y = L(q)`.
    fn output(&self, q: &[f64]) -> Vec<f64>;
    /// `L′(q)`, `m × n`.
    fn output_jacobian(&self, q: &[f64]) -> Matrix;

    fn as_linear(&self) -> Option<&LshSystem> {
        None
    }

    /// `G(q) = L′(q)ᵀ`, `n × m`.
    fn dispersion(&self, q: &[f64]) -> Matrix {
        self.output_jacobian(q).transpose()
    }

    /// `M(q)⁻¹`, or an error if `M(q)` is not positive definite.
    fn inverse_mass(&self, q: &[f64]) -> Result<SymMatrix> {
        let m = self.mass(q);
        let spec = sym_eig(&m)?;
        if spec.min() <= definiteness_tolerance(&m) {
            return Err(Error::NotPositiveDefinite {
                what: "M(q)",
                min_eigenvalue: spec.min(),
            });
        }
        Ok(spec.map(|l| 1.0 / l))
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        let n = self.dof();
        let minv = self.inverse_mass(&x[..n])?;
        Ok(self.potential(&x[..n]) + 0.5 * minv.quad_form(&x[n..]))
    }

    /// `(M⁻¹p, −∂_qH − F M⁻¹p)` with the centrifugal terms
    /// `∂_qH_k = ∂_kV − ½ vᵀ(∂_kM)v`, `v = M⁻¹p`.
    fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dof();
        let (q, p) = x.split_at(n);
        let minv = self.inverse_mass(q)?;
        let v = minv.mul_vec(p);
        let grad = self.potential_gradient(q);
        let fv = self.damping(q).mul_vec(&v);
        let mut out = vec![0.0; 2 * n];
        out[..n].copy_from_slice(&v);
        for k in 0..n {
            let dh = grad[k] - 0.5 * self.mass_derivative(q, k).quad_form(&v);
            out[n + k] = -dh - fv[k];
        }
        Ok(out)
    }
}

impl HamiltonianModel for LshSystem {
    fn dof(&self) -> usize {
        LshSystem::dof(self)
    }

    fn channels(&self) -> usize {
        LshSystem::channels(self)
    }

    fn potential(&self, q: &[f64]) -> f64 {
        0.5 * self.stiffness().quad_form(q)
    }

    fn potential_gradient(&self, q: &[f64]) -> Vec<f64> {
        self.stiffness().mul_vec(q)
    }

    fn mass(&self, _q: &[f64]) -> SymMatrix {
        LshSystem::mass(self).clone()
    }

    fn mass_derivative(&self, _q: &[f64], _k: usize) -> SymMatrix {
        SymMatrix::zeros(LshSystem::dof(self))
    }

    fn damping(&self, _q: &[f64]) -> SymMatrix {
        LshSystem::damping(self).clone()
    }

    fn output(&self, q: &[f64]) -> Vec<f64> {
        self.coupling().mul_vec(q)
    }

    fn output_jacobian(&self, _q: &[f64]) -> Matrix {
        self.coupling().clone()
    }

    fn as_linear(&self) -> Option<&LshSystem> {
        Some(self)
    }

    fn inverse_mass(&self, _q: &[f64]) -> Result<SymMatrix> {
        Ok(self.mass_inverse().clone())
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        Ok(LshSystem::hamiltonian(self, x))
    }

    fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = LshSystem::dof(self);
        let mut out = self.mass_inverse().mul_vec(&x[n..]);
        out.extend(self.internal_force(x));
        Ok(out)
    }
}

pub type ScalarField = dyn Fn(&[f64]) -> f64 + Send + Sync;
pub type VectorField = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
pub type SymField = dyn Fn(&[f64]) -> SymMatrix + Send + Sync;
pub type SymDerivativeField = dyn Fn(&[f64], usize) -> SymMatrix + Send + Sync;
pub type MatrixField = dyn Fn(&[f64]) -> Matrix + Send + Sync;

/// A stochastic Hamiltonian system given by callbacks.
pub struct NonlinearHamiltonianSystem {
    pub dof: usize,
    pub channels: usize,
    pub potential: Box<ScalarField>,
    pub potential_gradient: Box<VectorField>,
    pub mass: Box<SymField>,
    pub mass_derivative: Box<SymDerivativeField>,
    pub damping: Box<SymField>,
    pub output: Box<VectorField>,
    pub output_jacobian: Box<MatrixField>,
}

impl HamiltonianModel for NonlinearHamiltonianSystem {
    fn dof(&self) -> usize {
        self.dof
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn potential(&self, q: &[f64]) -> f64 {
        (self.potential)(q)
    }

    fn potential_gradient(&self, q: &[f64]) -> Vec<f64> {
        (self.potential_gradient)(q)
    }

    fn mass(&self, q: &[f64]) -> SymMatrix {
        (self.mass)(q)
    }

    fn mass_derivative(&self, q: &[f64], k: usize) -> SymMatrix {
        (self.mass_derivative)(q, k)
    }

    fn damping(&self, q: &[f64]) -> SymMatrix {
        (self.damping)(q)
    }

    fn output(&self, q: &[f64]) -> Vec<f64> {
        (self.output)(q)
    }

    fn output_jacobian(&self, q: &[f64]) -> Matrix {
        (self.output_jacobian)(q)
    }
}

/// `∇Φᵀ J ∇Ψ = Σ_i (∂_{q_i}Φ ∂_{p_i}Ψ − ∂_{p_i}Φ ∂_{q_i}Ψ)`.
pub fn poisson_bracket(grad_phi: &[f64], grad_psi: &[f64]) -> f64 {
    let n = grad_phi.len() / 2;
    (0..n)
        .map(|i| grad_phi[i] * grad_psi[n + i] - grad_phi[n + i] * grad_psi[i])
        .sum()
}

/// Relative tolerance of the setup finite-difference probe.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-4;

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(b.iter().map(|y| y * y).sum());
    math::sqrt(diff) / (1.0 + math::sqrt(scale))
}

/// Central-difference probe of `∇V`, `L′` and `∂M` at the given points.
pub fn verify_consistency<S: HamiltonianModel + ?Sized>(sys: &S, probes: &[Vec<f64>]) -> Result<()> {
    let n = sys.dof();
    for q in probes {
        if q.len() != n {
            return Err(Error::DimensionMismatch {
                context: "consistency probe",
                expected: n,
                found: q.len(),
            });
        }
        let mut fd_grad = vec![0.0; n];
        let mut fd_jac = Matrix::zeros(sys.channels(), n);
        let mut worst_mass = 0.0f64;
        for k in 0..n {
            let h = 1e-6 * (1.0 + math::abs(q[k]));
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            fd_grad[k] = (sys.potential(&qp) - sys.potential(&qm)) / (2.0 * h);
            let (lp, lm) = (sys.output(&qp), sys.output(&qm));
            for i in 0..sys.channels() {
                fd_jac[(i, k)] = (lp[i] - lm[i]) / (2.0 * h);
            }
            let fd_mass = (&*sys.mass(&qp) - &*sys.mass(&qm)).scale(0.5 / h);
            let dm = sys.mass_derivative(q, k);
            worst_mass = worst_mass.max(relative_gap(fd_mass.as_slice(), dm.as_slice()));
        }
        let grad_gap = relative_gap(&fd_grad, &sys.potential_gradient(q));
        if grad_gap > CONSISTENCY_TOLERANCE {
            return Err(Error::InconsistentModel {
                what: "potential gradient",
                rel_error: grad_gap,
            });
        }
        let jac_gap = relative_gap(fd_jac.as_slice(), sys.output_jacobian(q).as_slice());
        if jac_gap > CONSISTENCY_TOLERANCE {
            return Err(Error::InconsistentModel {
                what: "coupling Jacobian",
                rel_error: jac_gap,
            });
        }
        if worst_mass > CONSISTENCY_TOLERANCE {
            return Err(Error::InconsistentModel {
                what: "mass derivative",
                rel_error: worst_mass,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::samples::uniform;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// One degree of freedom with `M(q) = 1 + q²`, `V(q) = ½ k q²`.
    pub(crate) fn variable_mass(k: f64, f: f64) -> NonlinearHamiltonianSystem {
        NonlinearHamiltonianSystem {
            dof: 1,
            channels: 1,
            potential: Box::new(move |q| 0.5 * k * q[0] * q[0]),
            potential_gradient: Box::new(move |q| vec![k * q[0]]),
            mass: Box::new(|q| SymMatrix::scalar(1.0 + q[0] * q[0])),
            mass_derivative: Box::new(|q, _| SymMatrix::scalar(2.0 * q[0])),
            damping: Box::new(move |_| SymMatrix::scalar(f)),
            output: Box::new(|q| vec![q[0].sin()]),
            output_jacobian: Box::new(|q| Matrix::scalar(q[0].cos())),
        }
    }

    fn harmonic() -> NonlinearHamiltonianSystem {
        NonlinearHamiltonianSystem {
            dof: 2,
            channels: 1,
            potential: Box::new(|q| 0.5 * (q[0] * q[0] + q[1] * q[1])),
            potential_gradient: Box::new(|q| q.to_vec()),
            mass: Box::new(|_| SymMatrix::identity(2)),
            mass_derivative: Box::new(|_, _| SymMatrix::zeros(2)),
            damping: Box::new(|_| SymMatrix::zeros(2)),
            output: Box::new(|_| vec![0.0]),
            output_jacobian: Box::new(|_| Matrix::zeros(1, 2)),
        }
    }

    #[test]
    fn drift_examples() {
        let d = harmonic().drift(&[0.3, -1.0, 2.0, 0.5]).unwrap();
        assert_eq!(d, vec![2.0, 0.5, -0.3, 1.0]);

        let sys = variable_mass(0.0, 0.0);
        let d = sys.drift(&[1.0, 1.0]).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15);
        assert!((d[1] - 0.25).abs() < 1e-15);

        let sys = variable_mass(3.0, 0.7);
        let d = sys.drift(&[0.4, 0.0]).unwrap();
        assert!((d[1] + 3.0 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn indefinite_mass_is_rejected() {
        let mut sys = harmonic();
        sys.mass = Box::new(|q| SymMatrix::diag(&[1.0, q[0]]));
        assert!(matches!(
            sys.drift(&[-1.0, 0.0, 0.0, 0.0]),
            Err(Error::NotPositiveDefinite { what: "M(q)", .. })
        ));
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(poisson_bracket(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        let a = [0.3, -1.2, 4.0, 0.7];
        let b = [1.1, 0.2, -0.5, 2.0];
        assert_eq!(poisson_bracket(&a, &a), 0.0);
        assert_eq!(poisson_bracket(&a, &b), -poisson_bracket(&b, &a));
    }

    #[test]
    fn linear_system_matches_generic_drift() {
        let sys = LshSystem::new(
            SymMatrix::from_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap(),
            SymMatrix::from_rows(&[[1.5, 0.2], [0.2, 0.8]]).unwrap(),
            SymMatrix::diag(&[0.4, 0.1]),
            Matrix::from_rows(&[[1.0, -1.0]]),
        )
        .unwrap();
        struct Generic<'a>(&'a LshSystem);
        impl HamiltonianModel for Generic<'_> {
            fn dof(&self) -> usize {
                2
            }
            fn channels(&self) -> usize {
                1
            }
            fn potential(&self, q: &[f64]) -> f64 {
                HamiltonianModel::potential(self.0, q)
            }
            fn potential_gradient(&self, q: &[f64]) -> Vec<f64> {
                self.0.potential_gradient(q)
            }
            fn mass(&self, q: &[f64]) -> SymMatrix {
                HamiltonianModel::mass(self.0, q)
            }
            fn mass_derivative(&self, q: &[f64], k: usize) -> SymMatrix {
                self.0.mass_derivative(q, k)
            }
            fn damping(&self, q: &[f64]) -> SymMatrix {
                HamiltonianModel::damping(self.0, q)
            }
            fn output(&self, q: &[f64]) -> Vec<f64> {
                HamiltonianModel::output(self.0, q)
            }
            fn output_jacobian(&self, q: &[f64]) -> Matrix {
                self.0.output_jacobian(q)
            }
        }
        let x = [0.3, -0.2, 1.0, 0.4];
        let fast = HamiltonianModel::drift(&sys, &x).unwrap();
        let slow = Generic(&sys).drift(&x).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-14);
        }
        let a = crate::model::realize(&sys).a.mul_vec(&x);
        for (a, b) in fast.iter().zip(&a) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn centrifugal_term_matches_finite_difference() {
        let sys = variable_mass(1.3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let q = uniform(&mut rng, -1.0, 1.0);
            let p = uniform(&mut rng, -1.0, 1.0);
            let h = 1e-5;
            let fd = (sys.hamiltonian(&[q + h, p]).unwrap() - sys.hamiltonian(&[q - h, p]).unwrap())
                / (2.0 * h);
            let analytic = -sys.drift(&[q, p]).unwrap()[1];
            assert!((fd - analytic).abs() <= 1e-5 * (1.0 + analytic.abs()));
        }
    }

    #[test]
    fn consistency_probe_catches_wrong_gradient() {
        let probes = vec![vec![0.3], vec![-1.2]];
        assert!(verify_consistency(&variable_mass(2.0, 0.1), &probes).is_ok());
        let mut bad = variable_mass(2.0, 0.1);
        bad.potential_gradient = Box::new(|q| vec![3.0 * q[0]]);
        assert!(matches!(
            verify_consistency(&bad, &probes),
            Err(Error::InconsistentModel { what: "potential gradient", .. })
        ));
        let mut bad = variable_mass(2.0, 0.1);
        bad.mass_derivative = Box::new(|q, _| SymMatrix::scalar(q[0]));
        assert!(verify_consistency(&bad, &probes).is_err());
    }
}
