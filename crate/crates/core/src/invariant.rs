//! The stationary Gaussian law of an LSH system under standard Wiener noise.

use crate::error::{Error, Result};
use crate::math;
use crate::model::{realize, LshSystem, StateSpace};
use crate::numlin::{
    definiteness_tolerance, expm, is_positive_definite, lyapunov_residual, min_eigenvalue,
    solve_lyapunov, Matrix, SymMatrix,
};
use crate::stability::{hurwitz_diagnosis, HurwitzDiagnosis};

/// Zero-mean Gaussian with covariance `Π` solving `AΠ + ΠAᵀ + BBᵀ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMeasure {
    pub covariance: SymMatrix,
    /// `Π₁₂M⁻¹`, antisymmetrized.
    pub xi: Matrix,
    /// `‖Π₁₂M⁻¹ + (Π₁₂M⁻¹)ᵀ‖_F` before antisymmetrization.
    pub xi_defect: f64,
    pub full_rank_coupling: bool,
    dof: usize,
}

impl InvariantMeasure {
    /// Wraps a covariance that did not necessarily come from the solver.
    pub fn from_covariance(sys: &LshSystem, covariance: SymMatrix) -> Result<Self> {
        let n = sys.dof();
        if covariance.dim() != 2 * n {
            return Err(Error::DimensionMismatch {
                context: "invariant covariance",
                expected: 2 * n,
                found: covariance.dim(),
            });
        }
        let raw = &covariance.block(0, n, n, n) * sys.mass_inverse().as_matrix();
        let rt = raw.transpose();
        let xi_defect = (&raw + &rt).frobenius_norm();
        let xi = (&raw - &rt).scale(0.5);
        Ok(Self {
            covariance,
            xi,
            xi_defect,
            full_rank_coupling: coupling_has_full_rank(sys),
            dof: n,
        })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn position_block(&self) -> Matrix {
        self.covariance.block(0, 0, self.dof, self.dof)
    }

    pub fn cross_block(&self) -> Matrix {
        self.covariance.block(0, self.dof, self.dof, self.dof)
    }

    pub fn momentum_block(&self) -> Matrix {
        self.covariance.block(self.dof, self.dof, self.dof, self.dof)
    }
}

fn coupling_has_full_rank(sys: &LshSystem) -> bool {
    let d = sys.coupling_gram();
    is_positive_definite(&d, definiteness_tolerance(&d))
}

/// `BBᵀ` of the realization.
pub fn noise_intensity(ss: &StateSpace) -> SymMatrix {
    SymMatrix::symmetrize(&ss.b * &ss.b.transpose())
}

pub fn invariant_covariance(sys: &LshSystem) -> Result<InvariantMeasure> {
    let ss = realize(sys);
    match hurwitz_diagnosis(&ss.a)? {
        HurwitzDiagnosis::Hurwitz => {}
        other => {
            return Err(Error::NoInvariantMeasure {
                diagnosis: other.as_str(),
            })
        }
    }
    let v = noise_intensity(&ss);
    let pi = solve_lyapunov(&ss.a, &v)?;
    let residual = lyapunov_residual(&ss.a, &pi, &v);
    if residual > 1e-10 * (1.0 + v.frobenius_norm()) {
        return Err(Error::NotConverged {
            what: "invariant covariance",
            iterations: 0,
        });
    }
    InvariantMeasure::from_covariance(sys, pi)
}

/// Frobenius norms of the block equations of `AΠ + ΠAᵀ + BBᵀ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SylvesterResiduals {
    /// `M⁻¹Π₂₁ + Π₁₂M⁻¹`.
    pub position: f64,
    /// `M⁻¹Π₂₂ − Π₁₁K − Π₁₂M⁻¹F`.
    pub cross: f64,
    /// `−FM⁻¹Π₂₂ − Π₂₂M⁻¹F − KΠ₁₂ − Π₂₁K + NᵀN`.
    pub momentum: f64,
}

impl SylvesterResiduals {
    pub fn max(&self) -> f64 {
        self.position.max(self.cross).max(self.momentum)
    }
}

pub fn sylvester_residuals(sys: &LshSystem, meas: &InvariantMeasure) -> SylvesterResiduals {
    let minv = sys.mass_inverse().as_matrix();
    let k = sys.stiffness().as_matrix();
    let f = sys.damping().as_matrix();
    let p11 = meas.position_block();
    let p12 = meas.cross_block();
    let p21 = p12.transpose();
    let p22 = meas.momentum_block();
    let p12_minv = &p12 * minv;
    let position = &(minv * &p21) + &p12_minv;
    let cross = &(&(minv * &p22) - &(&p11 * k)) - &(&p12_minv * f);
    let fminv_p22 = &(f * minv) * &p22;
    let momentum = &(&(&-&fminv_p22 - &fminv_p22.transpose()) - &(k * &p12)) - &(&p21 * k);
    let momentum = &momentum + sys.coupling_gram().as_matrix();
    SylvesterResiduals {
        position: position.frobenius_norm(),
        cross: cross.frobenius_norm(),
        momentum: momentum.frobenius_norm(),
    }
}

/// Stationary kinetic energy against the virial of the internal force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirialReport {
    /// `E T = ½ tr(M⁻¹Π₂₂)`.
    pub mean_kinetic: f64,
    /// `−½ E(qᵀf)` with `f = −Kq − FM⁻¹p`.
    pub virial_rhs: f64,
    pub trace_cross: f64,
}

impl VirialReport {
    pub fn gap(&self) -> f64 {
        math::abs(self.mean_kinetic - self.virial_rhs)
    }
}

pub fn virial_check(sys: &LshSystem, meas: &InvariantMeasure) -> VirialReport {
    let minv = sys.mass_inverse().as_matrix();
    let mean_kinetic = 0.5 * (minv * &meas.momentum_block()).trace();
    let q_dot_f = -(sys.stiffness().as_matrix() * &meas.position_block()).trace()
        - (&(sys.damping().as_matrix() * minv) * &meas.cross_block().transpose()).trace();
    VirialReport {
        mean_kinetic,
        virial_rhs: -0.5 * q_dot_f,
        trace_cross: meas.cross_block().trace(),
    }
}

/// The two-term lower bound `BBᵀ + A BBᵀ Aᵀ` on the controllability Gramian.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityBound {
    pub matrix: SymMatrix,
    pub min_eigenvalue: f64,
    pub full_rank_coupling: bool,
}

pub fn controllability_bound(sys: &LshSystem) -> Result<ControllabilityBound> {
    let minv = sys.mass_inverse().as_matrix();
    let f = sys.damping().as_matrix();
    let d = sys.coupling_gram();
    let mdm = &(minv * d.as_matrix()) * minv;
    let mdmf = &mdm * f;
    let fmdmf = f * &mdmf;
    let matrix = SymMatrix::symmetrize(
        Matrix::from_blocks(&mdm, &-&mdmf, &-&mdmf.transpose(), &(d.as_matrix() + &fmdmf))
            .expect("conforming blocks"),
    );
    debug_assert!({
        let ss = realize(sys);
        let bbt = noise_intensity(&ss);
        let direct = bbt.as_matrix() + &(&(&ss.a * bbt.as_matrix()) * &ss.a.transpose());
        (&direct - &*matrix).max_abs() <= 1e-12 * (1.0 + direct.max_abs())
    });
    let min_eigenvalue = min_eigenvalue(&matrix)?;
    Ok(ControllabilityBound {
        matrix,
        min_eigenvalue,
        full_rank_coupling: coupling_has_full_rank(sys),
    })
}

/// `∫₀ᵀ e^{tA} V e^{tAᵀ} dt` by composite Simpson with `intervals` panels
/// (rounded up to even). Independent of the Kronecker Lyapunov solver.
pub fn gramian_integral(a: &Matrix, v: &SymMatrix, horizon: f64, intervals: usize) -> Result<SymMatrix> {
    let panels = intervals.max(2).div_ceil(2) * 2;
    let h = horizon / panels as f64;
    let step = expm(&a.scale(h))?;
    let mut phi = Matrix::identity(a.rows());
    let mut acc = Matrix::zeros(a.rows(), a.rows());
    for k in 0..=panels {
        let w = if k == 0 || k == panels {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let term = &(&phi * v.as_matrix()) * &phi.transpose();
        acc = &acc + &term.scale(w);
        phi = &step * &phi;
    }
    Ok(SymMatrix::symmetrize(acc.scale(h / 3.0)))
}

/// Smallest doubling of `start` with `‖e^{TA}‖_F ≤ tol`.
pub fn decay_horizon(a: &Matrix, start: f64, tol: f64) -> Result<f64> {
    let mut t = start;
    for _ in 0..60 {
        if expm(&a.scale(t))?.frobenius_norm() <= tol {
            return Ok(t);
        }
        t *= 2.0;
    }
    Err(Error::NotConverged {
        what: "decay horizon",
        iterations: 60,
    })
}
