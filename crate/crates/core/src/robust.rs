//! Second-moment bounds for forces in a quadratic uncertainty class.
//!
//! Along any path, `dΥ = ½(−‖x‖²_Ψ + ⟨ÑÑᵀ, Σ⟩ + 2xᵀΓα) dt + xᵀΓβ dω`.
//! If the force satisfies `⟨ÑÑᵀ, Σ⟩ + 2xᵀΓα ≤ γ + ‖x‖²_Δ` with `Δ ≺ Ψ`,
//! then `E Υ(t) ≤ γ/(2μ) + e^{−μt}(E Υ(0) − γ/(2μ))` with
//! `μ = λ_min((Ψ − Δ)Q⁻¹)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::math;
use crate::model::LshSystem;
use crate::numlin::{
    max_eigenvalue, min_eigenvalue, min_gen_eig, require_positive_semidefinite, Matrix, SymMatrix,
};
use crate::sim::{InitialState, Trajectory};
use crate::stability::{certificate, eps_bounds, LyapunovCertificate};
use crate::stats::Moments;

/// Forces with `⟨ÑÑᵀ, Σ⟩ + 2xᵀΓα ≤ γ + ‖x‖²_Δ` at every time and state.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyClass {
    pub gamma: f64,
    pub delta: SymMatrix,
}

impl UncertaintyClass {
    /// Requires `γ ≥ 0` and `Δ ⪰ 0`.
    pub fn new(gamma: f64, delta: SymMatrix) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "class level gamma must be finite and nonnegative, got {gamma}"
            )));
        }
        require_positive_semidefinite(&delta, "Delta")?;
        Ok(Self { gamma, delta })
    }
}

/// `Γ = [εI; M⁻¹] Nᵀ`.
pub fn gamma_matrix(sys: &LshSystem, eps: f64) -> Matrix {
    let nt = sys.coupling().transpose();
    Matrix::vstack(&nt.scale(eps), &(sys.mass_inverse().as_matrix() * &nt)).expect("conforming")
}

/// `ÑÑᵀ = N M⁻¹ Nᵀ`.
fn noise_weight(sys: &LshSystem) -> Matrix {
    &(sys.coupling() * sys.mass_inverse().as_matrix()) * &sys.coupling().transpose()
}

/// Strictness margin for `Δ ≺ Ψ`.
pub fn class_margin_tolerance(psi: &SymMatrix) -> f64 {
    1e-10 * (1.0 + psi.frobenius_norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustBound {
    pub eps: f64,
    pub mu: f64,
    pub gamma: f64,
    pub lambda_min_q: f64,
    pub lambda_max_q: f64,
    /// Bound on `limsup E|x(t)|²`, `γ / (λ_min(Q) μ)`.
    pub asymptotic_bound: f64,
    /// Bound on `E Υ(0)` fed into the transient.
    pub initial_bound: f64,
}

impl RobustBound {
    /// `γ/(2μ) + e^{−μt}(E Υ(0) − γ/(2μ))`, a bound on `E Υ(t)`.
    pub fn transient(&self, t: f64) -> f64 {
        let limit = self.stationary_level();
        limit + math::exp(-self.mu * t) * (self.initial_bound - limit)
    }

    /// `γ / (2μ)`.
    pub fn stationary_level(&self) -> f64 {
        self.gamma / (2.0 * self.mu)
    }

    /// Bound on `E|x(t)|²` implied by the transient, `2·transient(t)/λ_min(Q)`.
    pub fn second_moment_at(&self, t: f64) -> f64 {
        2.0 * self.transient(t) / self.lambda_min_q
    }

    /// Uses the exact `E Υ(0)` of a known initial law.
    pub fn with_initial_state(mut self, cert: &LyapunovCertificate, init: &InitialState) -> Self {
        self.initial_bound = match init {
            InitialState::Fixed(x) => 0.5 * cert.q.quad_form(x),
            InitialState::Gaussian { mean, covariance } => {
                0.5 * cert.q.inner(covariance) + 0.5 * cert.q.quad_form(mean)
            }
        };
        self
    }
}

pub fn robust_bound(
    sys: &LshSystem,
    eps: f64,
    uc: &UncertaintyClass,
    second_moment_x0: f64,
) -> Result<RobustBound> {
    let cert = certificate(sys, eps);
    robust_bound_for(&cert, uc, second_moment_x0)
}

/// Theorem-style moment bound from an existing certificate.
pub fn robust_bound_for(
    cert: &LyapunovCertificate,
    uc: &UncertaintyClass,
    second_moment_x0: f64,
) -> Result<RobustBound> {
    if !cert.valid {
        return Err(Error::InvalidCertificate { eps: cert.eps });
    }
    if uc.delta.dim() != cert.psi.dim() {
        return Err(Error::DimensionMismatch {
            context: "uncertainty class Delta",
            expected: cert.psi.dim(),
            found: uc.delta.dim(),
        });
    }
    if !(second_moment_x0 >= 0.0 && second_moment_x0.is_finite()) {
        return Err(Error::InvalidArgument(
            "initial second moment must be finite and nonnegative".into(),
        ));
    }
    let slack = cert.psi.sub(&uc.delta);
    let margin = min_eigenvalue(&slack)?;
    if margin <= class_margin_tolerance(&cert.psi) {
        return Err(Error::InadmissibleClass { margin });
    }
    let mu = min_gen_eig(&slack, &cert.q)?;
    let lambda_min_q = min_eigenvalue(&cert.q)?;
    let lambda_max_q = max_eigenvalue(&cert.q)?;
    Ok(RobustBound {
        eps: cert.eps,
        mu,
        gamma: uc.gamma,
        lambda_min_q,
        lambda_max_q,
        asymptotic_bound: uc.gamma / (lambda_min_q * mu),
        initial_bound: 0.5 * lambda_max_q * second_moment_x0,
    })
}

/// One point of an ε sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSample {
    pub eps: f64,
    /// `None` where the certificate fails or the class is inadmissible.
    pub asymptotic_bound: Option<f64>,
}

/// Evaluates the bound at `points` equispaced interior ε of the window and
/// returns the sweep together with the minimizing sample.
pub fn eps_scan(
    sys: &LshSystem,
    uc: &UncertaintyClass,
    second_moment_x0: f64,
    points: usize,
) -> Result<(Vec<EpsSample>, Option<RobustBound>)> {
    eps_scan_with(sys, |_| Ok(uc.clone()), second_moment_x0, points)
}

/// As [`eps_scan`] for a class that depends on ε.
pub fn eps_scan_with(
    sys: &LshSystem,
    class_at: impl Fn(f64) -> Result<UncertaintyClass>,
    second_moment_x0: f64,
    points: usize,
) -> Result<(Vec<EpsSample>, Option<RobustBound>)> {
    let top = eps_bounds(sys)?.min();
    let mut sweep = Vec::with_capacity(points);
    let mut best: Option<RobustBound> = None;
    for i in 1..=points {
        let eps = top * i as f64 / (points + 1) as f64;
        let bound = class_at(eps)
            .and_then(|uc| robust_bound(sys, eps, &uc, second_moment_x0))
            .ok();
        sweep.push(EpsSample {
            eps,
            asymptotic_bound: bound.as_ref().map(|b| b.asymptotic_bound),
        });
        if let Some(b) = bound {
            if best.as_ref().is_none_or(|cur| b.asymptotic_bound < cur.asymptotic_bound) {
                best = Some(b);
            }
        }
    }
    Ok((sweep, best))
}

/// Pointwise check of the class inequality along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub pass: bool,
    /// `min_k (γ + ‖x_k‖²_Δ − ⟨ÑÑᵀ, Σ_k⟩ − 2x_kᵀΓα_k)`.
    pub worst_margin: f64,
}

/// Slack allowed for roundoff in the class inequality.
pub const ADMISSIBILITY_SLACK: f64 = 1e-9;

pub fn admissibility_check(
    sys: &LshSystem,
    eps: f64,
    uc: &UncertaintyClass,
    traj: &Trajectory,
) -> Result<Admissibility> {
    let force = traj.force_path()?;
    let gamma = gamma_matrix(sys, eps);
    let weight = noise_weight(sys);
    let mut worst = f64::INFINITY;
    for k in 0..force.steps() {
        let x = traj.state(k);
        let gx = gamma.transpose().mul_vec(x);
        let drift: f64 = gx.iter().zip(force.alpha_at(k)).map(|(a, b)| a * b).sum();
        let m = uc.gamma + uc.delta.quad_form(x) - weight.inner(&force.sigma_at(k)) - 2.0 * drift;
        worst = worst.min(m);
    }
    Ok(Admissibility {
        pass: worst >= -ADMISSIBILITY_SLACK,
        worst_margin: worst,
    })
}

/// Discrete defect of the dissipation identity for `Υ` along one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationAudit {
    /// Itô term from the realized increments `½(βΔω)ᵀÑÑᵀ(βΔω)`.
    pub residual: f64,
    /// Itô term in expectation `½⟨ÑÑᵀ, Σ⟩Δt`.
    pub residual_expected_correction: f64,
    pub dt: f64,
}

pub fn dissipation_audit(sys: &LshSystem, eps: f64, traj: &Trajectory) -> Result<DissipationAudit> {
    let force = traj.force_path()?;
    let cert = certificate(sys, eps);
    let gamma = gamma_matrix(sys, eps);
    let weight = noise_weight(sys);
    let mut ito_realized = 0.0;
    let mut ito_expected = 0.0;
    let mut rest = 0.0;
    let mut dt_max = 0.0f64;
    for k in 0..force.steps() {
        let dt = traj.grid.dt(k);
        dt_max = dt_max.max(dt);
        let x = traj.state(k);
        let gx = gamma.transpose().mul_vec(x);
        let drift: f64 = gx.iter().zip(force.alpha_at(k)).map(|(a, b)| a * b).sum();
        let bw = force.diffusion_increment(k);
        let noise: f64 = gx.iter().zip(bw).map(|(a, b)| a * b).sum();
        rest += 0.5 * (-cert.psi_exact.quad_form(x) + 2.0 * drift) * dt + noise;
        ito_realized += 0.5 * weight.bilinear(bw, bw);
        ito_expected += 0.5 * weight.inner(&force.sigma_at(k)) * dt;
    }
    let change = cert.deformed_hamiltonian(traj.state(force.steps())) - cert.deformed_hamiltonian(traj.state(0));
    Ok(DissipationAudit {
        residual: change - rest - ito_realized,
        residual_expected_correction: change - rest - ito_expected,
        dt: dt_max,
    })
}

/// Streaming ensemble statistics of `Υ(x(t))` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsilonEnsemble {
    pub mu: f64,
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    /// `Υ(x(t_k))`.
    pub upsilon: Vec<Moments>,
    /// `|x(t_k)|²`.
    pub state_norm_sq: Vec<Moments>,
    /// Per-path `e^{μt_{k+1}}Υ_{k+1} − e^{μt_k}Υ_k`.
    pub weighted_increments: Vec<Moments>,
    pub inadmissible: u64,
}

impl UpsilonEnsemble {
    /// Tracks the grid points `indices`, which must increase.
    pub fn new(mu: f64, grid: &TimeGrid, indices: Vec<usize>) -> Self {
        let n = indices.len();
        Self {
            mu,
            times: indices.iter().map(|&k| grid.time(k)).collect(),
            indices,
            upsilon: alloc::vec![Moments::default(); n],
            state_norm_sq: alloc::vec![Moments::default(); n],
            weighted_increments: alloc::vec![Moments::default(); n.saturating_sub(1)],
            inadmissible: 0,
        }
    }

    /// Every `stride`-th grid point plus the last one.
    pub fn strided(mu: f64, grid: &TimeGrid, stride: usize) -> Self {
        Self::new(mu, grid, strided_indices(grid, stride))
    }

    pub fn push(&mut self, cert: &LyapunovCertificate, traj: &Trajectory, admissible: bool) {
        let mut prev = 0.0;
        for (i, &k) in self.indices.iter().enumerate() {
            let x = traj.state(k);
            let u = cert.deformed_hamiltonian(x);
            self.upsilon[i].push(u);
            self.state_norm_sq[i].push(x.iter().map(|v| v * v).sum());
            let weighted = math::exp(self.mu * self.times[i]) * u;
            if i > 0 {
                self.weighted_increments[i - 1].push(weighted - prev);
            }
            prev = weighted;
        }
        if !admissible {
            self.inadmissible += 1;
        }
    }

    pub fn merge(&mut self, other: &UpsilonEnsemble) {
        for (a, b) in self.upsilon.iter_mut().zip(&other.upsilon) {
            a.merge(b);
        }
        for (a, b) in self.state_norm_sq.iter_mut().zip(&other.state_norm_sq) {
            a.merge(b);
        }
        for (a, b) in self.weighted_increments.iter_mut().zip(&other.weighted_increments) {
            a.merge(b);
        }
        self.inadmissible += other.inadmissible;
    }

    pub fn paths(&self) -> u64 {
        self.upsilon.first().map_or(0, |m| m.count())
    }
}

/// `0, stride, 2·stride, …` and the final grid index.
pub fn strided_indices(grid: &TimeGrid, stride: usize) -> Vec<usize> {
    let last = grid.steps();
    let mut idx: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if idx.last() != Some(&last) {
        idx.push(last);
    }
    idx
}

/// Ensembles smaller than this make the supermartingale test low-powered.
pub const MIN_ENSEMBLE_FOR_POWER: u64 = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleReport {
    pub nonincreasing: bool,
    /// Largest forward difference of `Ẑ` in standard-error units (0 if none
    /// is positive).
    pub max_uptick: f64,
    pub low_power: bool,
    /// `Ẑ(t_k) = e^{μt_k}(mean Υ(t_k) − γ/(2μ))`.
    pub z: Vec<f64>,
}

/// Tests that `Ẑ` is nonincreasing with a slack of three standard errors of
/// each paired difference.
pub fn supermartingale_check(
    ens: &UpsilonEnsemble,
    uc: &UncertaintyClass,
) -> Result<SupermartingaleReport> {
    if ens.inadmissible > 0 {
        return Err(Error::InadmissiblePaths {
            count: ens.inadmissible as usize,
            total: ens.paths() as usize,
        });
    }
    let level = uc.gamma / (2.0 * ens.mu);
    let weight = |t: f64| math::exp(ens.mu * t);
    let z: Vec<f64> = ens
        .times
        .iter()
        .zip(&ens.upsilon)
        .map(|(t, u)| weight(*t) * (u.mean() - level))
        .collect();
    let low_power = ens.paths() < MIN_ENSEMBLE_FOR_POWER;
    if low_power {
        log::warn!(
            "supermartingale test on {} paths has little statistical power",
            ens.paths()
        );
    }
    let mut nonincreasing = true;
    let mut max_uptick = 0.0f64;
    for k in 0..ens.weighted_increments.len() {
        let inc = &ens.weighted_increments[k];
        let diff = inc.mean() - level * (weight(ens.times[k + 1]) - weight(ens.times[k]));
        let se = if inc.count() >= 2 { inc.std_error() } else { 0.0 };
        if diff > 3.0 * se + 1e-9 {
            nonincreasing = false;
        }
        if diff > 0.0 {
            let units = if se > 0.0 { diff / se } else { f64::INFINITY };
            max_uptick = max_uptick.max(units);
        }
    }
    Ok(SupermartingaleReport {
        nonincreasing,
        max_uptick,
        low_power,
        z,
    })
}
