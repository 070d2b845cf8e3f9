//! Kalman filtering of position from the observed momentum path.
//!
//! With `x₀ ~ Normal(0, Π)` the conditional mean `q̂ = E(q | p on [0,t])`
//! obeys `dq̂ = M⁻¹p dt − P K D⁻¹ (dp − f̂ dt)`, `f̂ = −Kq̂ − FM⁻¹p`, with
//! `P(t) = (P₀⁻¹ + t K D⁻¹ K)⁻¹`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::invariant::InvariantMeasure;
use crate::model::LshSystem;
use crate::numlin::{
    definiteness_tolerance, is_positive_definite, require_positive_definite, Matrix, SymMatrix,
};
use crate::sim::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSetup {
    /// `Π₁₂ Π₂₂⁻¹`, so that `q̂(0) = gain · p(0)`.
    pub initial_gain: Matrix,
    /// `Π₁₁ − Π₁₂ Π₂₂⁻¹ Π₂₁`.
    pub initial_covariance: SymMatrix,
    /// `D = NᵀN`.
    pub coupling_gram: SymMatrix,
    /// `K D⁻¹ K`, the information rate.
    pub information_rate: SymMatrix,
}

pub fn filter_setup(sys: &LshSystem, meas: &InvariantMeasure) -> Result<FilterSetup> {
    let d = sys.coupling_gram();
    if !is_positive_definite(&d, definiteness_tolerance(&d)) {
        return Err(Error::NotPositiveDefinite {
            what: "D = NᵀN",
            min_eigenvalue: crate::numlin::min_eigenvalue(&d)?,
        });
    }
    let p22 = SymMatrix::symmetrize(meas.momentum_block());
    if !is_positive_definite(&p22, definiteness_tolerance(&p22)) {
        return Err(Error::Singular {
            what: "momentum covariance Pi22",
        });
    }
    let p12 = meas.cross_block();
    // Π₁₂Π₂₂⁻¹ = (Π₂₂⁻¹Π₂₁)ᵀ.
    let initial_gain = p22.solve(&p12.transpose())?.transpose();
    let initial_covariance =
        SymMatrix::symmetrize(&meas.position_block() - &(&initial_gain * &p12.transpose()));
    require_positive_definite(&initial_covariance, "P0")?;
    let k = sys.stiffness();
    let information_rate = SymMatrix::symmetrize(k.as_matrix() * &d.solve(k.as_matrix())?);
    Ok(FilterSetup {
        initial_gain,
        initial_covariance,
        coupling_gram: d,
        information_rate,
    })
}

impl FilterSetup {
    /// `P(t) = (P₀⁻¹ + t K D⁻¹ K)⁻¹`.
    pub fn covariance_at(&self, t: f64) -> Result<SymMatrix> {
        if t == 0.0 {
            return Ok(self.initial_covariance.clone());
        }
        self.initial_covariance
            .inverse()?
            .add(&self.information_rate.scale(t))
            .inverse()
    }

    /// Replaces `P₀`, e.g. to emulate a revealed initial position.
    pub fn with_initial_covariance(mut self, p0: SymMatrix) -> Self {
        self.initial_covariance = p0;
        self
    }
}

/// `(P₀⁻¹ + t K D⁻¹ K)⁻¹` for an explicit stiffness.
pub fn covariance_closed_form(setup: &FilterSetup, stiffness: &SymMatrix, t: f64) -> Result<SymMatrix> {
    let k = stiffness.as_matrix();
    let rate = SymMatrix::symmetrize(k * &setup.coupling_gram.solve(k)?);
    if t == 0.0 {
        return Ok(setup.initial_covariance.clone());
    }
    setup.initial_covariance.inverse()?.add(&rate.scale(t)).inverse()
}

/// Per-step filter gains `P(t_k) K D⁻¹`, shared by every path on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterGains {
    pub grid: TimeGrid,
    pub covariances: Vec<SymMatrix>,
    gains: Vec<Matrix>,
    initial_gain: Matrix,
}

impl FilterGains {
    pub fn new(sys: &LshSystem, setup: &FilterSetup, grid: &TimeGrid) -> Result<Self> {
        let kd = setup
            .coupling_gram
            .solve(sys.stiffness().as_matrix())?
            .transpose();
        let mut covariances = Vec::with_capacity(grid.len());
        let mut gains = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let p = setup.covariance_at(grid.time(k))?;
            gains.push(p.as_matrix() * &kd);
            covariances.push(p);
        }
        Ok(Self {
            grid: grid.clone(),
            covariances,
            gains,
            initial_gain: setup.initial_gain.clone(),
        })
    }
}

/// Estimates and errors along one path, one row of `n` per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub dof: usize,
    pub estimates: Vec<f64>,
    pub errors: Vec<f64>,
}

impl FilterRun {
    pub fn estimate(&self, k: usize) -> &[f64] {
        &self.estimates[k * self.dof..(k + 1) * self.dof]
    }

    pub fn error(&self, k: usize) -> &[f64] {
        &self.errors[k * self.dof..(k + 1) * self.dof]
    }
}

fn check_grid(traj: &Trajectory, grid: &TimeGrid) -> Result<()> {
    if traj.grid != *grid {
        return Err(Error::InvalidArgument(
            "trajectory grid differs from the grid of the filter gains".into(),
        ));
    }
    Ok(())
}

/// Filters `traj` starting from `q̂(0) = Π₁₂Π₂₂⁻¹ p(0)`.
pub fn run_filter(sys: &LshSystem, traj: &Trajectory, gains: &FilterGains) -> Result<FilterRun> {
    let qhat0 = gains.initial_gain.mul_vec(traj.momentum(0));
    run_filter_from(sys, traj, gains, qhat0)
}

/// Filters `traj` from a given initial estimate.
pub fn run_filter_from(
    sys: &LshSystem,
    traj: &Trajectory,
    gains: &FilterGains,
    mut qhat: Vec<f64>,
) -> Result<FilterRun> {
    check_grid(traj, &gains.grid)?;
    let n = sys.dof();
    if traj.dof != n || qhat.len() != n {
        return Err(Error::DimensionMismatch {
            context: "filter state",
            expected: n,
            found: traj.dof,
        });
    }
    let steps = gains.grid.steps();
    let mut estimates = Vec::with_capacity((steps + 1) * n);
    let mut errors = Vec::with_capacity((steps + 1) * n);
    let record = |qhat: &[f64], k: usize, est: &mut Vec<f64>, err: &mut Vec<f64>| {
        est.extend_from_slice(qhat);
        err.extend(traj.position(k).iter().zip(qhat).map(|(q, h)| q - h));
    };
    record(&qhat, 0, &mut estimates, &mut errors);
    for k in 0..steps {
        let dt = gains.grid.dt(k);
        let p = traj.momentum(k);
        let v = sys.mass_inverse().mul_vec(p);
        let kq = sys.stiffness().mul_vec(&qhat);
        let fv = sys.damping().mul_vec(&v);
        let innovation: Vec<f64> = (0..n)
            .map(|i| (traj.momentum(k + 1)[i] - p[i]) + (kq[i] + fv[i]) * dt)
            .collect();
        let correction = gains.gains[k].mul_vec(&innovation);
        for i in 0..n {
            qhat[i] += v[i] * dt - correction[i];
        }
        record(&qhat, k + 1, &mut estimates, &mut errors);
    }
    Ok(FilterRun {
        dof: n,
        estimates,
        errors,
    })
}
