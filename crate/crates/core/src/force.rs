//! Driving forces `dW = α dt + β dω` with `ω` a standard Wiener process.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{normalize_mass, LshSystem};
use crate::numlin::{sym_eig, Matrix, SymMatrix};
use crate::rng::{Lane, PathStream};
use crate::robust::{gamma_matrix, UncertaintyClass};

pub type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
pub type DiffusionFn = dyn Fn(f64, &[f64], &mut Matrix) + Send + Sync;

/// Drift `α(t, x)`.
pub enum Drift {
    Zero,
    Constant(Vec<f64>),
    /// `α = offset + gain · x` with `gain` of shape `m × 2n`.
    Affine { offset: Vec<f64>, gain: Matrix },
    /// `α = a · v / max(|v|, 1)` with `v = direction · x`, so `|α| ≤ a`.
    Saturated { amplitude: f64, direction: Matrix },
    Custom(Box<DriftFn>),
}

/// Diffusion factor `β(t, x)`, `m × m`.
pub enum Diffusion {
    Identity,
    Constant(Matrix),
    Custom(Box<DiffusionFn>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceKind {
    StandardWiener,
    AffineUncertain,
    BoundedDrift,
    /// Caller-supplied `α`, `β`; local integrability is the caller's contract.
    UserDefined,
}

impl ForceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::StandardWiener => "standard_wiener",
            Self::AffineUncertain => "affine_uncertain",
            Self::BoundedDrift => "bounded_drift",
            Self::UserDefined => "user_defined",
        }
    }
}

pub struct ForceModel {
    kind: ForceKind,
    channels: usize,
    drift: Drift,
    diffusion: Diffusion,
    class: Option<UncertaintyClass>,
}

impl fmt::Debug for ForceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForceModel")
            .field("kind", &self.kind)
            .field("channels", &self.channels)
            .field("class", &self.class)
            .finish_non_exhaustive()
    }
}

fn check_square(beta: &Matrix, m: usize) -> Result<()> {
    if beta.rows() != m || beta.cols() != m {
        return Err(Error::DimensionMismatch {
            context: "diffusion factor",
            expected: m,
            found: beta.rows().max(beta.cols()),
        });
    }
    Ok(())
}

impl ForceModel {
    pub fn standard_wiener(channels: usize) -> Self {
        Self {
            kind: ForceKind::StandardWiener,
            channels,
            drift: Drift::Zero,
            diffusion: Diffusion::Identity,
            class: None,
        }
    }

    /// `α = offset + gain·x`, constant `β`.
    pub fn affine(offset: Vec<f64>, gain: Matrix, beta: Matrix) -> Result<Self> {
        let m = offset.len();
        if gain.rows() != m {
            return Err(Error::DimensionMismatch {
                context: "affine drift gain rows",
                expected: m,
                found: gain.rows(),
            });
        }
        check_square(&beta, m)?;
        Ok(Self {
            kind: ForceKind::AffineUncertain,
            channels: m,
            drift: Drift::Affine { offset, gain },
            diffusion: Diffusion::Constant(beta),
            class: None,
        })
    }

    /// Drift of magnitude at most `amplitude` along `direction · x`,
    /// constant `β`.
    pub fn bounded_drift(amplitude: f64, direction: Matrix, beta: Matrix) -> Result<Self> {
        if !(amplitude >= 0.0) {
            return Err(Error::InvalidArgument("drift bound must be nonnegative".into()));
        }
        let m = direction.rows();
        check_square(&beta, m)?;
        Ok(Self {
            kind: ForceKind::BoundedDrift,
            channels: m,
            drift: Drift::Saturated {
                amplitude,
                direction,
            },
            diffusion: Diffusion::Constant(beta),
            class: None,
        })
    }

    pub fn custom(channels: usize, drift: Drift, diffusion: Diffusion) -> Self {
        Self {
            kind: ForceKind::UserDefined,
            channels,
            drift,
            diffusion,
            class: None,
        }
    }

    pub fn with_class(mut self, class: UncertaintyClass) -> Self {
        self.class = Some(class);
        self
    }

    pub fn kind(&self) -> ForceKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn class(&self) -> Option<&UncertaintyClass> {
        self.class.as_ref()
    }

    pub fn is_standard_wiener(&self) -> bool {
        matches!(self.drift, Drift::Zero) && matches!(self.diffusion, Diffusion::Identity)
    }

    pub fn alpha_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.fill(0.0),
            Drift::Constant(c) => out.copy_from_slice(c),
            Drift::Affine { offset, gain } => {
                let gx = gain.mul_vec(x);
                for ((o, a), b) in out.iter_mut().zip(offset).zip(&gx) {
                    *o = a + b;
                }
            }
            Drift::Saturated {
                amplitude,
                direction,
            } => {
                let v = direction.mul_vec(x);
                let norm = libm::sqrt(v.iter().map(|e| e * e).sum::<f64>());
                let s = amplitude / norm.max(1.0);
                for (o, e) in out.iter_mut().zip(&v) {
                    *o = s * e;
                }
            }
            Drift::Custom(f) => f(t, x, out),
        }
    }

    pub fn beta_into(&self, t: f64, x: &[f64], out: &mut Matrix) {
        match &self.diffusion {
            Diffusion::Identity => *out = Matrix::identity(self.channels),
            Diffusion::Constant(b) => out.as_mut_slice().copy_from_slice(b.as_slice()),
            Diffusion::Custom(f) => f(t, x, out),
        }
    }
}

/// Realized force record along one path, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcePath {
    pub channels: usize,
    pub dt: Vec<f64>,
    /// `ΔW_k`.
    pub increments: Vec<f64>,
    /// `Δω_k`, the underlying Wiener increments.
    pub noise: Vec<f64>,
    /// `α(t_k, x_k)`.
    pub alpha: Vec<f64>,
    /// `Σ_k = β βᵀ`, row-major `m × m`.
    pub sigma: Vec<f64>,
    /// `β_k Δω_k`.
    pub diffusion_increments: Vec<f64>,
}

impl ForcePath {
    pub fn with_capacity(channels: usize, steps: usize) -> Self {
        Self {
            channels,
            dt: Vec::with_capacity(steps),
            increments: Vec::with_capacity(steps * channels),
            noise: Vec::with_capacity(steps * channels),
            alpha: Vec::with_capacity(steps * channels),
            sigma: Vec::with_capacity(steps * channels * channels),
            diffusion_increments: Vec::with_capacity(steps * channels),
        }
    }

    pub fn steps(&self) -> usize {
        self.dt.len()
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.channels..(k + 1) * self.channels]
    }

    pub fn alpha_at(&self, k: usize) -> &[f64] {
        &self.alpha[k * self.channels..(k + 1) * self.channels]
    }

    pub fn diffusion_increment(&self, k: usize) -> &[f64] {
        &self.diffusion_increments[k * self.channels..(k + 1) * self.channels]
    }

    pub fn sigma_at(&self, k: usize) -> Matrix {
        let m = self.channels;
        Matrix::from_row_major(m, m, self.sigma[k * m * m..(k + 1) * m * m].to_vec())
            .expect("stored square")
    }

    /// Appends a step given `Δω` already in place.
    pub(crate) fn push_standard(&mut self, dt: f64, noise: &[f64]) {
        let m = self.channels;
        self.dt.push(dt);
        self.increments.extend_from_slice(noise);
        self.noise.extend_from_slice(noise);
        self.alpha.extend(core::iter::repeat_n(0.0, m));
        self.diffusion_increments.extend_from_slice(noise);
        for i in 0..m {
            for j in 0..m {
                self.sigma.push(if i == j { 1.0 } else { 0.0 });
            }
        }
    }
}

/// Draws one path's increments step by step, so state-dependent forces can
/// be fed the current state.
pub struct ForceSampler<'a> {
    model: &'a ForceModel,
    stream: PathStream,
    z: Vec<f64>,
    alpha: Vec<f64>,
    beta: Matrix,
    pub path: ForcePath,
}

impl<'a> ForceSampler<'a> {
    pub fn new(model: &'a ForceModel, seed: u64, path: u64, steps: usize) -> Self {
        let m = model.channels;
        Self {
            model,
            stream: PathStream::new(seed, Lane::Force, path, m),
            z: vec![0.0; m],
            alpha: vec![0.0; m],
            beta: Matrix::zeros(m, m),
            path: ForcePath::with_capacity(m, steps),
        }
    }

    /// Records step `k` on `[t, t + dt]` from left-point coefficients at `x`
    /// and returns `ΔW_k`.
    pub fn step(&mut self, k: usize, t: f64, dt: f64, x: &[f64]) -> &[f64] {
        let m = self.model.channels;
        self.stream.normals_at(k as u64, &mut self.z);
        let sd = libm::sqrt(dt);
        for v in self.z.iter_mut() {
            *v *= sd;
        }
        if self.model.is_standard_wiener() {
            self.path.push_standard(dt, &self.z);
            return self.path.increment(k);
        }
        self.model.alpha_into(t, x, &mut self.alpha);
        self.model.beta_into(t, x, &mut self.beta);
        let bz = self.beta.mul_vec(&self.z);
        self.path.dt.push(dt);
        self.path.noise.extend_from_slice(&self.z);
        self.path.alpha.extend_from_slice(&self.alpha);
        self.path.diffusion_increments.extend_from_slice(&bz);
        for i in 0..m {
            self.path.increments.push(self.alpha[i] * dt + bz[i]);
        }
        let sigma = &self.beta * &self.beta.transpose();
        self.path.sigma.extend_from_slice(sigma.as_slice());
        self.path.increment(k)
    }
}

/// Samples a whole path against a state feed `state_at(k)`.
pub fn sample_increments(
    model: &ForceModel,
    grid: &TimeGrid,
    mut state_at: impl FnMut(usize) -> Vec<f64>,
    seed: u64,
    path: u64,
) -> ForcePath {
    let mut s = ForceSampler::new(model, seed, path, grid.steps());
    for k in 0..grid.steps() {
        let x = state_at(k);
        s.step(k, grid.time(k), grid.dt(k), &x);
    }
    s.path
}

/// `(Σ_k |ΔW_k|², Σ_k tr(Σ_k) Δt_k)`.
pub fn quadratic_variation(path: &ForcePath) -> (f64, f64) {
    let m = path.channels;
    let realized = path.increments.iter().map(|v| v * v).sum();
    let predicted = (0..path.steps())
        .map(|k| {
            let tr: f64 = (0..m).map(|i| path.sigma[k * m * m + i * m + i]).sum();
            tr * path.dt[k]
        })
        .sum();
    (realized, predicted)
}

/// Class parameters certified for any force with `|α| ≤ a` and
/// `‖Σ‖ ≤ sigma_max`, via `2xᵀΓα ≤ δ|x|² + |α|²‖Γ‖²_F/δ`.
pub fn bounded_drift_class_params(
    sys: &LshSystem,
    eps: f64,
    a: f64,
    delta: f64,
    sigma_max: f64,
) -> Result<UncertaintyClass> {
    if !(a >= 0.0 && delta >= 0.0 && sigma_max >= 0.0) {
        return Err(Error::InvalidArgument(
            "drift bound, delta and sigma_max must be nonnegative".into(),
        ));
    }
    if delta == 0.0 && a > 0.0 {
        return Err(Error::InvalidArgument(
            "delta = 0 with a nonzero drift bound makes the class bound degenerate".into(),
        ));
    }
    let nt = normalize_mass(sys).coupling;
    let noise = (&nt * &nt.transpose()).trace() * sigma_max;
    let drift = if a == 0.0 {
        0.0
    } else {
        let g = gamma_matrix(sys, eps).frobenius_norm();
        a * a * g * g / delta
    };
    UncertaintyClass::new(noise + drift, SymMatrix::identity(sys.state_dim()).scale(delta))
}

/// Class parameters for `α = offset + gain·x` with constant `β`:
/// `Δ = δI + (ΓG + GᵀΓᵀ)₊`, `γ = ⟨ÑÑᵀ, ββᵀ⟩ + |Γ·offset|²/δ`.
pub fn affine_class_params(
    sys: &LshSystem,
    eps: f64,
    offset: &[f64],
    gain: &Matrix,
    beta: &Matrix,
    delta: f64,
) -> Result<UncertaintyClass> {
    let gamma_mat = gamma_matrix(sys, eps);
    let g_off = gamma_mat.mul_vec(offset);
    let off_sq: f64 = g_off.iter().map(|v| v * v).sum();
    if delta <= 0.0 && off_sq > 0.0 {
        return Err(Error::InvalidArgument(
            "delta must be positive when the drift offset is nonzero".into(),
        ));
    }
    let nt = normalize_mass(sys).coupling;
    let noise = (&nt * &nt.transpose()).inner(&(beta * &beta.transpose()));
    let drift = if off_sq == 0.0 { 0.0 } else { off_sq / delta };
    let cross = &gamma_mat * gain;
    let sym = SymMatrix::symmetrize(&cross + &cross.transpose());
    let positive_part = sym_eig(&sym)?.map(|l| l.max(0.0));
    let dim = sys.state_dim();
    let delta_mat = positive_part.add(&SymMatrix::identity(dim).scale(delta.max(0.0)));
    UncertaintyClass::new(noise + drift, delta_mat)
}
