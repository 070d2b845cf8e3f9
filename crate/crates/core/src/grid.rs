//! Time grids.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
enum Nodes {
    Uniform { dt: f64, steps: usize },
    Explicit(Vec<f64>),
}

/// Strictly increasing time nodes starting at `t_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(Nodes);

impl TimeGrid {
    /// `t_k = k·dt` for `k = 0..=round(t_end/dt)`. Every step has exactly
    /// the width `dt`.
    pub fn uniform(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && t_end > 0.0 && dt.is_finite() && t_end.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "uniform grid needs positive finite horizon and step, got T = {t_end}, dt = {dt}"
            )));
        }
        let steps = math::round(t_end / dt) as usize;
        if steps == 0 || math::abs(steps as f64 * dt - t_end) > 1e-9 * t_end {
            return Err(Error::InvalidArgument(alloc::format!(
                "horizon {t_end} is not an integer multiple of dt = {dt}"
            )));
        }
        Ok(Self(Nodes::Uniform { dt, steps }))
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid { index: times.len() });
        }
        for k in 1..times.len() {
            if !(times[k] > times[k - 1]) {
                return Err(Error::InvalidGrid { index: k });
            }
        }
        Ok(Self(Nodes::Explicit(times)))
    }

    pub fn steps(&self) -> usize {
        match &self.0 {
            Nodes::Uniform { steps, .. } => *steps,
            Nodes::Explicit(t) => t.len() - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        match &self.0 {
            Nodes::Uniform { dt, .. } => k as f64 * dt,
            Nodes::Explicit(t) => t[k],
        }
    }

    /// Width of step `k` (from node `k` to `k + 1`).
    pub fn dt(&self, k: usize) -> f64 {
        match &self.0 {
            Nodes::Uniform { dt, .. } => *dt,
            Nodes::Explicit(t) => t[k + 1] - t[k],
        }
    }

    pub fn uniform_step(&self) -> Option<f64> {
        match &self.0 {
            Nodes::Uniform { dt, .. } => Some(*dt),
            Nodes::Explicit(_) => None,
        }
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Index of the node nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        match &self.0 {
            Nodes::Uniform { dt, steps } => (math::round(t / dt).max(0.0) as usize).min(*steps),
            Nodes::Explicit(times) => {
                let mut best = 0;
                for (k, s) in times.iter().enumerate() {
                    if math::abs(s - t) < math::abs(times[best] - t) {
                        best = k;
                    }
                }
                best
            }
        }
    }
}
