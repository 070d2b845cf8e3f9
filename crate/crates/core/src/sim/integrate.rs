//! Path simulation: Euler–Maruyama for any Hamiltonian model, exact Gaussian
//! transitions for LSH systems under standard Wiener forcing.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::force::{ForceModel, ForcePath, ForceSampler};
use crate::grid::TimeGrid;
use crate::math;
use crate::model::{realize, LshSystem};
use crate::numlin::{cholesky_psd, expm, Matrix, SymMatrix};
use crate::rng::{Lane, PathStream};

use super::hamiltonian::HamiltonianModel;

/// Relative pivot floor for factoring the near-singular step covariance.
pub const STEP_COVARIANCE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    EulerMaruyama,
    /// `x_{k+1} = e^{AΔt}x_k + ξ_k` with the exact step covariance.
    ExactLinear,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::EulerMaruyama => "euler_maruyama",
            Self::ExactLinear => "exact_linear",
        }
    }
}

/// One exact step of width `dt`: the transition `e^{AΔt}` and a factor of
/// the joint covariance of `(ξ, ΔW)`,
/// `∫₀^Δt [e^{uA}B; I][e^{uA}B; I]ᵀ du`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactStep {
    pub dt: f64,
    pub transition: Matrix,
    pub joint_covariance: SymMatrix,
    factor: Matrix,
    state_dim: usize,
}

impl ExactStep {
    pub fn new(sys: &LshSystem, dt: f64) -> Result<Self> {
        let ss = realize(sys);
        let d = ss.a.rows();
        let m = ss.b.cols();
        let a_norm = ss.a.frobenius_norm();
        let panels = {
            let p = math::ceil(dt * a_norm / 0.02).max(16.0) as usize;
            p + p % 2
        };
        let h = dt / panels as f64;
        let step = expm(&ss.a.scale(h))?;
        let mut phi_b = ss.b.clone();
        let mut pp = Matrix::zeros(d, d);
        let mut pw = Matrix::zeros(d, m);
        for k in 0..=panels {
            let w = if k == 0 || k == panels {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            pp = &pp + &(&phi_b * &phi_b.transpose()).scale(w);
            pw = &pw + &phi_b.scale(w);
            phi_b = &step * &phi_b;
        }
        let pp = pp.scale(h / 3.0);
        let pw = pw.scale(h / 3.0);
        let joint = SymMatrix::symmetrize(
            Matrix::from_blocks(&pp, &pw, &pw.transpose(), &Matrix::identity(m).scale(dt))
                .expect("conforming blocks"),
        );
        let factor = cholesky_psd(&joint, STEP_COVARIANCE_FLOOR);
        Ok(Self {
            dt,
            transition: expm(&ss.a.scale(dt))?,
            joint_covariance: joint,
            factor,
            state_dim: d,
        })
    }

    /// Covariance of `ξ` alone.
    pub fn state_covariance(&self) -> SymMatrix {
        let d = self.state_dim;
        SymMatrix::symmetrize(self.joint_covariance.block(0, 0, d, d))
    }

    fn draw(&self, z: &[f64], xi: &mut [f64]) {
        let n = self.factor.rows();
        for i in 0..n {
            let row = self.factor.row(i);
            xi[i] = row[..=i].iter().zip(&z[..=i]).map(|(l, z)| l * z).sum();
        }
    }
}

/// A simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub dof: usize,
    pub channels: usize,
    /// Row `k` is `x_k = (q_k, p_k)`.
    pub states: Vec<f64>,
    /// Row `k` is `y_k = L(q_k)`.
    pub outputs: Vec<f64>,
    pub force: Option<ForcePath>,
    pub scheme: Scheme,
    pub seed: u64,
    pub path: u64,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> &[f64] {
        let d = 2 * self.dof;
        &self.states[k * d..(k + 1) * d]
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.state(k)[..self.dof]
    }

    pub fn momentum(&self, k: usize) -> &[f64] {
        &self.state(k)[self.dof..]
    }

    pub fn output(&self, k: usize) -> &[f64] {
        &self.outputs[k * self.channels..(k + 1) * self.channels]
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn force_path(&self) -> Result<&ForcePath> {
        self.force.as_ref().ok_or(Error::MissingForceRecord)
    }
}

/// Initial condition of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Fixed(Vec<f64>),
    /// `Normal(mean, covariance)`; a singular covariance is allowed.
    Gaussian { mean: Vec<f64>, covariance: SymMatrix },
}

impl InitialState {
    pub fn dim(&self) -> usize {
        match self {
            Self::Fixed(x) => x.len(),
            Self::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Prepares a sampler; the covariance is factored once.
    pub fn sampler(&self) -> InitialSampler {
        match self {
            Self::Fixed(x) => InitialSampler {
                mean: x.clone(),
                factor: None,
            },
            Self::Gaussian { mean, covariance } => InitialSampler {
                mean: mean.clone(),
                factor: Some(cholesky_psd(covariance, STEP_COVARIANCE_FLOOR)),
            },
        }
    }

    /// `E|x₀|²`.
    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Fixed(x) => x.iter().map(|v| v * v).sum(),
            Self::Gaussian { mean, covariance } => {
                covariance.trace() + mean.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }
}

pub struct InitialSampler {
    mean: Vec<f64>,
    factor: Option<Matrix>,
}

impl InitialSampler {
    pub fn sample(&self, seed: u64, path: u64) -> Vec<f64> {
        let Some(l) = &self.factor else {
            return self.mean.clone();
        };
        let d = self.mean.len();
        let mut z = vec![0.0; d];
        PathStream::new(seed, Lane::Initial, path, d).normals_at(0, &mut z);
        let lz = l.mul_vec(&z);
        self.mean.iter().zip(&lz).map(|(m, e)| m + e).collect()
    }
}

enum Stepper {
    Euler,
    Exact(Vec<ExactStep>),
}

/// A prepared simulation of one system on one grid.
pub struct Simulator<'a, S: HamiltonianModel + ?Sized> {
    sys: &'a S,
    force: &'a ForceModel,
    grid: TimeGrid,
    scheme: Scheme,
    stepper: Stepper,
}

impl<'a, S: HamiltonianModel + ?Sized> Simulator<'a, S> {
    pub fn new(sys: &'a S, force: &'a ForceModel, grid: TimeGrid, scheme: Scheme) -> Result<Self> {
        if force.channels() != sys.channels() {
            return Err(Error::DimensionMismatch {
                context: "force channels",
                expected: sys.channels(),
                found: force.channels(),
            });
        }
        let stepper = match scheme {
            Scheme::EulerMaruyama => Stepper::Euler,
            Scheme::ExactLinear => {
                let lin = sys
                    .as_linear()
                    .ok_or(Error::SchemeMismatch("exact_linear needs an LSH system"))?;
                if !force.is_standard_wiener() {
                    return Err(Error::SchemeMismatch(
                        "exact_linear needs standard Wiener forcing",
                    ));
                }
                let steps = match grid.uniform_step() {
                    Some(dt) => vec![ExactStep::new(lin, dt)?],
                    None => (0..grid.steps())
                        .map(|k| ExactStep::new(lin, grid.dt(k)))
                        .collect::<Result<_>>()?,
                };
                Stepper::Exact(steps)
            }
        };
        Ok(Self {
            sys,
            force,
            grid,
            scheme,
            stepper,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn run(&self, x0: &[f64], seed: u64, path: u64) -> Result<Trajectory> {
        let n = self.sys.dof();
        let m = self.sys.channels();
        let d = 2 * n;
        if x0.len() != d {
            return Err(Error::DimensionMismatch {
                context: "initial state",
                expected: d,
                found: x0.len(),
            });
        }
        let steps = self.grid.steps();
        let mut states = Vec::with_capacity((steps + 1) * d);
        let mut outputs = Vec::with_capacity((steps + 1) * m);
        states.extend_from_slice(x0);
        outputs.extend(self.sys.output(&x0[..n]));
        let force = match &self.stepper {
            Stepper::Euler => self.run_euler(&mut states, &mut outputs, seed, path)?,
            Stepper::Exact(table) => self.run_exact(table, &mut states, &mut outputs, seed, path),
        };
        Ok(Trajectory {
            grid: self.grid.clone(),
            dof: n,
            channels: m,
            states,
            outputs,
            force: Some(force),
            scheme: self.scheme,
            seed,
            path,
        })
    }

    fn run_euler(
        &self,
        states: &mut Vec<f64>,
        outputs: &mut Vec<f64>,
        seed: u64,
        path: u64,
    ) -> Result<ForcePath> {
        let n = self.sys.dof();
        let d = 2 * n;
        let steps = self.grid.steps();
        let mut sampler = ForceSampler::new(self.force, seed, path, steps);
        let mut x = states[..d].to_vec();
        for k in 0..steps {
            let t = self.grid.time(k);
            let dt = self.grid.dt(k);
            let drift = self.sys.drift(&x).map_err(|e| match e {
                Error::NotPositiveDefinite { .. } => Error::MassNotPositiveDefinite { step: k },
                other => other,
            })?;
            let g = self.sys.dispersion(&x[..n]);
            let dw = sampler.step(k, t, dt, &x);
            let gdw = g.mul_vec(dw);
            for i in 0..d {
                x[i] += drift[i] * dt;
            }
            for i in 0..n {
                x[n + i] += gdw[i];
            }
            states.extend_from_slice(&x);
            outputs.extend(self.sys.output(&x[..n]));
        }
        Ok(sampler.path)
    }

    fn run_exact(
        &self,
        table: &[ExactStep],
        states: &mut Vec<f64>,
        outputs: &mut Vec<f64>,
        seed: u64,
        path: u64,
    ) -> ForcePath {
        let n = self.sys.dof();
        let m = self.sys.channels();
        let d = 2 * n;
        let steps = self.grid.steps();
        let mut stream = PathStream::new(seed, Lane::Transition, path, d + m);
        let mut z = vec![0.0; d + m];
        let mut joint = vec![0.0; d + m];
        let mut record = ForcePath::with_capacity(m, steps);
        let mut x = states[..d].to_vec();
        for k in 0..steps {
            let st = if table.len() == 1 { &table[0] } else { &table[k] };
            stream.normals_at(k as u64, &mut z);
            st.draw(&z, &mut joint);
            let mut next = st.transition.mul_vec(&x);
            for i in 0..d {
                next[i] += joint[i];
            }
            x = next;
            record.push_standard(st.dt, &joint[d..]);
            states.extend_from_slice(&x);
            outputs.extend(self.sys.output(&x[..n]));
        }
        record
    }
}

/// Convenience wrapper for a single path.
pub fn simulate<S: HamiltonianModel + ?Sized>(
    sys: &S,
    force: &ForceModel,
    x0: &[f64],
    grid: &TimeGrid,
    seed: u64,
    scheme: Scheme,
) -> Result<Trajectory> {
    Simulator::new(sys, force, grid.clone(), scheme)?.run(x0, seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::invariant_covariance;
    use crate::sim::hamiltonian::tests::variable_mass;
    use crate::sim::{energy_balance_residual, NonlinearHamiltonianSystem};
    use crate::stats::median;
    use alloc::boxed::Box;

    fn unit() -> LshSystem {
        LshSystem::scalar(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn closed_oscillator() -> LshSystem {
        LshSystem::scalar(1.0, 1.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn step_covariance_matches_gramian_increment() {
        let sys = LshSystem::new(
            SymMatrix::from_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap(),
            SymMatrix::from_rows(&[[1.5, 0.2], [0.2, 0.8]]).unwrap(),
            SymMatrix::diag(&[0.4, 0.9]),
            Matrix::from_rows(&[[1.0, -1.0]]),
        )
        .unwrap();
        let pi = invariant_covariance(&sys).unwrap().covariance;
        for dt in [1e-3, 0.05, 0.5] {
            let st = ExactStep::new(&sys, dt).unwrap();
            let phi = &st.transition;
            let oracle = &*pi - &(&(phi * pi.as_matrix()) * &phi.transpose());
            let gap = (&*st.state_covariance() - &oracle).max_abs();
            assert!(gap <= 1e-8 * (1.0 + oracle.max_abs()), "dt = {dt}: gap {gap}");
        }
    }

    #[test]
    fn noiseless_exact_flow_matches_exponential() {
        let sys = LshSystem::scalar(4.0, 1.0, 2.0, 0.0).unwrap();
        let grid = TimeGrid::uniform(3.0, 0.01).unwrap();
        let force = ForceModel::standard_wiener(1);
        let traj = simulate(&sys, &force, &[1.0, -0.5], &grid, 1, Scheme::ExactLinear).unwrap();
        let a = realize(&sys).a;
        for k in [0, 1, 150, 300] {
            let exact = expm(&a.scale(grid.time(k))).unwrap().mul_vec(&[1.0, -0.5]);
            for (u, v) in traj.state(k).iter().zip(&exact) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn runs_are_reproducible_and_outputs_linear() {
        let sys = unit();
        let force = ForceModel::standard_wiener(1);
        let grid = TimeGrid::uniform(1.0, 0.01).unwrap();
        for scheme in [Scheme::EulerMaruyama, Scheme::ExactLinear] {
            let sim = Simulator::new(&sys, &force, grid.clone(), scheme).unwrap();
            let a = sim.run(&[0.1, 0.2], 9, 4).unwrap();
            let b = sim.run(&[0.1, 0.2], 9, 4).unwrap();
            assert_eq!(a, b);
            for k in 0..a.len() {
                assert_eq!(a.output(k)[0], a.position(k)[0]);
            }
        }
    }

    #[test]
    fn exact_scheme_rejects_other_systems_and_forces() {
        let force = ForceModel::standard_wiener(1);
        let grid = TimeGrid::uniform(1.0, 0.01).unwrap();
        let nl = variable_mass(1.0, 0.5);
        assert!(matches!(
            Simulator::new(&nl, &force, grid.clone(), Scheme::ExactLinear),
            Err(Error::SchemeMismatch(_))
        ));
        let drifted = ForceModel::custom(
            1,
            crate::force::Drift::Constant(vec![1.0]),
            crate::force::Diffusion::Identity,
        );
        assert!(matches!(
            Simulator::new(&unit(), &drifted, grid, Scheme::ExactLinear),
            Err(Error::SchemeMismatch(_))
        ));
    }

    #[test]
    fn mass_failure_reports_step() {
        let mut nl = variable_mass(0.0, 0.0);
        nl.mass = Box::new(|q| SymMatrix::scalar(1.0 - q[0]));
        let force = ForceModel::custom(
            1,
            crate::force::Drift::Zero,
            crate::force::Diffusion::Constant(Matrix::zeros(1, 1)),
        );
        let grid = TimeGrid::uniform(1.0, 0.1).unwrap();
        // q grows by p/M·dt with p = 1: q_k = Σ 0.1/(1 − q_j) crosses 1 at some step.
        let err = simulate(&nl, &force, &[0.5, 1.0], &grid, 0, Scheme::EulerMaruyama).unwrap_err();
        assert!(matches!(err, Error::MassNotPositiveDefinite { step } if step > 0));
    }

    fn max_energy_drift(dt: f64) -> f64 {
        let sys = closed_oscillator();
        let force = ForceModel::standard_wiener(1);
        let grid = TimeGrid::uniform(10.0, dt).unwrap();
        let traj = simulate(&sys, &force, &[1.0, 0.0], &grid, 0, Scheme::EulerMaruyama).unwrap();
        let h0 = sys.hamiltonian(traj.state(0));
        (0..traj.len())
            .map(|k| (sys.hamiltonian(traj.state(k)) - h0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn closed_system_energy_drift_is_first_order() {
        let coarse = max_energy_drift(2e-4);
        let fine = max_energy_drift(1e-4);
        assert!(fine <= 1e-3, "drift {fine}");
        let ratio = coarse / fine;
        assert!((1.5..=2.7).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn closed_system_residual_is_conservation_defect() {
        let sys = closed_oscillator();
        let force = ForceModel::standard_wiener(1);
        let grid = TimeGrid::uniform(1.0, 1e-3).unwrap();
        let traj = simulate(&sys, &force, &[1.0, 0.0], &grid, 0, Scheme::EulerMaruyama).unwrap();
        let audit = energy_balance_residual(&traj, &sys).unwrap();
        assert_eq!(audit.residual, audit.energy_change);
    }

    fn median_residual(dt: f64) -> f64 {
        let sys = unit();
        let force = ForceModel::standard_wiener(1);
        let sim = Simulator::new(&sys, &force, TimeGrid::uniform(1.0, dt).unwrap(), Scheme::EulerMaruyama)
            .unwrap();
        let r: Vec<f64> = (0..100)
            .map(|p| {
                let traj = sim.run(&[0.5, -0.5], 2024, p).unwrap();
                let audit = energy_balance_residual(&traj, &sys).unwrap();
                assert!((audit.work - audit.work_via_output).abs() <= 1e-9);
                audit.residual.abs()
            })
            .collect();
        median(&r)
    }

    #[test]
    fn energy_residual_refines_at_first_order() {
        let ratio = median_residual(1e-3) / median_residual(5e-4);
        assert!((1.5..=2.7).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn deterministic_work_energy_defect_vanishes() {
        let sys = variable_mass(2.0, 0.3);
        let run = |dt: f64| {
            let force = ForceModel::custom(
                1,
                crate::force::Drift::Constant(vec![0.5]),
                crate::force::Diffusion::Constant(Matrix::zeros(1, 1)),
            );
            let grid = TimeGrid::uniform(2.0, dt).unwrap();
            let traj = simulate(&sys, &force, &[0.3, 0.2], &grid, 0, Scheme::EulerMaruyama).unwrap();
            energy_balance_residual(&traj, &sys).unwrap().residual.abs()
        };
        let (a, b) = (run(1e-3), run(5e-4));
        assert!(b < a && b < 1e-2, "{a} {b}");
    }

    #[test]
    fn nonlinear_sine_coupling_work_matches_output_form() {
        let sys: NonlinearHamiltonianSystem = variable_mass(1.0, 0.2);
        let force = ForceModel::standard_wiener(1);
        let grid = TimeGrid::uniform(1.0, 1e-4).unwrap();
        let traj = simulate(&sys, &force, &[0.2, 0.1], &grid, 3, Scheme::EulerMaruyama).unwrap();
        let audit = energy_balance_residual(&traj, &sys).unwrap();
        assert!((audit.work - audit.work_via_output).abs() < 1e-2);
    }
}
