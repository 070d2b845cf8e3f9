//! Pathwise energy balance
//! `dH = (−‖q̇‖²_F + ½⟨GᵀM⁻¹G, Σ⟩) dt + q̇ᵀG dW`.

use crate::error::Result;
use crate::force::ForcePath;

use super::hamiltonian::HamiltonianModel;
use super::integrate::Trajectory;

/// Discrete energy-balance defect of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAudit {
    /// Defect with the Itô correction taken from the realized increments,
    /// `½ (βΔω)ᵀ GᵀM⁻¹G (βΔω)`.
    pub residual: f64,
    /// Defect with the Itô correction in expectation, `½⟨GᵀM⁻¹G, Σ⟩Δt`.
    pub residual_expected_correction: f64,
    /// `H(x_K) − H(x_0)`.
    pub energy_change: f64,
    /// `Σ q̇_kᵀ G_k ΔW_k`.
    pub work: f64,
    /// `Σ ẏ_kᵀ ΔW_k` with `ẏ_k` the forward difference of the output.
    pub work_via_output: f64,
    /// Largest step on the grid.
    pub dt: f64,
}

pub fn energy_balance_residual<S: HamiltonianModel + ?Sized>(
    traj: &Trajectory,
    sys: &S,
) -> Result<EnergyAudit> {
    let force: &ForcePath = traj.force_path()?;
    let n = traj.dof;
    let m = traj.channels;
    let steps = traj.grid.steps();
    let mut dissipation = 0.0;
    let mut ito_realized = 0.0;
    let mut ito_expected = 0.0;
    let mut work = 0.0;
    let mut work_via_output = 0.0;
    let mut dt_max = 0.0f64;
    for k in 0..steps {
        let dt = traj.grid.dt(k);
        dt_max = dt_max.max(dt);
        let x = traj.state(k);
        let (q, p) = x.split_at(n);
        let minv = sys.inverse_mass(q)?;
        let v = minv.mul_vec(p);
        dissipation -= sys.damping(q).quad_form(&v) * dt;
        let g = sys.dispersion(q);
        let gmg = &(&g.transpose() * minv.as_matrix()) * &g;
        ito_realized += 0.5 * gmg.bilinear(force.diffusion_increment(k), force.diffusion_increment(k));
        ito_expected += 0.5 * gmg.inner(&force.sigma_at(k)) * dt;
        let dw = force.increment(k);
        let gv = g.transpose().mul_vec(&v);
        work += gv.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>();
        let (y0, y1) = (traj.output(k), traj.output(k + 1));
        work_via_output += (0..m).map(|i| (y1[i] - y0[i]) / dt * dw[i]).sum::<f64>();
    }
    let energy_change = sys.hamiltonian(traj.state(steps))? - sys.hamiltonian(traj.state(0))?;
    Ok(EnergyAudit {
        residual: energy_change - (dissipation + ito_realized + work),
        residual_expected_correction: energy_change - (dissipation + ito_expected + work),
        energy_change,
        work,
        work_via_output,
        dt: dt_max,
    })
}
