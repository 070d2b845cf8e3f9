//! Simulation of stochastic Hamiltonian systems and pathwise energy audits.

mod audit;
mod hamiltonian;
mod integrate;

pub use audit::{energy_balance_residual, EnergyAudit};
pub use hamiltonian::{
    poisson_bracket, verify_consistency, HamiltonianModel, MatrixField, NonlinearHamiltonianSystem,
    ScalarField, SymDerivativeField, SymField, VectorField, CONSISTENCY_TOLERANCE,
};
pub use integrate::{
    simulate, ExactStep, InitialSampler, InitialState, Scheme, Simulator, Trajectory,
    STEP_COVARIANCE_FLOOR,
};
