//! Hamiltonian inclusions with convex dissipation.
//!
//! The crate integrates `ż − XH(t, z) ∈ ∂^ω φ(ż)` (a hamiltonian flow pushed
//! off its level sets by a convex dissipation potential `φ`), samples its
//! finite-temperature relaxation, and checks the Liouville-type inequality
//! relating the change of a curve of Gibbs measures to the dissipation cost
//! of the flow.

pub mod convex;
pub mod error;
pub mod io;
pub mod liouville;
pub mod model;
pub mod solver;
pub mod stochastic;
pub mod symplectic;

pub use convex::{
    grid_symplectic_conjugate, hypothesis_d_check, sben_gap, symplectic_conjugate, symplectic_fenchel_residual, symplectic_subdifferential_check,
    ConvexPotential, Dissipation, ExtReal, VelocityPotential,
};
pub use error::{Error, Result};
pub use model::{CataloguedHamiltonian, Forcing, Hamiltonian, InitialCondition, PotentialEnergy, Scenario, ScenarioConfig};
pub use solver::{action_functional, integrate, solve_step, Scheme, SolverOptions, Trajectory};
pub use symplectic::{double_pairing, j, j_star, omega, pairing, symplectic_gradient, CotangentPoint, PhaseBox, PhasePoint};
pub use liouville::{
    dissipation_cost, gibbs_measure, theorem_check, work_pump_check, CostReport, FlowField, FlowKind, GibbsSpec,
    WorkPumpReport,
};
pub use stochastic::{integrate_stochastic, trajectory_rng, SamplerBackend, StochasticTrajectory};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
