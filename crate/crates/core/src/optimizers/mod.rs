//! Online algorithms, projections and the offline oracle.

pub mod gradient;
pub mod objective;
pub mod online;
pub mod oracle;
pub mod projection;

pub use objective::{Objective, Sense};
pub use projection::{project_capped_simplex, project_norm_ball, Constraint};
pub use gradient::{
    composite_gradient, descend, step_composite, step_vanilla, vanilla_gradient, DfoState, GradientEstimate,
    SensitivityMode,
};
pub use online::{run_online, Algorithm, OnlineOutcome, OnlineSettings, Reference, RunRecord, RunRow, W1Diagnostic};
pub use oracle::{oracle_solve, OracleOptions, OracleSolution};
