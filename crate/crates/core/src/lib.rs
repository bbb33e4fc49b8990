//! Estimation of direct, spillover and interaction effects of a randomized
//! binary treatment on a network.
//!
//! The crate covers the full pipeline:
//!
//! * [`graph`]: geometric random networks on the unit square and network ingestion,
//! * [`dgp`]: the simulation design with tracked potential outcomes,
//! * [`design`]: design matrices for the T-, R-, TR-models and the causal reduced forms,
//! * [`lsq`]: pivoted-QR least squares with classical and robust covariance,
//! * [`effects`]: mapping coefficients to conditional causal effects,
//! * [`montecarlo`]: bias/SD studies and comparison with published reference values,
//! * [`io`]: CSV/JSON formats shared with the command line tool.

pub mod design;
pub mod dgp;
pub mod effects;
pub mod error;
pub mod graph;
pub mod io;
pub mod lsq;
pub mod montecarlo;
pub mod rng;

pub use design::{build_design, split_by_f, ColumnLabel, DesignMatrix, ModelSpec};
pub use dgp::{
    dgp_scenario, potential_outcome, simulate_frame, true_aggregate_effects, DgpParams, FrameRow,
    PotentialOutcomeGrid, SampleFrame, Scenario, Simulation, TrueEffects,
};
pub use effects::{
    cell_means, complete_effects, recover_effect_table, telescope_level_from_changes, Aggregates,
    EffectEntry, EffectTable,
};
pub use error::{Error, Result};
pub use graph::{
    build_geometric_network, degree_stats, generate_positions, DegreeSummary, Network, PositionSet,
};
pub use lsq::{fit, FitResult, RankPolicy, VcovKind};
pub use montecarlo::{replicate_table, run_replication, run_study, MCConfig, MCReport, TableId};
