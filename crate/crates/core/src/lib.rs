//! Training fixed-topology feedforward networks with Differential Evolution,
//! with and without breaking the point and permutation symmetries of the
//! hidden layers.
//!
//! - [`ann`]: network evaluation, least-squares output layer, penalized cost.
//! - [`symmetry`]: symmetry operators and the distance-reducing heuristic.
//! - [`de`]: the optimizer.
//! - [`datasets`]: benchmark data.
//! - [`experiments`]: multi-run statistics and report files.
//! - [`cli`]: the `desb` command line front end.

pub mod ann;
pub mod cli;
pub mod datasets;
pub mod de;
pub mod error;
pub mod experiments;
pub mod symmetry;

pub use ann::{
    euclidean_norm, forward_hidden, mse_cost, network_output, parse_topology, penalized_cost,
    solve_output_weights, CostModel, CostValue, OutputWeights, ParamVector, PenaltyMode, Topology,
};
pub use error::{Error, Result};
