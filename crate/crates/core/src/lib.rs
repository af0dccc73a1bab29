//! Median-of-means tournament estimators for sparse linear regression.
//!
//! A finite pool of candidate coefficient vectors plays a tournament on three
//! independent folds of the data; the winner enjoys sparsity-adaptive error
//! rates under heavy-tailed noise and designs with only a few moments.

pub mod datagen;
pub mod error;
pub mod experiment;
pub mod meanwidth;
pub mod mom;
pub mod norms;
pub mod params;
pub mod solvers;
pub mod tournament;

pub use error::{Error, Result};
pub use mom::{lower_median, median_of_block_means, partition_blocks, strict_majority, BlockPartition};
pub use norms::{best_sparse_residual, delta_condition, hierarchy_membership, norm_eval, RegNorm, SparsityHierarchy};
pub use params::{all_level_params, lasso_level_params, slope_level_params, LevelParams, Penalty, ProcedureConstants};
pub use tournament::{
    adaptive_radius_run, run_tournament, AdaptiveOutcome, Candidate, Fold, OracleMode, PhaseReport, ThreeFoldData,
    TournamentConfig, TournamentOutcome,
};
pub use solvers::{build_pool, lasso_cd, least_squares, slope_pg, sorted_l1_prox, SolverConfig};
pub use experiment::{compare_methods, run_experiment, ExperimentConfig};
