//! Partially heterogeneous linear regression y = Xᵀβ + Zᵀθᵢ + ε.
//!
//! β and subgroup averages of θ come from closed-form moment estimators; the
//! latent groups of θᵢ are recovered by MCP-penalized convex clustering of the
//! residual targets Zᵢ(yᵢ − Xᵢᵀβ̂), solved with ADMM.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod model;
pub mod partition;
pub mod penalty;
pub mod realdata;
pub mod simulation;
pub mod tuning;

pub use admm::{
    init_state, run_admm, run_admm_from, update_alpha, update_v_kappa, AdmmState, StoppingRule,
    Trace,
};
pub use dataset::{
    moments, standardize_columns, validate_parts, ColumnRef, ColumnSelector, Dataset, IndexSubset,
    MomentSet, ScalingRecord, ValidationReport,
};
pub use error::{Error, Result};
pub use estimators::{
    fit_beta, residual_targets, subgroup_theta, theta_from_alpha, BetaEstimate, ResidualTargets,
    SubgroupThetaEstimate,
};
pub use io::{read_csv_dataset, write_csv_dataset, CsvSchema};
pub use model::{fit_heterogeneous_model, fit_heterogeneous_model_traced, rss, GroupModel};
pub use partition::{extract_partition, FusionResult};
pub use penalty::{fusion_update, mcp_value, soft_threshold, PenaltyConfig};
pub use realdata::{model_scan, transform_response, ScanReport};
pub use simulation::{
    generate, run_monte_carlo, run_ols_baseline, PipelineConfig, SimDesign, SimSummary,
};
pub use tuning::{
    fit_tuned, lambda_path, LambdaPath, PathStart, ScoreKind, ScoreTheta, TuningConfig,
};
