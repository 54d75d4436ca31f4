//! Joint extremes of stationary and trended random fields on
//! two-dimensional grids with randomly missing observations.
//!
//! The crate samples Gaussian, chi and order-statistic fields, applies
//! Bernoulli observation masks with a random rate λ, and compares the
//! complete and observed maxima against calibrated levels. Alongside the
//! Monte Carlo estimators it evaluates the analytic side: marginal tails,
//! level calibration, the limit E[exp(−λκ − (1−λ)τ)], the exact answer for
//! independent fields, and bounds for the dependence conditions.

pub mod config;
pub mod covgrid;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod fieldgen;
pub mod levels;
pub mod missing;
pub mod numeric;
pub mod rng;
pub mod runner;

pub use config::{parse_config, ExperimentConfig, ExperimentKind, Targets};
pub use covgrid::{CovarianceModel, GridShape};
pub use error::{Error, Result};
pub use estimators::{
    asclt_estimate, exact_iid_joint, joint_event, mc_joint_probability, prefix_max, weight_normalizer, AscltPlan,
    AscltSetup, EstimateReport, JointSetup, LevelRule,
};
pub use fieldgen::{FieldGenerator, FieldKind, FieldSample, GaussianSampler, Trend, TrendSpec};
pub use levels::{calibrate_level, gumbel_joint_limit, limit_value, LevelPlan, TailFunction};
pub use missing::{LambdaModel, MissingMask, Observed};
pub use rng::derive_stream;
pub use runner::run_experiment;
