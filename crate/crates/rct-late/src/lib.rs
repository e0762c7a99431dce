//! Design-based estimation of local average treatment effects (LATE) for
//! randomized controlled trials with treatment noncompliance.
//!
//! Potential outcomes are treated as fixed; all randomness comes from the
//! treatment assignment. The library covers simple, blocked, and clustered
//! designs with optional covariate adjustment, residual-based and classical
//! IV variance estimation, exact small-population randomization oracles, and
//! a seeded finite-population Monte Carlo harness.
//!
//! ## Modules
//!
//! - [`estimator`] - simple-design ITT fits, the LATE ratio, variance
//!   estimators, inference, weak-instrument diagnostics
//! - [`blocked`] - per-block estimation with a shared covariate model and
//!   complier-weighted pooling
//! - [`clustered`] - estimation on weighted cluster aggregates and the
//!   blocked-clustered composition
//! - [`oracle`] - exact finite-population truths and exhaustive
//!   randomization distributions for small populations
//! - [`sim`] - the latent-variable population generator and replication
//!   harness
//! - [`numerics`] - small dense least squares and distribution functions
//! - [`ingest`], [`config`], [`report`], [`cli`] - CSV ingestion, JSON
//!   configuration, report emission, and the command-line surface
//!
//! ## Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --example estimate_simple          # LATE on a tiny trial
//! cargo run --example covariate_adjustment     # precision gain from a covariate
//! cargo run --example blocked_design           # per-block estimates and pooling
//! cargo run --example clustered_design         # cluster-randomized estimation
//! cargo run --example exact_randomization      # exhaustive assignment oracle
//! cargo run --example weak_instrument          # first-stage diagnostics
//! cargo run --release --example simulate_coverage  # small Monte Carlo run
//! ```
//!
//! The `rct-late` binary exposes the same pipelines over CSV files:
//! `rct-late estimate`, `rct-late simulate`, `rct-late diagnose`.

// Dense-matrix code walks parallel arrays by index throughout.
#![allow(clippy::needless_range_loop)]

pub mod blocked;
pub mod cli;
pub mod clustered;
pub mod config;
pub mod data;
pub mod error;
pub mod estimator;
pub mod ingest;
pub mod numerics;
pub mod oracle;
pub mod report;
pub mod sim;

pub use blocked::{analyze_blocked, BlockPolicy, PooledResult, PoolingScheme};
pub use clustered::{
    aggregate, analyze_blocked_clustered, analyze_clustered, ClusterDataset, WeightScheme,
};
pub use data::Dataset;
pub use error::{Error, Result};
pub use estimator::{
    analyze, estimate_late, AnalysisOptions, LateResult, Reference, VarianceMethod, Warning,
};
pub use oracle::{
    enumerate_assignments, true_estimands, true_var_qbar, ExactEstimator, PotentialPopulation,
};
pub use sim::{generate_population, run_monte_carlo, SimulationConfig, SimulationSummary};
