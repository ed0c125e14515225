//! Causal discovery for stationary multivariate time series.
//!
//! Fit a VAR, turn its limit forecast-error variance decomposition into a
//! row-stochastic influence matrix, and read causal structure off the
//! equilibrium of that matrix.

pub mod decomp;
pub mod equilibrium;
pub mod error;
pub mod identification;
pub mod linalg;
pub mod panel;
pub mod rng;
pub mod simgen;
pub mod var;

pub use decomp::{fevd, limit_fevd, limit_fevd_svar, ma_coefficients, CholeskyFactor, Horizon, InfluenceMatrix};
pub use equilibrium::{
    absorption, local_distribution, periodicity_probe, pi_sensitivity, solve_pi, solve_pi_quota, transient_block,
    CausalStructure, CausalityDistribution, SolveOptions,
};
pub use error::{Error, Result};
pub use panel::{load_panel, write_panel, CsvOptions, LagSpec, TimeIndex, TimeSeriesPanel};
pub use var::{check_stationary, companion, fit_var, CompanionForm, RestrictionPattern, VarModel};

/// Version stamped on every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
