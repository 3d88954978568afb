//! Drivers for the convergence study, the stochastic rigid body and the
//! correlation flow.

pub mod convergence;
pub mod correlation;
pub mod density;
pub mod rigid_body;

pub use convergence::{
    convergence_study, convergence_study_many, fit_slope, ConvergenceReport, ConvergenceSetup, Reference,
};
pub use correlation::{
    correlation_flow, correlation_flow_matrices, load_prices_csv, rolling_correlation, synthetic_gbm_pair,
    CorrelationFlowConfig, GbmPairConfig, PriceSeries,
};
pub use density::{calibrate, kde, kde_reflected, CalibrationResult, DensityEstimate};
pub use rigid_body::{rigid_body_run, RigidBodyConfig, RigidBodyRun};
