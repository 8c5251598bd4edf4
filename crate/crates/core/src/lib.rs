//! Plug-in estimation of contingency-table measures with Dirichlet-smoothed
//! cell probabilities.
//!
//! A table of counts is smoothed to the posterior mean under a symmetric
//! Dirichlet prior, `(n_ij + alpha) / (n + rc * alpha)`, and a measure is
//! evaluated at the smoothed table. The smoothing parameter can be fixed, taken
//! from the cell-probability risk criterion, or chosen to minimise the leading
//! `n^-2` term of the measure estimator's mean squared error.
//!
//! Two measures are provided: the generalised Cramér coefficient `V` built on
//! the power divergence, and the power-divergence symmetry measure `Phi` for
//! square tables.

pub mod calculus;
pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod measures;
pub mod montecarlo;
pub mod posterior;
pub mod rng;
pub mod sum;
pub mod tables;

pub use calculus::{
    derivatives, mse_coefficients, optimal_alpha, DerivativeBundle, MseCoefficients,
};
pub use error::{Error, Result};
pub use estimators::{
    estimate, fienberg_holland_alpha, AlphaRule, EstimateResult, EstimatorConfig,
};
pub use measures::{
    cramer_v, measure_value, power_divergence, symmetry_phi, MeasureKind, MeasureSpec, MeasureValue,
};
pub use posterior::{credible_interval, sample_dirichlet, CredibleInterval};
pub use tables::{posterior_mean, sample_proportions, CountTable, Dims, ProbTable};
