//! Bootstrap analysis of the elastic net by message passing with resampling.
//!
//! The crate provides the AMPR and GAMP solvers, the state-evolution
//! recursion that describes them, hyperparameter search over the predicted
//! variance, and diagnostics for checking the Gaussian decoupling of the
//! estimators.

pub mod ampr;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod gamp;
pub mod hyperopt;
pub mod kernels;
pub mod linalg;
pub mod optim;
pub mod se;
pub mod special;

pub use ampr::{
    bootstrap_statistics, run_ampr, run_ampr_traced, unbiased_estimate, AmprState, Psi, SolverOptions, UnbiasedEstimate,
};
pub use data::{sample_bootstrap_weights, sample_instance, BootstrapWeights, ProblemInstance, SignalPrior};
pub use diagnostics::{decoupling_check, ks_statistic, linear_fit, qq_against_normal, LineFit, Phi, QqTable};
pub use error::{Error, LastState, Result};
pub use experiments::{bootstrap_mean, realization_seed, residual_sample, BootstrapMean};
pub use gamp::{
    gamp_unbiased_estimate, run_gamp, run_gamp_batch, solve_elastic_net_reference, GampState, ReferenceOptions,
    ReferenceSolution, Weights,
};
pub use hyperopt::{
    minimize_variance, phase_label, sweep_phase_diagram, CellOptimum, GammaMode, HyperoptOptions, OptDomain, Optimum,
    PhaseLabel, SweepRecord, LAMBDA_MIN,
};
pub use kernels::{
    denoise, denoise_deriv, poisson_moments, smoothed_moments, BootstrapSize, DenoiserParams, ResamplingMoments,
    SmoothedMoments,
};
pub use optim::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use se::{overlaps, run_se, run_se_traced, se_variance, Expectation, SeInit, SeModel, SeOptions, SeState, SeStep};
