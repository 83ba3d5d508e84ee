//! Permutation tests for model selection.
//!
//! Information criteria and cross-validated scores rank candidate models but
//! say nothing about whether the winner is better than chance. This crate
//! provides single-model and model-selection permutation tests that answer
//! that, plus the pieces they need: least-squares Gaussian fitting, AIC/AICc,
//! leave-one-out ignorance scoring, stochastic Ricker/Gompertz population
//! models, and a simulation of type-I error inflation.

pub mod error;
pub mod experiments;
pub mod permute;
pub mod popmodel;
pub mod rng;
pub mod scoring;
pub mod stats;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
pub use permute::{
    random_derangement, run_permutations, selection_perm_test, single_model_perm_test,
    westfall_young_adjusted, Derangement, PermTestResult, PermutationRun, PermutationSet,
};
pub use popmodel::{
    build_design, kde_density, monte_carlo_forecast, relative_change, Candidate, Family,
    ModelData, ModelSpec, PopulationForecast, TimeSeriesDataset,
};
pub use scoring::{
    aic, aicc, build_score_table, ignorance, loo_cv_mean_ignorance, AiccConvention, Criterion,
    PreparedModel, ScoreTableRow, SelectionStatistic, StatisticKind,
};
pub use stats::{cooks_distance, fit_linear_gaussian, DesignMatrix, FittedModel, LeastSquares};
