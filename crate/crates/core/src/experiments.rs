//! Type-I error of "test the best model" versus the model-selection test when
//! every candidate is uninformative.
//!
//! Each repeat draws outcomes and predictors iid N(0, 1), fits the candidate
//! regressions, picks the best by AICc, and records whether (a) the best
//! model's single-model permutation p-value and (b) the model-selection
//! permutation p-value fall below `alpha`. Both tests use the same
//! derangements within a repeat.

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::permute::{run_permutations, PermutationSet};
use crate::rng;
use crate::scoring::{Criterion, PreparedModel, StatisticKind};
use crate::stats::DesignMatrix;

const DATA_DOMAIN: u64 = 0x6461_7461;
const PERM_DOMAIN: u64 = 0x7065_726d;

/// Default inner permutation count.
pub const DEFAULT_PERMUTATIONS: usize = 512;

/// Default grid of candidate-set sizes.
pub const DEFAULT_GRID: [usize; 6] = [1, 2, 3, 7, 15, 31];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelCase {
    /// `n_models` single-predictor regressions on distinct predictors.
    Independent { n_models: usize },
    /// `n_models` distinct non-empty subsets of `k` shared predictors.
    Dependent { k: usize, n_models: usize },
}

impl ModelCase {
    pub fn n_models(&self) -> usize {
        match *self {
            ModelCase::Independent { n_models } | ModelCase::Dependent { n_models, .. } => n_models,
        }
    }

    fn n_predictors(&self) -> usize {
        match *self {
            ModelCase::Independent { n_models } => n_models,
            ModelCase::Dependent { k, .. } => k,
        }
    }

    fn max_predictors_per_model(&self) -> usize {
        match *self {
            ModelCase::Independent { .. } => 1,
            ModelCase::Dependent { k, .. } => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Experiment1Config {
    pub n_outcomes: usize,
    pub repeats: usize,
    pub alpha: f64,
    pub permutations: usize,
    pub case: ModelCase,
    pub seed: u64,
    /// Selection statistic; AICc unless overridden.
    pub statistic: StatisticKind,
}

impl Default for Experiment1Config {
    fn default() -> Self {
        Self {
            n_outcomes: 20,
            repeats: 256,
            alpha: 0.05,
            permutations: DEFAULT_PERMUTATIONS,
            case: ModelCase::Independent { n_models: 1 },
            seed: 0,
            statistic: StatisticKind::Aicc,
        }
    }
}

impl Experiment1Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigError(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} must lie in (0, 1)", self.alpha));
        }
        if self.repeats == 0 || self.permutations == 0 {
            return bad("repeats and permutations must be at least 1".into());
        }
        let m = self.case.n_models();
        if m == 0 {
            return bad("need at least one candidate model".into());
        }
        if let ModelCase::Dependent { k, n_models } = self.case {
            if k == 0 || k > 30 {
                return bad(format!("k = {k} must lie in 1..=30"));
            }
            if n_models > (1usize << k) - 1 {
                return bad(format!(
                    "{n_models} models requested but only {} predictor combinations exist for k = {k}",
                    (1usize << k) - 1
                ));
            }
        }
        // AICc of the largest model needs n - K - 1 >= 1 with K = predictors + 2.
        let needed = self.case.max_predictors_per_model() + 4;
        if self.n_outcomes < needed {
            return bad(format!(
                "{} outcomes is too few; the largest model needs at least {needed}",
                self.n_outcomes
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Experiment1Result {
    pub case: ModelCase,
    pub repeats: usize,
    pub naive_rejections: usize,
    pub selection_rejections: usize,
    pub naive_reject_rate: f64,
    pub selection_test_reject_rate: f64,
    pub binomial_band: (f64, f64),
}

/// Central 95% normal-approximation interval for a Binomial(R, alpha)
/// proportion, clipped to [0, 1].
pub fn binomial_band(repeats: usize, alpha: f64) -> (f64, f64) {
    let half = 1.96 * (alpha * (1.0 - alpha) / repeats as f64).sqrt();
    ((alpha - half).max(0.0), (alpha + half).min(1.0))
}

/// Candidate predictor sets, as column indices into the predictor matrix.
fn candidate_sets<R: rand::Rng>(case: &ModelCase, rng: &mut R) -> Vec<Vec<usize>> {
    match *case {
        ModelCase::Independent { n_models } => (0..n_models).map(|i| vec![i]).collect(),
        ModelCase::Dependent { k, n_models } => index::sample(rng, (1usize << k) - 1, n_models)
            .into_iter()
            .map(|s| {
                let mask = s + 1;
                (0..k).filter(|b| mask & (1 << b) != 0).collect()
            })
            .collect(),
    }
}

/// (naive rejection, selection rejection) for one repeat.
fn run_repeat(config: &Experiment1Config, repeat: usize) -> Result<(bool, bool)> {
    let n = config.n_outcomes;
    let mut rng = rng::substream(rng::derive_seed(config.seed, DATA_DOMAIN, repeat as u64), 0);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let y: Vec<f64> = (0..n).map(|_| normal()).collect();
    let predictors: Vec<Vec<f64>> = (0..config.case.n_predictors())
        .map(|_| (0..n).map(|_| normal()).collect())
        .collect();
    let sets = candidate_sets(&config.case, &mut rng);

    let models = sets
        .iter()
        .map(|set| {
            let mut columns = vec![vec![1.0; n]];
            columns.extend(set.iter().map(|&c| predictors[c].clone()));
            PreparedModel::new(&DesignMatrix::from_columns(&columns)?, None)
        })
        .collect::<Result<Vec<_>>>()?;

    let perms = PermutationSet::random(
        config.permutations,
        rng::derive_seed(config.seed, PERM_DOMAIN, repeat as u64),
    );
    let run = run_permutations(&models, &y, &Criterion::new(config.statistic), &perms)?;
    let naive = run.single(run.best_model(), false).p_value < config.alpha;
    let selection = run.selection(false).p_value < config.alpha;
    Ok((naive, selection))
}

pub fn run_experiment1(config: &Experiment1Config) -> Result<Experiment1Result> {
    config.validate()?;
    let outcomes = (0..config.repeats)
        .into_par_iter()
        .map(|r| run_repeat(config, r))
        .collect::<Result<Vec<_>>>()?;
    let naive_rejections = outcomes.iter().filter(|o| o.0).count();
    let selection_rejections = outcomes.iter().filter(|o| o.1).count();
    let r = config.repeats as f64;
    Ok(Experiment1Result {
        case: config.case,
        repeats: config.repeats,
        naive_rejections,
        selection_rejections,
        naive_reject_rate: naive_rejections as f64 / r,
        selection_test_reject_rate: selection_rejections as f64 / r,
        binomial_band: binomial_band(config.repeats, config.alpha),
    })
}

/// Runs the experiment for each case in `cases`, sharing every other setting.
pub fn run_grid(base: &Experiment1Config, cases: &[ModelCase]) -> Result<Vec<Experiment1Result>> {
    cases
        .iter()
        .map(|&case| {
            run_experiment1(&Experiment1Config {
                case,
                ..base.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_examples() {
        let (lo, hi) = binomial_band(256, 0.05);
        assert!((lo - 0.0233).abs() < 5e-5 && (hi - 0.0767).abs() < 5e-5);
        assert_eq!(binomial_band(10, 0.0), (0.0, 0.0));
        let w = |r| {
            let (a, b) = binomial_band(r, 0.05);
            b - a
        };
        assert!((w(100) / w(400) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dependent_case_needs_enough_combinations() {
        let cfg = Experiment1Config {
            case: ModelCase::Dependent { k: 2, n_models: 4 },
            ..Default::default()
        };
        assert!(matches!(run_experiment1(&cfg), Err(Error::ConfigError(_))));
        let ok = Experiment1Config {
            case: ModelCase::Dependent { k: 2, n_models: 3 },
            ..cfg
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn dependent_subsets_are_distinct_and_non_empty() {
        let mut rng = rng::substream(1, 0);
        let sets = candidate_sets(&ModelCase::Dependent { k: 4, n_models: 15 }, &mut rng);
        assert_eq!(sets.len(), 15);
        let mut sorted = sets.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 15);
        assert!(sets.iter().all(|s| !s.is_empty() && s.iter().all(|&c| c < 4)));
    }

    #[test]
    fn one_model_tests_coincide() {
        let cfg = Experiment1Config {
            repeats: 40,
            permutations: 64,
            seed: 3,
            ..Default::default()
        };
        let r = run_experiment1(&cfg).unwrap();
        assert_eq!(r.naive_rejections, r.selection_rejections);
        assert_eq!(run_experiment1(&cfg).unwrap(), r);
    }

    #[test]
    fn rejects_bad_alpha() {
        let cfg = Experiment1Config {
            alpha: 1.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::ConfigError(_))));
    }
}
