//! Synthetic population datasets shaped like typical field studies.

use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::Result;
use crate::popmodel::{Candidate, Family, ModelSpec, TimeSeriesDataset, DENSITY_TERM};
use crate::rng;

/// Linear effect of one series on the relative change.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    pub covariate: String,
    pub coefficient: f64,
}

/// Parameters of a simulated Ricker population with covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct RickerSimulation {
    pub first_year: i64,
    pub years: usize,
    pub initial_count: f64,
    pub growth: f64,
    /// Coefficient on the raw count.
    pub density: f64,
    pub noise_sd: f64,
    /// Covariates drawn iid N(mean, sd), in order.
    pub covariates: Vec<(String, f64, f64)>,
    /// Effects of standardised covariates.
    pub effects: Vec<Effect>,
    pub seed: u64,
}

impl RickerSimulation {
    pub fn run(&self) -> Result<TimeSeriesDataset> {
        let mut rng = rng::substream(self.seed, 0);
        let covs: Vec<(String, Vec<f64>)> = self
            .covariates
            .iter()
            .map(|(name, mean, sd)| {
                let dist = Normal::new(*mean, *sd).expect("valid normal");
                (name.clone(), (0..self.years).map(|_| dist.sample(&mut rng)).collect())
            })
            .collect();
        let standardised = |name: &str, t: usize| -> f64 {
            let (_, mean, sd) = self.covariates.iter().find(|c| c.0 == name).expect("known covariate");
            let series = &covs.iter().find(|c| c.0 == name).expect("known covariate").1;
            (series[t] - mean) / sd
        };
        let mut counts = Vec::with_capacity(self.years);
        let mut n = self.initial_count;
        for t in 0..self.years {
            // Whole animals, never below one.
            counts.push(n.round().max(1.0));
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut r = self.growth + self.density * counts[t] + self.noise_sd * z;
            for e in &self.effects {
                r += e.coefficient * standardised(&e.covariate, t);
            }
            n = counts[t] * r.exp();
        }
        let years = (0..self.years as i64).map(|i| self.first_year + i).collect();
        TimeSeriesDataset::new(years, counts, covs)
    }
}

/// 45 years (1956-2000) of an alpine ungulate driven by density and snow.
pub fn ibex_like(seed: u64) -> Result<TimeSeriesDataset> {
    RickerSimulation {
        first_year: 1956,
        years: 45,
        initial_count: 2000.0,
        growth: 0.45,
        density: -0.00015,
        noise_sd: 0.08,
        covariates: vec![("snow".into(), 150.0, 60.0), ("temp".into(), -2.0, 1.5)],
        effects: vec![Effect {
            covariate: "snow".into(),
            coefficient: -0.12,
        }],
        seed,
    }
    .run()
}

/// The 20 candidates fitted to [`ibex_like`] data: ten predictor combinations,
/// each as Ricker and as Gompertz.
pub fn ibex_candidates() -> Vec<Candidate> {
    let combos: [(&[&str], bool, bool); 10] = [
        (&[], true, false),
        (&["snow"], false, false),
        (&[], false, true),
        (&["snow"], true, false),
        (&[], true, true),
        (&["snow"], false, true),
        (&["snow"], true, true),
        (&["temp"], true, false),
        (&["snow", "temp"], false, false),
        (&["snow", "temp"], true, false),
    ];
    let mut out = Vec::with_capacity(20);
    for (i, (covs, density, interaction)) in combos.iter().enumerate() {
        for (j, family) in [Family::Ricker, Family::Gompertz].into_iter().enumerate() {
            let mut spec = ModelSpec::new(family);
            spec.include_density = *density;
            spec.covariates = covs.iter().map(|c| c.to_string()).collect();
            if *interaction {
                spec.interactions.push((DENSITY_TERM.into(), "snow".into()));
            }
            out.push(Candidate::new(format!("M{}", 2 * i + j + 1), spec));
        }
    }
    out
}

/// Population with eight candidate covariates `a`..`h`, of which only those
/// listed in `informative` affect the growth rate.
pub fn reindeer_like(seed: u64, years: usize, informative: &[(&str, f64)]) -> Result<TimeSeriesDataset> {
    RickerSimulation {
        first_year: 1980,
        years,
        initial_count: 8000.0,
        growth: 0.3,
        density: -0.3 / 8000.0,
        noise_sd: 0.12,
        covariates: ["a", "b", "c", "d", "e", "f", "g", "h"]
            .iter()
            .map(|n| (n.to_string(), 0.0, 1.0))
            .collect(),
        effects: informative
            .iter()
            .map(|(c, b)| Effect {
                covariate: c.to_string(),
                coefficient: *b,
            })
            .collect(),
        seed,
    }
    .run()
}

/// Counts whose relative change is pure noise, with `n_covariates`
/// independent N(0, 1) covariates named `x1`, `x2`, ...
pub fn null_dataset(seed: u64, years: usize, n_covariates: usize) -> Result<TimeSeriesDataset> {
    let mut rng = rng::substream(seed, 1);
    let mut counts = vec![1000.0];
    for _ in 1..years {
        let z: f64 = StandardNormal.sample(&mut rng);
        let last = *counts.last().unwrap();
        counts.push(last * (0.1 * z).exp());
    }
    let covs = (1..=n_covariates)
        .map(|i| {
            let s: Vec<f64> = (0..years).map(|_| StandardNormal.sample(&mut rng)).collect();
            (format!("x{i}"), s)
        })
        .collect();
    TimeSeriesDataset::new((0..years as i64).map(|y| 1900 + y).collect(), counts, covs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popmodel::build_design;

    #[test]
    fn ibex_shape() {
        let ds = ibex_like(1).unwrap();
        assert_eq!(ds.len(), 45);
        assert_eq!(ds.years()[0], 1956);
        assert_eq!(*ds.years().last().unwrap(), 2000);
        assert!(ds.counts().iter().all(|&c| c >= 1.0));
        let cands = ibex_candidates();
        assert_eq!(cands.len(), 20);
        for c in &cands {
            assert_eq!(build_design(&c.spec, &ds).unwrap().design.rows(), 44);
        }
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(reindeer_like(4, 30, &[("a", 0.2)]).unwrap(), reindeer_like(4, 30, &[("a", 0.2)]).unwrap());
        assert_ne!(null_dataset(1, 20, 2).unwrap(), null_dataset(2, 20, 2).unwrap());
    }
}
