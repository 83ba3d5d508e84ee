//! Population time series and the stochastic Ricker / Gompertz model family.
//!
//! All families model the relative population change `R_i = ln(n_{i+1} / n_i)`
//! as a Gaussian linear function of predictors observed in year `i`. Ricker
//! uses the count itself as the density term, Gompertz its logarithm, and the
//! null family is intercept plus noise.

use rayon::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{DesignMatrix, FittedModel};

/// Reserved series name for the density term inside interactions.
pub const DENSITY_TERM: &str = "density";

/// Monte-Carlo sample count used when none is given.
pub const DEFAULT_FORECAST_SAMPLES: usize = 10_000;

const SAMPLES_PER_STREAM: usize = 256;

/// Annual counts with optional covariate series aligned to the same years.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    years: Vec<i64>,
    counts: Vec<f64>,
    covariates: Vec<(String, Vec<f64>)>,
    excluded: Vec<i64>,
}

impl TimeSeriesDataset {
    pub fn new(years: Vec<i64>, counts: Vec<f64>, covariates: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if years.is_empty() {
            return Err(Error::InvalidDataset("no observations".into()));
        }
        if counts.len() != years.len() {
            return Err(Error::LengthMismatch {
                what: "counts",
                expected: years.len(),
                actual: counts.len(),
            });
        }
        for w in years.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::InvalidDataset(format!(
                    "years must be consecutive, found {} followed by {}",
                    w[0], w[1]
                )));
            }
        }
        for (&year, &value) in years.iter().zip(&counts) {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveCount { year, value });
            }
        }
        for (name, series) in &covariates {
            if series.len() != years.len() {
                return Err(Error::AlignmentError {
                    name: name.clone(),
                    expected: years.len(),
                    actual: series.len(),
                });
            }
            if name == DENSITY_TERM {
                return Err(Error::InvalidDataset(format!(
                    "covariate name `{DENSITY_TERM}` is reserved"
                )));
            }
        }
        for (i, (name, _)) in covariates.iter().enumerate() {
            if covariates[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::InvalidDataset(format!("duplicate covariate `{name}`")));
            }
        }
        Ok(Self {
            years,
            counts,
            covariates,
            excluded: Vec::new(),
        })
    }

    pub fn years(&self) -> &[i64] {
        &self.years
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn covariates(&self) -> &[(String, Vec<f64>)] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.as_slice())
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    /// Drops the transitions that start in the given years from every design
    /// built on this dataset, e.g. to set aside an influential observation.
    pub fn exclude_years(&mut self, years: &[i64]) -> Result<()> {
        for y in years {
            if !self.years[..self.years.len().saturating_sub(1)].contains(y) {
                return Err(Error::InvalidDataset(format!(
                    "cannot exclude {y}: no transition starts in that year"
                )));
            }
            if !self.excluded.contains(y) {
                self.excluded.push(*y);
            }
        }
        self.excluded.sort_unstable();
        Ok(())
    }

    pub fn excluded_years(&self) -> &[i64] {
        &self.excluded
    }

    /// Start years of the transitions that enter a design.
    pub fn transition_years(&self) -> Vec<i64> {
        self.years[..self.years.len().saturating_sub(1)]
            .iter()
            .copied()
            .filter(|y| !self.excluded.contains(y))
            .collect()
    }

    /// Relative change over the transitions kept by [`transition_years`](Self::transition_years).
    pub fn response(&self) -> Result<Vec<f64>> {
        let all = relative_change(self)?;
        Ok(self
            .years
            .iter()
            .zip(all)
            .filter(|(y, _)| !self.excluded.contains(y))
            .map(|(_, r)| r)
            .collect())
    }
}

/// `ln(n_{i+1} / n_i)` for every consecutive pair of years.
pub fn relative_change(dataset: &TimeSeriesDataset) -> Result<Vec<f64>> {
    relative_change_of(&dataset.years, &dataset.counts)
}

fn relative_change_of(years: &[i64], counts: &[f64]) -> Result<Vec<f64>> {
    if counts.len() < 2 {
        return Err(Error::InvalidDataset(
            "at least two years are needed for a transition".into(),
        ));
    }
    if let Some(i) = counts.iter().position(|&c| c.is_nan() || c <= 0.0) {
        return Err(Error::NonPositiveCount {
            year: years.get(i).copied().unwrap_or(i as i64),
            value: counts[i],
        });
    }
    Ok(counts.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ricker,
    Gompertz,
    Null,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Ricker => "ricker",
            Family::Gompertz => "gompertz",
            Family::Null => "null",
        }
    }

    fn density(self, count: f64) -> f64 {
        match self {
            Family::Gompertz => count.ln(),
            _ => count,
        }
    }
}

/// One candidate model: family plus the predictors it includes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub covariates: Vec<String>,
    pub interactions: Vec<(String, String)>,
    pub include_density: bool,
}

impl ModelSpec {
    pub fn null() -> Self {
        Self {
            family: Family::Null,
            covariates: Vec::new(),
            interactions: Vec::new(),
            include_density: false,
        }
    }

    pub fn new(family: Family) -> Self {
        Self {
            family,
            ..Self::null()
        }
    }

    pub fn with_density(mut self) -> Self {
        self.include_density = true;
        self
    }

    pub fn with_covariate(mut self, name: impl Into<String>) -> Self {
        self.covariates.push(name.into());
        self
    }

    pub fn with_interaction(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.interactions.push((a.into(), b.into()));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == Family::Null
            && (self.include_density || !self.covariates.is_empty() || !self.interactions.is_empty())
        {
            return Err(Error::InvalidModel(
                "the null model takes no predictors".into(),
            ));
        }
        if self.covariates.iter().any(|c| c == DENSITY_TERM) {
            return Err(Error::InvalidModel(format!(
                "`{DENSITY_TERM}` is not a covariate; set the density flag instead"
            )));
        }
        Ok(())
    }

    pub fn n_coefficients(&self) -> usize {
        1 + usize::from(self.include_density) + self.covariates.len() + self.interactions.len()
    }
}

/// A labelled model as it appears in a candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub spec: ModelSpec,
    /// Overrides the default parameter count (coefficients + 1).
    pub k_params: Option<usize>,
}

impl Candidate {
    pub fn new(id: impl Into<String>, spec: ModelSpec) -> Self {
        Self {
            id: id.into(),
            spec,
            k_params: None,
        }
    }
}

/// Design matrix plus the response it explains and the start year of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub design: DesignMatrix,
    pub response: Vec<f64>,
    pub years: Vec<i64>,
    pub column_names: Vec<String>,
}

fn series<'a>(dataset: &'a TimeSeriesDataset, name: &str) -> Result<&'a [f64]> {
    dataset
        .covariate(name)
        .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
}

/// Predictor row for year index `t` of the dataset (any year, including the
/// last one, which has no observed transition yet).
pub fn predictor_row(spec: &ModelSpec, dataset: &TimeSeriesDataset, t: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    let count = dataset.counts[t];
    let density = spec.family.density(count);
    let value = |name: &str| -> Result<f64> {
        if name == DENSITY_TERM {
            Ok(density)
        } else {
            Ok(series(dataset, name)?[t])
        }
    };
    let mut row = Vec::with_capacity(spec.n_coefficients());
    row.push(1.0);
    if spec.include_density {
        row.push(density);
    }
    for c in &spec.covariates {
        row.push(value(c)?);
    }
    for (a, b) in &spec.interactions {
        row.push(value(a)? * value(b)?);
    }
    Ok(row)
}

/// Builds the regression problem for one candidate.
///
/// Row `i` pairs `R_i` with the count and covariates of year `i`. Columns are
/// the intercept, the density term (raw for Ricker, logged for Gompertz),
/// covariates in spec order, then interaction products.
pub fn build_design(spec: &ModelSpec, dataset: &TimeSeriesDataset) -> Result<ModelData> {
    spec.validate()?;
    for name in spec
        .covariates
        .iter()
        .chain(spec.interactions.iter().flat_map(|(a, b)| [a, b]))
    {
        if name != DENSITY_TERM {
            series(dataset, name)?;
        }
    }
    let response = dataset.response()?;
    let years = dataset.transition_years();
    let mut rows = Vec::with_capacity(years.len());
    for (t, year) in dataset.years[..dataset.len() - 1].iter().enumerate() {
        if !dataset.excluded.contains(year) {
            rows.push(predictor_row(spec, dataset, t)?);
        }
    }
    let design = DesignMatrix::from_rows(&rows)?;

    let density_name = match spec.family {
        Family::Gompertz => "ln_count",
        _ => "count",
    };
    let term = |n: &str| if n == DENSITY_TERM { density_name.to_string() } else { n.to_string() };
    let mut column_names = vec!["intercept".to_string()];
    if spec.include_density {
        column_names.push(density_name.to_string());
    }
    column_names.extend(spec.covariates.iter().cloned());
    column_names.extend(
        spec.interactions
            .iter()
            .map(|(a, b)| format!("{}:{}", term(a), term(b))),
    );

    Ok(ModelData {
        design,
        response,
        years,
        column_names,
    })
}

/// Simulated next-year population counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationForecast {
    pub samples: Vec<f64>,
    pub kde_bandwidth: f64,
    pub origin_count: f64,
}

impl PopulationForecast {
    /// Wraps samples, choosing the bandwidth by Silverman's rule unless one is
    /// given.
    pub fn new(samples: Vec<f64>, origin_count: f64, bandwidth: Option<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("forecast needs at least one sample".into()));
        }
        let kde_bandwidth = match bandwidth {
            Some(h) if h > 0.0 && h.is_finite() => h,
            Some(h) => return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive"))),
            None => silverman_bandwidth(&samples),
        };
        Ok(Self {
            samples,
            kde_bandwidth,
            origin_count,
        })
    }

    pub fn density(&self, x: f64) -> f64 {
        kde_density(self, x)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `0.9 * min(sd, IQR / 1.34) * S^(-1/5)`.
///
/// When the spread is zero in both measures (all samples equal) a tiny
/// bandwidth relative to the sample magnitude is returned instead.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let s = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / s;
    let sd = if samples.len() > 1 {
        (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => 1e-6 * mean.abs().max(1.0),
    };
    0.9 * spread * s.powf(-0.2)
}

/// Gaussian-kernel density estimate at `x`.
pub fn kde_density(forecast: &PopulationForecast, x: f64) -> f64 {
    let h = forecast.kde_bandwidth;
    let norm = 1.0 / (forecast.samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    forecast
        .samples
        .iter()
        .map(|s| {
            let z = (x - s) / h;
            (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * norm
}

/// Draws `samples` next-year counts `origin * exp(R*)` with
/// `R* ~ N(predictor_row . coefficients, sigma2)`.
///
/// Samples are generated in fixed-size blocks, each from its own RNG
/// substream, so the result depends only on the seed.
pub fn monte_carlo_forecast(
    fitted: &FittedModel,
    predictor_row: &[f64],
    origin_count: f64,
    samples: usize,
    seed: u64,
) -> Result<PopulationForecast> {
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    if !(origin_count > 0.0 && origin_count.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "origin count {origin_count} must be positive"
        )));
    }
    if predictor_row.len() != fitted.coefficients.len() {
        return Err(Error::LengthMismatch {
            what: "predictor row",
            expected: fitted.coefficients.len(),
            actual: predictor_row.len(),
        });
    }
    let mean = fitted.predict(predictor_row);
    let sd = fitted.sigma2.sqrt();
    let blocks = samples.div_ceil(SAMPLES_PER_STREAM);
    let draws: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = rng::substream(seed, b as u64);
            let len = SAMPLES_PER_STREAM.min(samples - b * SAMPLES_PER_STREAM);
            (0..len)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    origin_count * (mean + sd * z).exp()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    PopulationForecast::new(draws, origin_count, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(counts: &[f64]) -> TimeSeriesDataset {
        let years = (0..counts.len() as i64).map(|y| 2000 + y).collect();
        TimeSeriesDataset::new(years, counts.to_vec(), vec![]).unwrap()
    }

    #[test]
    fn relative_change_examples() {
        let r = relative_change(&dataset(&[100.0, 150.0])).unwrap();
        assert!((r[0] - 0.405465).abs() < 1e-6);
        assert_eq!(relative_change(&dataset(&[100.0; 3])).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            relative_change_of(&[1, 2, 3], &[100.0, 0.0, 10.0]),
            Err(Error::NonPositiveCount { year: 2, .. })
        ));
    }

    #[test]
    fn dataset_rejects_zero_counts_and_gaps() {
        assert!(matches!(
            TimeSeriesDataset::new(vec![1, 2], vec![1.0, 0.0], vec![]),
            Err(Error::NonPositiveCount { year: 2, .. })
        ));
        assert!(matches!(
            TimeSeriesDataset::new(vec![1, 3], vec![1.0, 2.0], vec![]),
            Err(Error::InvalidDataset(_))
        ));
        assert!(matches!(
            TimeSeriesDataset::new(vec![1, 2], vec![1.0, 2.0], vec![("snow".into(), vec![1.0])]),
            Err(Error::AlignmentError { .. })
        ));
    }

    #[test]
    fn null_design_is_intercept_column() {
        let ds = dataset(&[10.0, 20.0, 15.0, 30.0]);
        let md = build_design(&ModelSpec::null(), &ds).unwrap();
        assert_eq!(md.design.cols(), 1);
        assert_eq!(md.design.column(0), vec![1.0; 3]);
        assert_eq!(md.response, relative_change(&ds).unwrap());
        assert_eq!(md.years, vec![2000, 2001, 2002]);
    }

    #[test]
    fn ricker_density_design() {
        let md = build_design(
            &ModelSpec::new(Family::Ricker).with_density(),
            &dataset(&[100.0, 120.0, 90.0]),
        )
        .unwrap();
        assert_eq!(md.design.row(0), &[1.0, 100.0]);
        assert_eq!(md.design.row(1), &[1.0, 120.0]);
        assert!((md.response[0] - 1.2f64.ln()).abs() < 1e-15);
        assert!((md.response[1] - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gompertz_interaction_matches_hand_built_matrix() {
        let counts = [50.0, 80.0, 60.0, 90.0];
        let snow = [1.5, -0.5, 2.0, 0.0];
        let ds = TimeSeriesDataset::new(
            vec![1990, 1991, 1992, 1993],
            counts.to_vec(),
            vec![("snow".into(), snow.to_vec())],
        )
        .unwrap();
        let spec = ModelSpec::new(Family::Gompertz)
            .with_density()
            .with_covariate("snow")
            .with_interaction(DENSITY_TERM, "snow");
        let md = build_design(&spec, &ds).unwrap();
        let expected: Vec<[f64; 4]> = (0..3)
            .map(|i| {
                let l = f64::ln(counts[i]);
                [1.0, l, snow[i], l * snow[i]]
            })
            .collect();
        assert_eq!(md.design, DesignMatrix::from_rows(&expected).unwrap());
        assert_eq!(md.column_names, ["intercept", "ln_count", "snow", "ln_count:snow"]);
    }

    #[test]
    fn unknown_covariate_and_invalid_null() {
        let ds = dataset(&[1.0, 2.0, 3.0]);
        let spec = ModelSpec::new(Family::Ricker).with_covariate("rain");
        assert_eq!(build_design(&spec, &ds).unwrap_err(), Error::UnknownCovariate("rain".into()));
        let bad_null = ModelSpec::null().with_density();
        assert!(matches!(build_design(&bad_null, &ds), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn excluded_years_drop_transitions() {
        let mut ds = dataset(&[10.0, 20.0, 15.0, 30.0, 25.0]);
        ds.exclude_years(&[2001]).unwrap();
        let md = build_design(&ModelSpec::new(Family::Ricker).with_density(), &ds).unwrap();
        assert_eq!(md.years, vec![2000, 2002, 2003]);
        assert_eq!(md.design.column(1), vec![10.0, 15.0, 30.0]);
        assert!((md.response[1] - 2.0f64.ln()).abs() < 1e-15);
        assert!(ds.exclude_years(&[2004]).is_err());
    }

    fn fitted(mean: f64, sigma2: f64) -> FittedModel {
        FittedModel {
            coefficients: vec![mean],
            sigma2,
            loglik: 0.0,
            n_obs: 10,
            k_params: 2,
            rss: sigma2 * 10.0,
        }
    }

    #[test]
    fn zero_variance_forecast_is_deterministic_growth() {
        let f = monte_carlo_forecast(&fitted(0.2, 0.0), &[1.0], 50.0, 100, 1).unwrap();
        for s in &f.samples {
            assert!((s - 50.0 * 0.2f64.exp()).abs() < 1e-12);
        }
        assert!(f.kde_bandwidth > 0.0);
    }

    #[test]
    fn forecast_defaults_and_seeding() {
        let a = monte_carlo_forecast(&fitted(0.0, 0.04), &[1.0], 100.0, DEFAULT_FORECAST_SAMPLES, 9)
            .unwrap();
        let b = monte_carlo_forecast(&fitted(0.0, 0.04), &[1.0], 100.0, DEFAULT_FORECAST_SAMPLES, 9)
            .unwrap();
        assert_eq!(a.samples.len(), 10_000);
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|&s| s > 0.0));
        let c = monte_carlo_forecast(&fitted(0.0, 0.04), &[1.0], 100.0, 10, 10).unwrap();
        assert_ne!(a.samples[..10], c.samples[..]);
    }

    #[test]
    fn kde_single_sample_peak() {
        let f = PopulationForecast::new(vec![3.0], 1.0, Some(0.5)).unwrap();
        let peak = 1.0 / (0.5 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((kde_density(&f, 3.0) - peak).abs() < 1e-15);
    }

    #[test]
    fn kde_symmetric_samples() {
        let f = PopulationForecast::new(vec![1.0, 2.5, 4.0, 5.5, 7.0], 1.0, None).unwrap();
        for d in [0.1, 0.7, 2.0, 5.0] {
            assert!((kde_density(&f, 4.0 + d) - kde_density(&f, 4.0 - d)).abs() < 1e-12);
        }
    }

    #[test]
    fn silverman_rule_on_known_sample() {
        // sd = sqrt(2.5) = 1.5811, IQR = 2 -> 2/1.34 = 1.4925
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let expected = 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2);
        assert!((h - expected).abs() < 1e-12);
    }
}
