//! Information criteria and the ignorance score.
//!
//! Every statistic here is negatively oriented: smaller is better.

use std::cmp::Ordering;
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::popmodel::{self, Candidate, Family, ModelData, ModelSpec, TimeSeriesDataset};
use crate::stats::{self, DesignMatrix, LeastSquares, LEVERAGE_TOLERANCE};

/// `-2 ln L + 2k`.
pub fn aic(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

/// Small-sample corrected AIC, `AIC + 2k(k+1)/(n-k-1)`.
pub fn aicc(loglik: f64, k: usize, n: usize) -> Result<f64> {
    aicc_with(loglik, k, n, AiccConvention::Standard)
}

pub fn aicc_with(loglik: f64, k: usize, n: usize, convention: AiccConvention) -> Result<f64> {
    if n < k + 2 {
        return Err(Error::SmallSample { n, k });
    }
    let kf = k as f64;
    let correction = 2.0 * kf * (kf + 1.0) / (n - k - 1) as f64;
    Ok(match convention {
        AiccConvention::Standard => aic(loglik, k) + correction,
        AiccConvention::CorrectionOnly => -2.0 * loglik + correction,
    })
}

/// `-log2` of the density placed on the outcome, in bits.
pub fn ignorance(density_at_outcome: f64) -> Result<f64> {
    if density_at_outcome.is_nan() || density_at_outcome <= 0.0 {
        return Err(Error::ZeroDensity {
            density: density_at_outcome,
        });
    }
    Ok(-density_at_outcome.log2())
}

/// Ignorance from a natural-log density; stays finite where the density itself
/// would underflow.
pub fn ignorance_from_ln_density(ln_density: f64) -> f64 {
    -ln_density / LN_2
}

fn gaussian_ln_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * variance).ln() - d * d / (2.0 * variance)
}

/// Which form of AICc to report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AiccConvention {
    /// `AIC + 2k(k+1)/(n-k-1)`.
    #[default]
    Standard,
    /// `-2 ln L + 2k(k+1)/(n-k-1)`, without the `2k` term.
    CorrectionOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatisticKind {
    #[serde(rename = "aic")]
    Aic,
    #[serde(rename = "aicc")]
    Aicc,
    #[serde(rename = "cv-ign")]
    CvMeanIgnorance,
    /// Raw negative log-likelihood, without any penalty.
    #[serde(rename = "neg-loglik")]
    NegLogLik,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 4] = [
        StatisticKind::Aic,
        StatisticKind::Aicc,
        StatisticKind::CvMeanIgnorance,
        StatisticKind::NegLogLik,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StatisticKind::Aic => "aic",
            StatisticKind::Aicc => "aicc",
            StatisticKind::CvMeanIgnorance => "cv-ign",
            StatisticKind::NegLogLik => "neg-loglik",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StatisticKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown statistic `{s}`")))
    }
}

/// A statistic kind together with the options that change its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Criterion {
    pub kind: StatisticKind,
    pub aicc: AiccConvention,
}

impl Criterion {
    pub fn new(kind: StatisticKind) -> Self {
        Self {
            kind,
            aicc: AiccConvention::Standard,
        }
    }
}

impl From<StatisticKind> for Criterion {
    fn from(kind: StatisticKind) -> Self {
        Criterion::new(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStatistic {
    pub kind: StatisticKind,
    pub value: f64,
}

/// A design factorised once so that its statistic can be recomputed cheaply
/// for many response vectors.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    ls: LeastSquares,
    leverages: Vec<f64>,
    k_params: usize,
}

impl PreparedModel {
    pub fn new(design: &DesignMatrix, k_override: Option<usize>) -> Result<Self> {
        let ls = LeastSquares::new(design)?;
        let leverages = ls.leverages();
        let k_params = k_override.unwrap_or(ls.n_coefficients() + 1);
        if k_params == 0 {
            return Err(Error::InvalidModel("parameter count must be at least 1".into()));
        }
        Ok(Self {
            ls,
            leverages,
            k_params,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.ls.n_obs()
    }

    pub fn k_params(&self) -> usize {
        self.k_params
    }

    pub fn least_squares(&self) -> &LeastSquares {
        &self.ls
    }

    pub fn fit(&self, y: &[f64]) -> Result<stats::FittedModel> {
        Ok(self.ls.fit(y)?.with_k_params(self.k_params))
    }

    fn loglik(&self, y: &[f64]) -> Result<f64> {
        let (_, rss) = self.ls.residuals(y)?;
        if stats::is_perfect_fit(rss, y) {
            return Err(Error::PerfectFit { rss });
        }
        Ok(stats::gaussian_loglik(rss, y.len()))
    }

    pub fn statistic(&self, y: &[f64], criterion: &Criterion) -> Result<f64> {
        match criterion.kind {
            StatisticKind::Aic => Ok(aic(self.loglik(y)?, self.k_params)),
            StatisticKind::Aicc => aicc_with(self.loglik(y)?, self.k_params, y.len(), criterion.aicc),
            StatisticKind::NegLogLik => Ok(-self.loglik(y)?),
            StatisticKind::CvMeanIgnorance => self.loo_mean_ignorance(y),
        }
    }

    /// Leave-one-out mean ignorance of Gaussian predictive densities.
    ///
    /// Each fold is evaluated from the full-data fit: the held-out prediction
    /// error is `e_i / (1 - h_i)` and the fold's residual sum of squares is
    /// `RSS - e_i^2 / (1 - h_i)`.
    pub fn loo_mean_ignorance(&self, y: &[f64]) -> Result<f64> {
        let n = self.ls.n_obs();
        let p = self.ls.n_coefficients();
        if n < p + 2 {
            return Err(Error::TooFewRows {
                rows: n,
                needed: p + 2,
            });
        }
        if let Some(fold) = self
            .leverages
            .iter()
            .position(|&h| h >= 1.0 - LEVERAGE_TOLERANCE)
        {
            return Err(Error::FoldRankDeficient { fold });
        }
        let (resid, rss) = self.ls.residuals(y)?;

        let nf = n as f64;
        let mean = y.iter().sum::<f64>() / nf;
        let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let sq: f64 = y.iter().map(|v| v * v).sum();
        let m = nf - 1.0;

        let mut total = 0.0;
        for i in 0..n {
            let one_minus_h = 1.0 - self.leverages[i];
            let fold_rss = (rss - resid[i] * resid[i] / one_minus_h).max(0.0);
            // Spread of the retained outcomes, for the perfect-fit check.
            let fold_var = (ss - nf / m * (y[i] - mean).powi(2)).max(0.0) / m;
            let scale = if fold_var > 0.0 { fold_var } else { (sq - y[i] * y[i]) / m };
            if scale == 0.0 || fold_rss / m < stats::PERFECT_FIT_TOLERANCE * scale {
                return Err(Error::FoldPerfectFit { fold: i });
            }
            let sigma2 = fold_rss / m;
            let error = resid[i] / one_minus_h;
            total += ignorance_from_ln_density(gaussian_ln_density(error, 0.0, sigma2));
        }
        Ok(total / nf)
    }
}

/// Leave-one-out cross-validated mean ignorance of a Gaussian linear model.
pub fn loo_cv_mean_ignorance(design: &DesignMatrix, y: &[f64]) -> Result<f64> {
    if y.len() != design.rows() {
        return Err(Error::LengthMismatch {
            what: "response",
            expected: design.rows(),
            actual: y.len(),
        });
    }
    let prepared = match PreparedModel::new(design, None) {
        Err(Error::RankDeficient { .. }) if design.rows() < design.cols() + 2 => {
            return Err(Error::TooFewRows {
                rows: design.rows(),
                needed: design.cols() + 2,
            })
        }
        other => other?,
    };
    prepared.loo_mean_ignorance(y)
}

/// [`loo_cv_mean_ignorance`] for a population model on a dataset.
pub fn loo_cv_mean_ignorance_for(model: &ModelSpec, dataset: &TimeSeriesDataset) -> Result<f64> {
    let md = popmodel::build_design(model, dataset)?;
    loo_cv_mean_ignorance(&md.design, &md.response)
}

/// Leave-one-out mean ignorance on the count scale: each fold's forecast of
/// the next-year count is simulated by Monte Carlo and scored through a
/// kernel density estimate.
pub fn loo_cv_mean_ignorance_counts(
    data: &ModelData,
    dataset: &TimeSeriesDataset,
    samples: usize,
    seed: u64,
    bandwidth: Option<f64>,
) -> Result<f64> {
    let n = data.design.rows();
    let first_year = dataset.years()[0];
    let mut total = 0.0;
    for i in 0..n {
        let train = data.design.without_rows(&[i])?;
        let y: Vec<f64> = data
            .response
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .collect();
        let fit = match stats::fit_linear_gaussian(&train, &y) {
            Err(Error::PerfectFit { .. }) => return Err(Error::FoldPerfectFit { fold: i }),
            Err(Error::RankDeficient { .. }) => return Err(Error::FoldRankDeficient { fold: i }),
            other => other?,
        };
        let t = (data.years[i] - first_year) as usize;
        let origin = dataset.counts()[t];
        let outcome = dataset.counts()[t + 1];
        let forecast = popmodel::monte_carlo_forecast(
            &fit,
            data.design.row(i),
            origin,
            samples,
            crate::rng::derive_seed(seed, 0x636f_756e_7473, i as u64),
        )?;
        let forecast = match bandwidth {
            Some(h) => popmodel::PopulationForecast::new(forecast.samples, origin, Some(h))?,
            None => forecast,
        };
        total += ignorance(popmodel::kde_density(&forecast, outcome))?;
    }
    Ok(total / n as f64)
}

/// One line of a selection table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTableRow {
    pub model_id: String,
    pub family: Family,
    pub statistic: Option<SelectionStatistic>,
    /// Statistic minus the null model's statistic of the same kind.
    pub delta_vs_null: Option<f64>,
    pub p_value: Option<f64>,
    pub loglik: Option<f64>,
    pub k_params: Option<usize>,
    /// Why the model could not be scored, if it failed.
    pub error: Option<String>,
}

/// Orders by statistic, then label; unscored rows go last.
pub fn compare_rows(a: &ScoreTableRow, b: &ScoreTableRow) -> Ordering {
    match (&a.statistic, &b.statistic) {
        (Some(x), Some(y)) => x.value.total_cmp(&y.value),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then_with(|| a.model_id.cmp(&b.model_id))
}

/// Scores every candidate relative to the null model.
///
/// A null model is added under the id `M0` unless the candidates already
/// contain one. Candidates that fail to fit are kept with their error.
pub fn build_score_table(
    models: &[Candidate],
    dataset: &TimeSeriesDataset,
    criterion: &Criterion,
) -> Result<Vec<ScoreTableRow>> {
    let mut all: Vec<Candidate> = models.to_vec();
    if !all.iter().any(|c| c.spec.family == Family::Null) {
        all.push(Candidate::new("M0", ModelSpec::null()));
    }
    let null = all.iter().find(|c| c.spec.family == Family::Null).unwrap();
    let null_md = popmodel::build_design(&null.spec, dataset)?;
    let null_value = PreparedModel::new(&null_md.design, null.k_params)?
        .statistic(&null_md.response, criterion)?;

    let mut rows: Vec<ScoreTableRow> = all
        .iter()
        .map(|c| {
            let scored = popmodel::build_design(&c.spec, dataset).and_then(|md| {
                let prepared = PreparedModel::new(&md.design, c.k_params)?;
                let fit = prepared.fit(&md.response)?;
                let value = prepared.statistic(&md.response, criterion)?;
                Ok((fit, value))
            });
            match scored {
                Ok((fit, value)) => ScoreTableRow {
                    model_id: c.id.clone(),
                    family: c.spec.family,
                    statistic: Some(SelectionStatistic {
                        kind: criterion.kind,
                        value,
                    }),
                    delta_vs_null: Some(value - null_value),
                    p_value: None,
                    loglik: Some(fit.loglik),
                    k_params: Some(fit.k_params),
                    error: None,
                },
                Err(e) => ScoreTableRow {
                    model_id: c.id.clone(),
                    family: c.spec.family,
                    statistic: None,
                    delta_vs_null: None,
                    p_value: None,
                    loglik: None,
                    k_params: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    rows.sort_by(compare_rows);
    Ok(rows)
}
