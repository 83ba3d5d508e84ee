//! The TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! dataset = "ibex.csv"
//! statistics = ["aicc", "cv-ign"]
//! permutations = 999
//! seed = 7
//!
//! [[models]]
//! id = "M1"
//! family = "ricker"
//! density = true
//! covariates = ["snow"]
//! interactions = [["density", "snow"]]
//! ```
//!
//! Unknown keys are rejected. Relative paths resolve against the directory
//! holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use permsel_core::popmodel::DENSITY_TERM;
use permsel_core::{AiccConvention, Candidate, Family, ModelSpec, StatisticKind, TimeSeriesDataset};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PERMUTATIONS: usize = 999;

fn default_statistics() -> Vec<StatisticKind> {
    vec![StatisticKind::Aicc]
}

fn default_permutations() -> usize {
    DEFAULT_PERMUTATIONS
}

fn default_samples() -> usize {
    permsel_core::popmodel::DEFAULT_FORECAST_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub dataset: PathBuf,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<StatisticKind>,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Transitions starting in these years are left out of every fit.
    #[serde(default)]
    pub exclude_years: Vec<i64>,
    /// Report `(exceed + 1) / (J + 1)` instead of `exceed / J`.
    #[serde(default)]
    pub add_one: bool,
    #[serde(default)]
    pub aicc_convention: AiccConvention,
    /// Write ECDFs of the permutation distributions.
    #[serde(default)]
    pub ecdf: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastConfig>,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// KDE bandwidth on the count scale; Silverman's rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    /// Also score each model by count-scale leave-one-out ignorance.
    #[serde(default)]
    pub cv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub id: String,
    pub family: Family,
    #[serde(default)]
    pub density: bool,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub interactions: Vec<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_params: Option<usize>,
}

impl ModelEntry {
    pub fn from_candidate(c: &Candidate) -> Self {
        Self {
            id: c.id.clone(),
            family: c.spec.family,
            density: c.spec.include_density,
            covariates: c.spec.covariates.clone(),
            interactions: c.spec.interactions.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
            k_params: c.k_params,
        }
    }

    pub fn candidate(&self) -> Candidate {
        let mut spec = match self.family {
            Family::Null => ModelSpec::null(),
            f => ModelSpec::new(f),
        };
        if self.density {
            spec = spec.with_density();
        }
        for c in &self.covariates {
            spec = spec.with_covariate(c.as_str());
        }
        for [a, b] in &self.interactions {
            spec = spec.with_interaction(a.as_str(), b.as_str());
        }
        Candidate {
            id: self.id.clone(),
            spec,
            k_params: self.k_params,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub permutations: Option<usize>,
    pub statistics: Vec<StatisticKind>,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate(path)?;
        Ok(config)
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut config = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.dataset = base.join(&config.dataset);
        if let Some(dir) = &config.output_dir {
            config.output_dir = Some(base.join(dir));
        }
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides, path: &Path) -> Result<()> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(j) = overrides.permutations {
            self.permutations = j;
        }
        if !overrides.statistics.is_empty() {
            self.statistics = overrides.statistics.clone();
        }
        self.validate(path)
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        let fail = |message: String| {
            Err(CliError::Config {
                path: path.to_path_buf(),
                message,
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.permutations == 0 {
            return fail("permutations must be at least 1".into());
        }
        if self.statistics.is_empty() {
            return fail("statistics must name at least one statistic".into());
        }
        let mut seen = BTreeSet::new();
        for s in &self.statistics {
            if !seen.insert(s.label()) {
                return fail(format!("statistic `{s}` listed twice"));
            }
        }
        if let Some(f) = &self.forecast {
            if f.samples == 0 {
                return fail("forecast.samples must be at least 1".into());
            }
            if let Some(h) = f.bandwidth {
                if !(h > 0.0 && h.is_finite()) {
                    return fail(format!("forecast.bandwidth {h} must be positive"));
                }
            }
        }
        let mut ids = BTreeSet::new();
        for m in &self.models {
            if m.id.trim().is_empty() {
                return fail("model id must not be empty".into());
            }
            if !ids.insert(m.id.as_str()) {
                return fail(format!("model id `{}` is used twice", m.id));
            }
            if let Err(e) = m.candidate().spec.validate() {
                return fail(format!("model `{}`: {e}", m.id));
            }
            if m.k_params == Some(0) {
                return fail(format!("model `{}`: k_params must be at least 1", m.id));
            }
        }
        if self.models.iter().filter(|m| m.family == Family::Null).count() > 1 {
            return fail("at most one null model may be listed".into());
        }
        Ok(())
    }

    /// Every covariate a model names must be a dataset column.
    pub fn check_covariates(&self, dataset: &TimeSeriesDataset, path: &Path) -> Result<()> {
        for m in &self.models {
            let names = m.covariates.iter().chain(m.interactions.iter().flatten());
            for name in names {
                if name != DENSITY_TERM && dataset.covariate(name).is_none() {
                    return Err(CliError::Config {
                        path: path.to_path_buf(),
                        message: format!("model `{}` uses covariate `{name}`, which is not a dataset column", m.id),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn candidates(&self) -> Vec<Candidate> {
        self.models.iter().map(ModelEntry::candidate).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }
}
