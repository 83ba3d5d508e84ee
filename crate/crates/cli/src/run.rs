//! The `fit`, `permtest` and `select` pipelines, and `experiment1`.

use std::path::{Path, PathBuf};

use permsel_core::experiments::{run_experiment1, Experiment1Config, ModelCase};
use permsel_core::popmodel::predictor_row;
use permsel_core::rng::derive_seed;
use permsel_core::scoring::loo_cv_mean_ignorance_counts;
use permsel_core::{
    build_design, build_score_table, cooks_distance, monte_carlo_forecast, run_permutations, Candidate,
    Criterion, Family, ModelSpec, PermTestResult, PermutationSet, PreparedModel, ScoreTableRow,
    StatisticKind, TimeSeriesDataset,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, Result};
use crate::ingest;
use crate::report::{ecdf_table, slug, write_file, write_table, Cell, Table};

const FORECAST_DOMAIN: u64 = 0x666f_7265;
pub const DEFAULT_OUTPUT: &str = "permsel-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Score table, coefficients, Cook's distances, optional forecasts.
    Fit,
    /// Score table with single-model and Westfall-Young adjusted p-values.
    PermTest,
    /// Everything `PermTest` does plus the model-selection test.
    Select,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Fit => "fit",
            Mode::PermTest => "permtest",
            Mode::Select => "select",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub overrides: Overrides,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    /// The text tables, as also written to disk.
    pub report: String,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    permutations: usize,
    statistics: Vec<&'a str>,
    config_sha256: String,
    dataset_sha256: Option<String>,
    effective_config: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn core_err(context: &str) -> impl Fn(permsel_core::Error) -> CliError + '_ {
    move |e| CliError::core(context, e)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_provenance(dir: &Path, provenance: &Provenance) -> Result<()> {
    let json = serde_json::to_string_pretty(provenance).expect("provenance serializes");
    write_file(&dir.join("provenance.json"), &(json + "\n"))
}

/// Candidates from the config plus the implicit null model `M0`.
fn with_null(candidates: Vec<Candidate>) -> Vec<Candidate> {
    let mut all = candidates;
    if !all.iter().any(|c| c.spec.family == Family::Null) {
        all.push(Candidate::new("M0", ModelSpec::null()));
    }
    all
}

pub fn run_config(mode: Mode, options: &RunOptions) -> Result<RunSummary> {
    let cfg_path = &options.config;
    let mut config = RunConfig::load(cfg_path)?;
    config.apply(&options.overrides, cfg_path)?;

    let raw = std::fs::read(&config.dataset).map_err(|e| CliError::Config {
        path: cfg_path.clone(),
        message: format!("cannot read dataset {}: {e}", config.dataset.display()),
    })?;
    let mut dataset = ingest::parse_csv(&raw, &config.dataset)?;
    dataset
        .exclude_years(&config.exclude_years)
        .map_err(core_err("exclude_years"))?;
    config.check_covariates(&dataset, cfg_path)?;

    let out_dir = options
        .output
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    create_dir(&out_dir)?;

    let candidates = with_null(config.candidates());
    let mut report = String::new();
    let mut warnings = Vec::new();

    let y = build_design(&ModelSpec::null(), &dataset)
        .map_err(core_err("dataset"))?
        .response;
    let set = PermutationSet::random(config.permutations, config.seed);
    let mut selection = Table::new(
        "Model-selection permutation test",
        &[
            "statistic",
            "best_model",
            "observed",
            "permutations",
            "exceed_count",
            "p_value",
            "failed_refits",
            "note",
        ],
    );

    for &kind in &config.statistics {
        let criterion = Criterion {
            kind,
            aicc: config.aicc_convention,
        };
        let mut rows = build_score_table(&candidates, &dataset, &criterion).map_err(core_err("score table"))?;
        for r in &rows {
            if let Some(e) = &r.error {
                let w = format!("{kind}: model {} not scored: {e}", r.model_id);
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
        }
        let mut tests = PermOutcome::default();
        if mode != Mode::Fit {
            tests = permutation_tests(&rows, &candidates, &dataset, &y, &criterion, &set)?;
            for (id, res) in &tests.single {
                let row = rows.iter_mut().find(|r| &r.model_id == id).expect("tested row exists");
                row.p_value = Some(res.reported_p(config.add_one));
            }
            if config.ecdf {
                if let Some((id, res)) = tests.best.and_then(|b| tests.single.get(b)) {
                    let stats = res.per_perm_stats.as_deref().unwrap_or_default();
                    write_table(&out_dir, &format!("ecdf_{kind}_{}", slug(id)), &ecdf_table(stats))?;
                }
            }
        }
        let table = score_table(kind, &rows, &tests, mode);
        write_table(&out_dir, &format!("scores_{kind}"), &table)?;
        report.push_str(&table.to_text());
        report.push('\n');

        if mode == Mode::Select {
            match (&tests.selection, tests.best) {
                (Some(sel), Some(best)) => {
                    let best_id = &tests.single[best].0;
                    selection.push(vec![
                        kind.label().into(),
                        best_id.clone().into(),
                        sel.observed_stat.into(),
                        sel.permutations.into(),
                        sel.exceed_count.into(),
                        sel.reported_p(config.add_one).into(),
                        sel.failed_refits.into(),
                        Cell::Empty,
                    ]);
                    if config.ecdf {
                        let stats = sel.per_perm_stats.as_deref().unwrap_or_default();
                        write_table(&out_dir, &format!("ecdf_{kind}_selection"), &ecdf_table(stats))?;
                    }
                }
                _ => {
                    let null_id = rows
                        .iter()
                        .find(|r| r.family == Family::Null)
                        .map_or("M0".to_string(), |r| r.model_id.clone());
                    warnings.push(format!(
                        "{kind}: no non-null model could be tested; selection p-value 0 is degenerate"
                    ));
                    selection.push(vec![
                        kind.label().into(),
                        null_id.into(),
                        Cell::opt_num(rows.iter().find(|r| r.family == Family::Null).and_then(|r| r.statistic.map(|s| s.value))),
                        config.permutations.into(),
                        0usize.into(),
                        0.0.into(),
                        0usize.into(),
                        "degenerate: null model only".into(),
                    ]);
                }
            }
        }
    }

    if mode == Mode::Select {
        write_table(&out_dir, "selection", &selection)?;
        report.push_str(&selection.to_text());
        report.push('\n');
    }
    if mode == Mode::Fit {
        fit_outputs(&config, &candidates, &dataset, &out_dir, &mut report, &mut warnings)?;
    }

    let mut effective = config.clone();
    effective.output_dir = None;
    effective.dataset = std::fs::canonicalize(&config.dataset).unwrap_or(config.dataset.clone());
    let effective_toml = effective.to_toml();
    write_file(&out_dir.join("effective_config.toml"), &effective_toml)?;
    write_provenance(
        &out_dir,
        &Provenance {
            tool: "permsel",
            version: env!("CARGO_PKG_VERSION"),
            command: mode.name(),
            seed: config.seed,
            permutations: config.permutations,
            statistics: config.statistics.iter().map(|s| s.label()).collect(),
            config_sha256: sha256_hex(effective_toml.as_bytes()),
            dataset_sha256: Some(sha256_hex(&raw)),
            effective_config: effective_toml,
        },
    )?;
    if !warnings.is_empty() {
        write_file(&out_dir.join("warnings.txt"), &(warnings.join("\n") + "\n"))?;
    }
    Ok(RunSummary {
        output_dir: out_dir,
        report,
        warnings,
    })
}

#[derive(Default)]
struct PermOutcome {
    /// `(model id, single-model result)` for each tested model.
    single: Vec<(String, PermTestResult)>,
    adjusted: Vec<f64>,
    best: Option<usize>,
    selection: Option<PermTestResult>,
}

/// Runs the shared permutation pass over every scored non-null model.
fn permutation_tests(
    rows: &[ScoreTableRow],
    candidates: &[Candidate],
    dataset: &TimeSeriesDataset,
    y: &[f64],
    criterion: &Criterion,
    set: &PermutationSet,
) -> Result<PermOutcome> {
    let mut ids = Vec::new();
    let mut models = Vec::new();
    // Config order, so results do not depend on the ranking.
    for c in candidates {
        let scored = rows.iter().any(|r| r.model_id == c.id && r.statistic.is_some());
        if c.spec.family == Family::Null || !scored {
            continue;
        }
        let md = build_design(&c.spec, dataset).map_err(core_err(&c.id))?;
        models.push(PreparedModel::new(&md.design, c.k_params).map_err(core_err(&c.id))?);
        ids.push(c.id.clone());
    }
    if models.is_empty() {
        return Ok(PermOutcome::default());
    }
    let run = run_permutations(&models, y, criterion, set).map_err(core_err("permutation test"))?;
    Ok(PermOutcome {
        single: ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, run.single(i, true)))
            .collect(),
        adjusted: run.westfall_young(),
        best: Some(run.best_model()),
        selection: Some(run.selection(true)),
    })
}

fn score_table(kind: StatisticKind, rows: &[ScoreTableRow], tests: &PermOutcome, mode: Mode) -> Table {
    let stat = kind.label();
    let delta = format!("delta_{stat}");
    let mut headers = vec!["rank", "model", "family", "k", "loglik", stat, delta.as_str()];
    if mode != Mode::Fit {
        headers.extend(["p_value", "p_adjusted", "failed_refits"]);
    }
    headers.push("note");
    let mut table = Table::new(format!("Scores by {stat}"), &headers);
    for (rank, r) in rows.iter().enumerate() {
        let mut cells = vec![
            if r.statistic.is_some() { (rank + 1).into() } else { Cell::Empty },
            r.model_id.clone().into(),
            r.family.label().into(),
            r.k_params.map_or(Cell::Empty, Cell::from),
            Cell::opt_num(r.loglik),
            Cell::opt_num(r.statistic.map(|s| s.value)),
            Cell::opt_num(r.delta_vs_null),
        ];
        if mode != Mode::Fit {
            let idx = tests.single.iter().position(|(id, _)| id == &r.model_id);
            cells.push(Cell::opt_num(r.p_value));
            cells.push(Cell::opt_num(idx.map(|i| tests.adjusted[i])));
            cells.push(idx.map_or(Cell::Empty, |i| tests.single[i].1.failed_refits.into()));
        }
        cells.push(match (&r.error, r.family) {
            (Some(e), _) => format!("error: {e}").into(),
            (None, Family::Null) => "null".into(),
            _ => Cell::Empty,
        });
        table.push(cells);
    }
    table
}

fn fit_outputs(
    config: &RunConfig,
    candidates: &[Candidate],
    dataset: &TimeSeriesDataset,
    out_dir: &Path,
    report: &mut String,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let mut coefficients = Table::new("Coefficients", &["model", "term", "estimate"]);
    let mut cooks = Table::new("Cook's distance", &["model", "year", "cooks_distance"]);
    let mut forecasts = Table::new(
        "Next-year forecasts",
        &[
            "model",
            "year",
            "origin_count",
            "mean",
            "q025",
            "q500",
            "q975",
            "bandwidth",
            "cv_ign_count",
        ],
    );
    for (index, c) in candidates.iter().enumerate() {
        let fitted = build_design(&c.spec, dataset).and_then(|md| {
            let fit = PreparedModel::new(&md.design, c.k_params)?.fit(&md.response)?;
            Ok((md, fit))
        });
        let (md, fit) = match fitted {
            Ok(v) => v,
            Err(_) => continue,
        };
        for (name, b) in md.column_names.iter().zip(&fit.coefficients) {
            coefficients.push(vec![c.id.clone().into(), name.clone().into(), (*b).into()]);
        }
        coefficients.push(vec![c.id.clone().into(), "sigma2".into(), fit.sigma2.into()]);
        match cooks_distance(&md.design, &md.response) {
            Ok(d) => {
                for (year, v) in md.years.iter().zip(d) {
                    cooks.push(vec![c.id.clone().into(), (*year).into(), v.into()]);
                }
            }
            Err(e) => warnings.push(format!("model {}: no Cook's distances: {e}", c.id)),
        }
        if let Some(fc) = &config.forecast {
            let last = dataset.len() - 1;
            let row = predictor_row(&c.spec, dataset, last).map_err(core_err(&c.id))?;
            let seed = derive_seed(config.seed, FORECAST_DOMAIN, index as u64);
            let f = monte_carlo_forecast(&fit, &row, dataset.counts()[last], fc.samples, seed)
                .map_err(core_err(&c.id))?;
            let f = permsel_core::PopulationForecast::new(f.samples, f.origin_count, fc.bandwidth)
                .map_err(core_err(&c.id))?;
            let mut sorted = f.samples.clone();
            sorted.sort_by(f64::total_cmp);
            let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
            let cv = if fc.cv {
                match loo_cv_mean_ignorance_counts(&md, dataset, fc.samples, seed, fc.bandwidth) {
                    Ok(v) => Cell::Num(v),
                    Err(e) => {
                        warnings.push(format!("model {}: no count-scale CV score: {e}", c.id));
                        Cell::Empty
                    }
                }
            } else {
                Cell::Empty
            };
            forecasts.push(vec![
                c.id.clone().into(),
                (dataset.years()[last] + 1).into(),
                f.origin_count.into(),
                (f.samples.iter().sum::<f64>() / f.samples.len() as f64).into(),
                q(0.025).into(),
                q(0.5).into(),
                q(0.975).into(),
                f.kde_bandwidth.into(),
                cv,
            ]);
        }
    }
    write_table(out_dir, "coefficients", &coefficients)?;
    write_table(out_dir, "cooks", &cooks)?;
    report.push_str(&coefficients.to_text());
    report.push('\n');
    if config.forecast.is_some() {
        write_table(out_dir, "forecasts", &forecasts)?;
        report.push_str(&forecasts.to_text());
        report.push('\n');
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOptions {
    pub grid: Vec<usize>,
    /// Predictor-pool sizes for the dependent case; empty for none.
    pub dependent_k: Vec<usize>,
    pub independent: bool,
    pub repeats: usize,
    pub n_outcomes: usize,
    pub alpha: f64,
    pub permutations: usize,
    pub seed: u64,
    pub statistic: StatisticKind,
    #[serde(skip)]
    pub output: PathBuf,
}

impl ExperimentOptions {
    pub fn cases(&self) -> Vec<ModelCase> {
        let mut cases = Vec::new();
        if self.independent {
            cases.extend(self.grid.iter().map(|&n| ModelCase::Independent { n_models: n }));
        }
        for &k in &self.dependent_k {
            let max = 1usize.checked_shl(k as u32).map_or(usize::MAX, |v| v - 1);
            cases.extend(
                self.grid
                    .iter()
                    .filter(|&&n| n <= max)
                    .map(|&n| ModelCase::Dependent { k, n_models: n }),
            );
        }
        cases
    }
}

pub fn run_experiment(options: &ExperimentOptions) -> Result<RunSummary> {
    let cases = options.cases();
    if cases.is_empty() {
        return Err(CliError::Usage("the grid selects no experiment cases".into()));
    }
    let base = Experiment1Config {
        n_outcomes: options.n_outcomes,
        repeats: options.repeats,
        alpha: options.alpha,
        permutations: options.permutations,
        case: cases[0],
        seed: options.seed,
        statistic: options.statistic,
    };
    let mut table = Table::new(
        format!("Experiment 1 ({}, R = {}, J = {})", options.statistic, options.repeats, options.permutations),
        &[
            "case",
            "k",
            "n_models",
            "naive_rejections",
            "naive_rate",
            "selection_rejections",
            "selection_rate",
            "band_low",
            "band_high",
        ],
    );
    for case in cases {
        let result = run_experiment1(&Experiment1Config { case, ..base.clone() }).map_err(core_err("experiment1"))?;
        let (name, k) = match case {
            ModelCase::Independent { .. } => ("independent", Cell::Empty),
            ModelCase::Dependent { k, .. } => ("dependent", k.into()),
        };
        table.push(vec![
            name.into(),
            k,
            case.n_models().into(),
            result.naive_rejections.into(),
            result.naive_reject_rate.into(),
            result.selection_rejections.into(),
            result.selection_test_reject_rate.into(),
            result.binomial_band.0.into(),
            result.binomial_band.1.into(),
        ]);
    }
    create_dir(&options.output)?;
    write_table(&options.output, "experiment1", &table)?;
    let effective = serde_json::to_string(options).expect("options serialize");
    write_provenance(
        &options.output,
        &Provenance {
            tool: "permsel",
            version: env!("CARGO_PKG_VERSION"),
            command: "experiment1",
            seed: options.seed,
            permutations: options.permutations,
            statistics: vec![options.statistic.label()],
            config_sha256: sha256_hex(effective.as_bytes()),
            dataset_sha256: None,
            effective_config: effective,
        },
    )?;
    Ok(RunSummary {
        output_dir: options.output.clone(),
        report: table.to_text(),
        warnings: Vec::new(),
    })
}
