mod common;

use permsel_core::popmodel::{build_design, predictor_row, Candidate, Family, ModelSpec, DENSITY_TERM};
use permsel_core::scoring::{
    build_score_table, ignorance, loo_cv_mean_ignorance, loo_cv_mean_ignorance_counts,
    loo_cv_mean_ignorance_for, Criterion, PreparedModel, StatisticKind,
};
use permsel_core::stats::DesignMatrix;
use permsel_core::synthetic;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn loo_shortcut_matches_explicit_refits(
        n in 6usize..14,
        k in 0usize..3,
        seed in any::<u64>(),
    ) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let columns: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| draw()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| draw()).collect();
        let rows = if k == 0 { vec![vec![1.0]; n] } else { common::rows_with_intercept(&columns) };
        let got = loo_cv_mean_ignorance(&DesignMatrix::from_rows(&rows).unwrap(), &y).unwrap();
        let oracle = common::loo_ignorance(&rows, &y);
        prop_assert!((got - oracle).abs() < 1e-9 * (1.0 + oracle.abs()), "{} vs {}", got, oracle);
    }
}

#[test]
fn equal_k_ranking_by_aic_is_ranking_by_loglik() {
    let ds = synthetic::reindeer_like(3, 35, &[("a", 0.1)]).unwrap();
    let models: Vec<Candidate> = ["a", "b", "c", "d", "e", "f", "g", "h"]
        .iter()
        .map(|c| Candidate::new(*c, ModelSpec::new(Family::Ricker).with_covariate(*c)))
        .collect();
    let by = |kind| -> Vec<String> {
        build_score_table(&models, &ds, &Criterion::new(kind))
            .unwrap()
            .into_iter()
            .filter(|r| r.family != Family::Null)
            .map(|r| r.model_id)
            .collect()
    };
    assert_eq!(by(StatisticKind::Aic), by(StatisticKind::NegLogLik));
    assert_eq!(by(StatisticKind::Aicc), by(StatisticKind::NegLogLik));
}

#[test]
fn ignorance_is_proper_in_sample() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let ys: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let scores = |mean: f64, var: f64| -> Vec<f64> {
        ys.iter()
            .map(|y| {
                let d = (-(y - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                ignorance(d).unwrap()
            })
            .collect()
    };
    let truth = scores(0.0, 1.0);
    for (mean, var) in [(0.5, 1.0), (0.0, 4.0)] {
        let other = scores(mean, var);
        // Paired differences: the true forecast must win by 3 standard errors.
        let diffs: Vec<f64> = other.iter().zip(&truth).map(|(o, t)| o - t).collect();
        let n = diffs.len() as f64;
        let m = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(m > 3.0 * sd / n.sqrt(), "N({mean},{var}): mean diff {m}, se {}", sd / n.sqrt());
    }
}

#[test]
fn single_null_model_table() {
    let ds = synthetic::null_dataset(1, 20, 0).unwrap();
    let rows = build_score_table(
        &[Candidate::new("M0", ModelSpec::null())],
        &ds,
        &Criterion::new(StatisticKind::Aic),
    )
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].delta_vs_null, Some(0.0));
}

#[test]
fn null_model_against_itself_has_zero_delta_for_cv() {
    let ds = synthetic::null_dataset(9, 25, 1).unwrap();
    let rows = build_score_table(&[], &ds, &Criterion::new(StatisticKind::CvMeanIgnorance)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].model_id, "M0");
    assert_eq!(rows[0].delta_vs_null, Some(0.0));
    let direct = loo_cv_mean_ignorance_for(&ModelSpec::null(), &ds).unwrap();
    assert_eq!(rows[0].statistic.unwrap().value, direct);
}

#[test]
fn nested_model_never_has_higher_loglik() {
    for seed in 0..20 {
        let ds = synthetic::null_dataset(seed, 25, 2).unwrap();
        let small = Candidate::new("small", ModelSpec::new(Family::Ricker).with_covariate("x1"));
        let big = Candidate::new(
            "big",
            ModelSpec::new(Family::Ricker).with_covariate("x1").with_covariate("x2"),
        );
        let rows = build_score_table(&[small, big], &ds, &Criterion::new(StatisticKind::Aic)).unwrap();
        let ll = |id: &str| rows.iter().find(|r| r.model_id == id).unwrap().loglik.unwrap();
        assert!(ll("small") <= ll("big") + 1e-12);
    }
}

#[test]
fn failed_models_are_marked_not_fatal() {
    let ds = synthetic::null_dataset(2, 12, 1).unwrap();
    let ok = Candidate::new("ok", ModelSpec::new(Family::Ricker).with_covariate("x1"));
    let missing = Candidate::new("missing", ModelSpec::new(Family::Ricker).with_covariate("nope"));
    let rows = build_score_table(&[missing, ok], &ds, &Criterion::new(StatisticKind::Aicc)).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.last().unwrap().model_id, "missing");
    assert!(rows.last().unwrap().error.as_deref().unwrap().contains("nope"));
}

/// Hand-built rows for an ibex candidate, independent of `build_design`.
fn oracle_rows(spec: &ModelSpec, counts: &[f64], snow: &[f64], temp: &[f64]) -> Vec<Vec<f64>> {
    (0..counts.len() - 1)
        .map(|t| {
            let dens = if spec.family == Family::Gompertz { counts[t].ln() } else { counts[t] };
            let cov = |name: &str| match name {
                "snow" => snow[t],
                "temp" => temp[t],
                _ => dens,
            };
            let mut r = vec![1.0];
            if spec.include_density {
                r.push(dens);
            }
            r.extend(spec.covariates.iter().map(|c| cov(c)));
            r.extend(spec.interactions.iter().map(|(a, b)| cov(a) * cov(b)));
            r
        })
        .collect()
}

#[test]
fn ibex_shaped_table_matches_recomputation() {
    let ds = synthetic::ibex_like(7).unwrap();
    let counts = ds.counts().to_vec();
    let snow = ds.covariate("snow").unwrap().to_vec();
    let temp = ds.covariate("temp").unwrap().to_vec();
    let y: Vec<f64> = counts.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let cands = synthetic::ibex_candidates();

    for (kind, oracle) in [
        (StatisticKind::Aic, common::aic as fn(&[Vec<f64>], &[f64]) -> f64),
        (StatisticKind::Aicc, common::aicc),
        (StatisticKind::CvMeanIgnorance, common::loo_ignorance),
    ] {
        let table = build_score_table(&cands, &ds, &Criterion::new(kind)).unwrap();
        assert_eq!(table.len(), 21);
        let null_value = oracle(&vec![vec![1.0]; y.len()], &y);
        let mut expected: Vec<(String, f64)> = cands
            .iter()
            .map(|c| (c.id.clone(), oracle(&oracle_rows(&c.spec, &counts, &snow, &temp), &y) - null_value))
            .collect();
        expected.push(("M0".into(), 0.0));
        expected.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        for (row, (id, delta)) in table.iter().zip(&expected) {
            assert_eq!(&row.model_id, id, "{kind}");
            assert!((row.delta_vs_null.unwrap() - delta).abs() < 1e-7, "{kind} {id}");
        }
        // Sorted ascending.
        assert!(table.windows(2).all(|w| w[0].statistic.unwrap().value <= w[1].statistic.unwrap().value));
    }
}

#[test]
fn informative_covariate_wins_against_null() {
    let ds = synthetic::ibex_like(11).unwrap();
    let spec = ModelSpec::new(Family::Ricker)
        .with_density()
        .with_covariate("snow")
        .with_interaction(DENSITY_TERM, "snow");
    let md = build_design(&spec, &ds).unwrap();
    let model = PreparedModel::new(&md.design, None).unwrap();
    let null = PreparedModel::new(&DesignMatrix::intercept(md.response.len()).unwrap(), None).unwrap();
    for kind in [StatisticKind::Aic, StatisticKind::CvMeanIgnorance] {
        let c = Criterion::new(kind);
        assert!(model.statistic(&md.response, &c).unwrap() < null.statistic(&md.response, &c).unwrap());
    }
}

#[test]
fn count_scale_cv_differs_from_growth_scale_by_jacobian() {
    // p_count(n') = p_R(ln(n'/n)) / n', so per fold the count-scale ignorance
    // is the growth-scale one plus log2(n'); Monte Carlo and KDE add noise.
    let ds = synthetic::ibex_like(5).unwrap();
    let spec = ModelSpec::new(Family::Gompertz).with_density().with_covariate("snow");
    let md = build_design(&spec, &ds).unwrap();
    let growth = loo_cv_mean_ignorance(&md.design, &md.response).unwrap();
    let jacobian: f64 = ds.counts()[1..].iter().map(|c| c.log2()).sum::<f64>() / md.response.len() as f64;
    let counts = loo_cv_mean_ignorance_counts(&md, &ds, 20_000, 3, None).unwrap();
    assert!((counts - (growth + jacobian)).abs() < 0.05, "{counts} vs {}", growth + jacobian);

    // The forecast row for the final year exists even though its outcome does not.
    let last = predictor_row(&spec, &ds, ds.len() - 1).unwrap();
    assert_eq!(last.len(), md.design.cols());
}
