//! Permutation tests for model selection statistics.
//!
//! Outcomes are shuffled by derangements (no outcome stays in its original
//! position) while predictors stay fixed. Three tests share one engine:
//!
//! * the single-model test compares a model's statistic `M` with its values
//!   `M~_j` under `J` derangements, `p = #{j : M~_j < M} / J`;
//! * the model-selection test compares the best (smallest) statistic over all
//!   candidates with the best statistic under each derangement, the same
//!   derangement being applied to every model;
//! * Westfall-Young adjusted p-values, the fraction of derangements in which
//!   the smallest per-model p-value falls below a model's observed p-value.
//!
//! Each derangement is drawn from its own RNG substream, so results are
//! identical whatever the degree of parallelism.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::scoring::{Criterion, PreparedModel};

/// Relative tolerance under which two statistics count as tied. Statistics
/// that are invariant under permutation in exact arithmetic (the null model's,
/// for one) differ in the last bits once the summation order changes.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Whether `candidate` is strictly better (smaller) than `reference`, ties
/// within [`TIE_TOLERANCE`] excluded.
pub fn beats(candidate: f64, reference: f64) -> bool {
    if reference.is_infinite() {
        return candidate < reference;
    }
    candidate < reference - TIE_TOLERANCE * reference.abs().max(1.0)
}

/// A fixed-point-free permutation, stored 0-based: position `i` receives the
/// outcome originally at `mapping[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Derangement(Vec<usize>);

impl Derangement {
    /// Validates that `mapping` is a bijection on `0..n` without fixed points.
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        if n < 2 {
            return Err(Error::NoDerangement(n));
        }
        let mut seen = vec![false; n];
        for (i, &m) in mapping.iter().enumerate() {
            if m >= n || seen[m] {
                return Err(Error::InvalidArgument(format!("{mapping:?} is not a permutation")));
            }
            if m == i {
                return Err(Error::InvalidArgument(format!("{mapping:?} fixes position {i}")));
            }
            seen[m] = true;
        }
        Ok(Self(mapping))
    }

    pub fn mapping(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-based image, as usually written.
    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|m| m + 1).collect()
    }

    pub fn apply<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.0.iter().map(|&m| values[m]).collect()
    }

    fn apply_into(&self, values: &[f64], out: &mut [f64]) {
        for (o, &m) in out.iter_mut().zip(&self.0) {
            *o = values[m];
        }
    }
}

/// Uniform random derangement of size `n`, by rejection of uniform
/// permutations.
pub fn random_derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Derangement> {
    if n < 2 {
        return Err(Error::NoDerangement(n));
    }
    let mut mapping: Vec<usize> = (0..n).collect();
    loop {
        mapping.shuffle(rng);
        if mapping.iter().enumerate().all(|(i, &m)| i != m) {
            return Ok(Derangement(mapping));
        }
    }
}

/// Every derangement of size `n`, in lexicographic order. Grows like `n!/e`.
pub fn all_derangements(n: usize) -> Result<Vec<Derangement>> {
    if n < 2 {
        return Err(Error::NoDerangement(n));
    }
    fn extend(pos: usize, used: &mut [bool], cur: &mut Vec<usize>, out: &mut Vec<Derangement>) {
        let n = used.len();
        if pos == n {
            out.push(Derangement(cur.clone()));
            return;
        }
        for m in 0..n {
            if m != pos && !used[m] {
                used[m] = true;
                cur.push(m);
                extend(pos + 1, used, cur, out);
                cur.pop();
                used[m] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(0, &mut vec![false; n], &mut Vec::with_capacity(n), &mut out);
    Ok(out)
}

/// The derangements a test is run over.
#[derive(Debug, Clone, PartialEq)]
pub enum PermutationSet {
    /// `count` derangements drawn independently (with replacement); the
    /// `j`-th comes from RNG substream `j` of `seed`.
    Random { count: usize, seed: u64 },
    /// An explicit list, e.g. every derangement for exact enumeration.
    Explicit(Vec<Derangement>),
}

impl PermutationSet {
    pub fn random(count: usize, seed: u64) -> Self {
        PermutationSet::Random { count, seed }
    }

    pub fn exhaustive(n: usize) -> Result<Self> {
        Ok(PermutationSet::Explicit(all_derangements(n)?))
    }

    pub fn len(&self) -> usize {
        match self {
            PermutationSet::Random { count, .. } => *count,
            PermutationSet::Explicit(list) => list.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            PermutationSet::Random { seed, .. } => Some(*seed),
            PermutationSet::Explicit(_) => None,
        }
    }

    /// The `j`-th derangement of size `n`.
    pub fn get(&self, j: usize, n: usize) -> Result<Derangement> {
        match self {
            PermutationSet::Random { seed, .. } => {
                random_derangement(n, &mut rng::substream(*seed, j as u64))
            }
            PermutationSet::Explicit(list) => {
                let d = list[j].clone();
                if d.len() != n {
                    return Err(Error::LengthMismatch {
                        what: "derangement",
                        expected: n,
                        actual: d.len(),
                    });
                }
                Ok(d)
            }
        }
    }
}

/// Outcome of a permutation test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermTestResult {
    pub observed_stat: f64,
    /// `J`, the number of derangements evaluated.
    pub permutations: usize,
    /// Derangements whose statistic is strictly smaller than the observed one
    /// (see [`beats`]).
    pub exceed_count: usize,
    /// `exceed_count / permutations`.
    pub p_value: f64,
    pub seed: Option<u64>,
    /// Statistic under each derangement, in derangement order, when requested.
    pub per_perm_stats: Option<Vec<f64>>,
    /// Refits that failed under a derangement; these never count as exceeding.
    pub failed_refits: usize,
}

impl PermTestResult {
    fn from_stats(observed: f64, stats: &[f64], seed: Option<u64>, failed: usize, keep: bool) -> Self {
        let exceed_count = stats.iter().filter(|&&s| beats(s, observed)).count();
        let permutations = stats.len();
        Self {
            observed_stat: observed,
            permutations,
            exceed_count,
            p_value: exceed_count as f64 / permutations as f64,
            seed,
            per_perm_stats: keep.then(|| stats.to_vec()),
            failed_refits: failed,
        }
    }

    /// `(exceed_count + 1) / (J + 1)`.
    pub fn p_value_add_one(&self) -> f64 {
        (self.exceed_count + 1) as f64 / (self.permutations + 1) as f64
    }

    pub fn reported_p(&self, add_one: bool) -> f64 {
        if add_one {
            self.p_value_add_one()
        } else {
            self.p_value
        }
    }
}

/// Statistics of every model under the original ordering and under each
/// derangement of a shared permutation set.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationRun {
    /// Observed statistic per model.
    pub observed: Vec<f64>,
    /// `permuted[j][i]`: model `i` under derangement `j`; `+inf` when the
    /// refit failed.
    pub permuted: Vec<Vec<f64>>,
    /// Failed refits per model.
    pub failed: Vec<usize>,
    pub seed: Option<u64>,
}

/// Evaluates all models on the original outcomes and on every derangement in
/// `set`.
///
/// Errors from the original ordering propagate; a failed refit under a
/// derangement is recorded as `+inf`, so it can never beat the observed value.
pub fn run_permutations(
    models: &[PreparedModel],
    y: &[f64],
    criterion: &Criterion,
    set: &PermutationSet,
) -> Result<PermutationRun> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no models to test".into()));
    }
    if set.is_empty() {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::NoDerangement(n));
    }
    let observed = models
        .iter()
        .map(|m| m.statistic(y, criterion))
        .collect::<Result<Vec<_>>>()?;

    let permuted = (0..set.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, j| -> Result<Vec<f64>> {
                set.get(j, n)?.apply_into(y, buf);
                Ok(models
                    .iter()
                    .map(|m| m.statistic(buf, criterion).unwrap_or(f64::INFINITY))
                    .collect())
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let failed = (0..models.len())
        .map(|i| permuted.iter().filter(|row| row[i] == f64::INFINITY).count())
        .collect();
    Ok(PermutationRun {
        observed,
        permuted,
        failed,
        seed: set.seed(),
    })
}

impl PermutationRun {
    pub fn n_models(&self) -> usize {
        self.observed.len()
    }

    pub fn n_permutations(&self) -> usize {
        self.permuted.len()
    }

    fn column(&self, model: usize) -> Vec<f64> {
        self.permuted.iter().map(|row| row[model]).collect()
    }

    /// Single-model test for model `model`.
    pub fn single(&self, model: usize, keep_stats: bool) -> PermTestResult {
        PermTestResult::from_stats(
            self.observed[model],
            &self.column(model),
            self.seed,
            self.failed[model],
            keep_stats,
        )
    }

    /// Index of the model with the smallest observed statistic (first on ties).
    pub fn best_model(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.observed.iter().enumerate() {
            if *v < self.observed[best] {
                best = i;
            }
        }
        best
    }

    /// Model-selection test: best observed statistic against the best
    /// statistic under each derangement.
    pub fn selection(&self, keep_stats: bool) -> PermTestResult {
        let observed_min = self.observed[self.best_model()];
        let mins: Vec<f64> = self
            .permuted
            .iter()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let failed = mins.iter().filter(|&&m| m == f64::INFINITY).count();
        PermTestResult::from_stats(observed_min, &mins, self.seed, failed, keep_stats)
    }

    /// Westfall-Young adjusted p-value for each model.
    ///
    /// Under derangement `j`, model `i` gets the p-value its permuted statistic
    /// would have against the full permutation distribution,
    /// `P_{j,i} = #{j' : M~_{j',i} < M~_{j,i}} / J`. The adjusted p-value of
    /// model `i` is the fraction of derangements with `min_i P_{j,i} < p_i`.
    pub fn westfall_young(&self) -> Vec<f64> {
        let j_total = self.n_permutations();
        let m = self.n_models();
        let raw: Vec<f64> = (0..m).map(|i| self.single(i, false).p_value).collect();
        let sorted: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut c = self.column(i);
                c.sort_by(f64::total_cmp);
                c
            })
            .collect();
        let min_p: Vec<f64> = self
            .permuted
            .iter()
            .map(|row| {
                (0..m)
                    .map(|i| {
                        let below = sorted[i].partition_point(|&s| beats(s, row[i]));
                        below as f64 / j_total as f64
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        raw.iter()
            .map(|&p| min_p.iter().filter(|&&q| q < p).count() as f64 / j_total as f64)
            .collect()
    }
}

/// Permutation test of one model's statistic.
pub fn single_model_perm_test(
    model: &PreparedModel,
    y: &[f64],
    criterion: &Criterion,
    set: &PermutationSet,
    keep_stats: bool,
) -> Result<PermTestResult> {
    let run = run_permutations(std::slice::from_ref(model), y, criterion, set)?;
    Ok(run.single(0, keep_stats))
}

/// Permutation test of the whole selection procedure over `models`.
pub fn selection_perm_test(
    models: &[PreparedModel],
    y: &[f64],
    criterion: &Criterion,
    set: &PermutationSet,
    keep_stats: bool,
) -> Result<PermTestResult> {
    Ok(run_permutations(models, y, criterion, set)?.selection(keep_stats))
}

/// Westfall-Young adjusted p-values over `models`, one per model.
pub fn westfall_young_adjusted(
    models: &[PreparedModel],
    y: &[f64],
    criterion: &Criterion,
    set: &PermutationSet,
) -> Result<Vec<f64>> {
    Ok(run_permutations(models, y, criterion, set)?.westfall_young())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::StatisticKind;
    use crate::stats::DesignMatrix;

    #[test]
    fn size_two_has_one_derangement() {
        for j in 0..20 {
            let d = PermutationSet::random(20, 3).get(j, 2).unwrap();
            assert_eq!(d.one_based(), vec![2, 1]);
        }
    }

    #[test]
    fn size_three_derangements_are_the_two_cycles() {
        let all: Vec<Vec<usize>> = all_derangements(3).unwrap().iter().map(|d| d.one_based()).collect();
        assert_eq!(all, vec![vec![2, 3, 1], vec![3, 1, 2]]);
        for j in 0..50 {
            let d = PermutationSet::random(50, 11).get(j, 3).unwrap();
            assert!(all.contains(&d.one_based()));
        }
    }

    #[test]
    fn derangement_counts() {
        // subfactorials
        for (n, count) in [(2, 1), (3, 2), (4, 9), (5, 44), (6, 265)] {
            assert_eq!(all_derangements(n).unwrap().len(), count);
        }
        assert_eq!(all_derangements(1), Err(Error::NoDerangement(1)));
        assert_eq!(
            random_derangement(0, &mut rng::substream(0, 0)),
            Err(Error::NoDerangement(0))
        );
    }

    #[test]
    fn derangement_validation() {
        assert!(Derangement::new(vec![1, 0]).is_ok());
        assert!(Derangement::new(vec![0, 1]).is_err());
        assert!(Derangement::new(vec![1, 1]).is_err());
        let d = Derangement::new(vec![2, 0, 1]).unwrap();
        assert_eq!(d.apply(&[10, 20, 30]), vec![30, 10, 20]);
    }

    fn null_model(n: usize) -> PreparedModel {
        PreparedModel::new(&DesignMatrix::intercept(n).unwrap(), None).unwrap()
    }

    #[test]
    fn null_model_p_value_is_zero() {
        let y = [0.3, -1.2, 0.8, 2.0, -0.1, 0.4];
        for kind in StatisticKind::ALL {
            let r = single_model_perm_test(
                &null_model(6),
                &y,
                &Criterion::new(kind),
                &PermutationSet::random(200, 1),
                false,
            )
            .unwrap();
            assert_eq!(r.exceed_count, 0, "{kind}");
            assert_eq!(r.p_value, 0.0);
            assert_eq!(r.permutations, 200);
        }
    }

    #[test]
    fn single_model_and_one_model_selection_agree() {
        let x = [0.1, 0.9, -0.4, 1.3, 0.2, -1.1, 0.6, 0.0];
        let y = [0.5, 1.0, -0.2, 1.1, 0.1, -0.7, 0.2, 0.3];
        let d = DesignMatrix::from_columns(&[vec![1.0; 8], x.to_vec()]).unwrap();
        let m = PreparedModel::new(&d, None).unwrap();
        let set = PermutationSet::random(300, 5);
        let c = Criterion::new(StatisticKind::Aicc);
        let a = single_model_perm_test(&m, &y, &c, &set, true).unwrap();
        let b = selection_perm_test(std::slice::from_ref(&m), &y, &c, &set, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(westfall_young_adjusted(std::slice::from_ref(&m), &y, &c, &set).unwrap(), vec![a.p_value]);
    }

    #[test]
    fn add_one_convention() {
        let r = PermTestResult::from_stats(1.0, &[0.5, 2.0, 0.9, 1.0], Some(1), 0, false);
        assert_eq!(r.exceed_count, 2);
        assert_eq!(r.p_value, 0.5);
        assert_eq!(r.p_value_add_one(), 0.6);
        assert_eq!(r.reported_p(false), 0.5);
    }
}
