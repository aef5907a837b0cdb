//! Association scores, effect size, and one-sided permutation p-values.
//!
//! Every permutation statistic used here reduces to a subset sum. For target
//! permutations the values are the 2m association scores of X∪Y and a split
//! (X', Y') has statistic `(2·Σ_{X'} s − Σ s) / m`; for attribute permutations
//! the values are `c_k = Σ_x cos(x, k) − Σ_y cos(y, k)` over A∪B and a split
//! (A', B') has statistic `(2·Σ_{A'} c − Σ c) / m`. Either way the p-value only
//! needs the ordering of subset sums of a fixed size against the identity split.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, EmbeddingError};
use crate::lexicon::{AuditEntry, ResolvedTest, SetRole};
use crate::parallel;

#[derive(Debug, Error)]
pub enum WeatError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("target sets differ in size ({0} vs {1})")]
    UnequalTargets(usize, usize),
    #[error("attribute sets differ in size ({0} vs {1})")]
    UnequalAttributes(usize, usize),
    #[error("{0} must not be empty")]
    EmptySet(&'static str),
    #[error("effect size needs at least 2 words per target set, got {0}")]
    TooFewTargets(usize),
    #[error("all association scores are equal; standard deviation is zero")]
    DegenerateSpread,
    #[error("{partitions} partitions exceed the exact-enumeration limit of {max}; use Monte Carlo")]
    TooManyPartitions { partitions: u64, max: u64 },
    #[error("Monte Carlo needs at least {min} draws, got {got}")]
    TooFewDraws { got: u64, min: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    #[default]
    Geq,
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    Exact,
    Mc,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationAxis {
    /// Equal splits of X∪Y.
    #[default]
    Target,
    /// Equal splits of A∪B.
    Attribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Mc,
}

macro_rules! display_as_serde {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(v.as_str().unwrap_or_default())
            }
        }
    )*};
}
display_as_serde!(
    StdConvention,
    Comparator,
    PermutationMode,
    PermutationAxis,
    Method
);

pub const DEFAULT_DRAWS: u64 = 100_000;
pub const DEFAULT_MAX_EXACT_PARTITIONS: u64 = 1_000_000;
pub const MIN_MC_DRAWS: u64 = 1_000;

/// Sums within this fraction of Σ|v| of the observed sum count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub mode: PermutationMode,
    pub comparator: Comparator,
    pub draws: u64,
    pub seed: u64,
    pub max_exact_partitions: u64,
    pub axis: PermutationAxis,
}

impl Default for PermutationPlan {
    fn default() -> Self {
        PermutationPlan {
            mode: PermutationMode::Auto,
            comparator: Comparator::Geq,
            draws: DEFAULT_DRAWS,
            seed: 0,
            max_exact_partitions: DEFAULT_MAX_EXACT_PARTITIONS,
            axis: PermutationAxis::Target,
        }
    }
}

impl PermutationPlan {
    /// Method used for a permutation pool of `2 * half` elements.
    pub fn method_for(&self, half: usize) -> Method {
        match self.mode {
            PermutationMode::Exact => Method::Exact,
            PermutationMode::Mc => Method::Mc,
            PermutationMode::Auto => {
                if binomial(2 * half as u64, half as u64) <= self.max_exact_partitions {
                    Method::Exact
                } else {
                    Method::Mc
                }
            }
        }
    }
}

/// C(n, k), saturating at `u64::MAX`.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// s(w, A, B) = Σ_a cos(w, a) − Σ_b cos(w, b).
pub fn association<W, V>(w: &W, a: &[V], b: &[V]) -> Result<f64, WeatError>
where
    W: AsRef<[f64]> + ?Sized,
    V: AsRef<[f64]>,
{
    if a.len() != b.len() {
        return Err(WeatError::UnequalAttributes(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(WeatError::EmptySet("attribute set"));
    }
    let w = w.as_ref();
    let mut pos = 0.0;
    for v in a {
        pos += cosine(w, v.as_ref())?;
    }
    let mut neg = 0.0;
    for v in b {
        neg += cosine(w, v.as_ref())?;
    }
    Ok(pos - neg)
}

fn check_sets<V>(x: &[V], y: &[V], a: &[V], b: &[V]) -> Result<(), WeatError> {
    if x.len() != y.len() {
        return Err(WeatError::UnequalTargets(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(WeatError::EmptySet("target set"));
    }
    if a.len() != b.len() {
        return Err(WeatError::UnequalAttributes(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(WeatError::EmptySet("attribute set"));
    }
    Ok(())
}

/// Association scores of X followed by Y.
pub fn target_scores<V: AsRef<[f64]>>(
    x: &[V],
    y: &[V],
    a: &[V],
    b: &[V],
) -> Result<(Vec<f64>, Vec<f64>), WeatError> {
    check_sets(x, y, a, b)?;
    let score =
        |set: &[V]| -> Result<Vec<f64>, WeatError> { set.iter().map(|w| association(w, a, b)).collect() };
    Ok((score(x)?, score(y)?))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_dev(values: &[f64], convention: StdConvention) -> f64 {
    let mu = mean(values);
    let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
    let denom = match convention {
        StdConvention::Population => values.len(),
        StdConvention::Sample => values.len() - 1,
    };
    (ss / denom as f64).sqrt()
}

/// mean(s over X) − mean(s over Y): the permutation-test statistic.
pub fn differential<V: AsRef<[f64]>>(x: &[V], y: &[V], a: &[V], b: &[V]) -> Result<f64, WeatError> {
    let (sx, sy) = target_scores(x, y, a, b)?;
    Ok(mean(&sx) - mean(&sy))
}

/// Effect size from precomputed association scores.
pub fn effect_size_from_scores(sx: &[f64], sy: &[f64], convention: StdConvention) -> Result<f64, WeatError> {
    if sx.len() != sy.len() {
        return Err(WeatError::UnequalTargets(sx.len(), sy.len()));
    }
    if sx.len() < 2 {
        return Err(WeatError::TooFewTargets(sx.len()));
    }
    let all: Vec<f64> = sx.iter().chain(sy).copied().collect();
    let sigma = std_dev(&all, convention);
    let scale = all.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    // a spread at rounding level means the scores are equal
    if sigma.is_nan() || sigma <= 4.0 * f64::EPSILON * (1.0 + scale) {
        return Err(WeatError::DegenerateSpread);
    }
    Ok((mean(sx) - mean(sy)) / sigma)
}

pub fn effect_size<V: AsRef<[f64]>>(
    x: &[V],
    y: &[V],
    a: &[V],
    b: &[V],
    convention: StdConvention,
) -> Result<f64, WeatError> {
    let (sx, sy) = target_scores(x, y, a, b)?;
    effect_size_from_scores(&sx, &sy, convention)
}

/// Pool of values whose equal-size subsets are ranked against the identity
/// split (the first `half` values).
#[derive(Debug, Clone)]
pub struct SplitPool {
    values: Vec<f64>,
    half: usize,
    observed: f64,
    tie: f64,
}

fn ordered_sum(values: &[f64], chosen: impl Iterator<Item = usize>) -> f64 {
    chosen.fold(0.0, |acc, i| acc + values[i])
}

impl SplitPool {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(
            values.len().is_multiple_of(2) && !values.is_empty(),
            "pool needs an even, nonzero size"
        );
        let half = values.len() / 2;
        let observed = ordered_sum(&values, 0..half);
        let tie = TIE_TOLERANCE * values.iter().map(|v| v.abs()).sum::<f64>();
        SplitPool {
            values,
            half,
            observed,
            tie,
        }
    }

    /// Target-axis pool: association scores of X then Y.
    pub fn from_scores(sx: &[f64], sy: &[f64]) -> Self {
        SplitPool::new(sx.iter().chain(sy).copied().collect())
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub fn partitions(&self) -> u64 {
        binomial(self.values.len() as u64, self.half as u64)
    }

    fn counts(&self, sum: f64, comparator: Comparator) -> bool {
        match comparator {
            Comparator::Geq => sum >= self.observed - self.tie,
            Comparator::Gt => sum > self.observed + self.tie,
        }
    }

    /// Enumerates every equal split. Returns (p, number of partitions).
    pub fn exact(&self, comparator: Comparator, max_partitions: u64) -> Result<(f64, u64), WeatError> {
        let total = self.partitions();
        if total > max_partitions {
            return Err(WeatError::TooManyPartitions {
                partitions: total,
                max: max_partitions,
            });
        }
        let n = self.values.len();
        let k = self.half;
        let hits = parallel::sum_range(0..total, 4096, |ranks| {
            let mut combo = unrank_combination(n, k, ranks.start);
            let mut hits = 0u64;
            for _ in ranks {
                let sum = ordered_sum(&self.values, combo.iter().copied());
                hits += u64::from(self.counts(sum, comparator));
                next_combination(&mut combo, n);
            }
            hits
        });
        Ok((hits as f64 / total as f64, total))
    }

    /// Samples `draws` uniform equal splits; draw `i` uses its own ChaCha stream
    /// so the result is independent of scheduling. Returns (p, standard error).
    pub fn monte_carlo(
        &self,
        draws: u64,
        seed: u64,
        comparator: Comparator,
    ) -> Result<(f64, f64), WeatError> {
        if draws < MIN_MC_DRAWS {
            return Err(WeatError::TooFewDraws {
                got: draws,
                min: MIN_MC_DRAWS,
            });
        }
        let n = self.values.len();
        let k = self.half;
        let hits = parallel::sum_range(0..draws, 1024, |range| {
            let mut mask = vec![false; n];
            let mut hits = 0u64;
            for draw in range {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(draw);
                mask.iter_mut().for_each(|m| *m = false);
                for i in rand::seq::index::sample(&mut rng, n, k) {
                    mask[i] = true;
                }
                let sum = ordered_sum(&self.values, (0..n).filter(|&i| mask[i]));
                hits += u64::from(self.counts(sum, comparator));
            }
            hits
        });
        let p = (1 + hits) as f64 / (1 + draws) as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        Ok((p, se))
    }
}

/// Lexicographic combination of rank `rank` among the k-subsets of 0..n.
fn unrank_combination(n: usize, k: usize, mut rank: u64) -> Vec<usize> {
    let mut combo = Vec::with_capacity(k);
    let mut next = 0usize;
    for slot in 0..k {
        loop {
            let remaining = binomial((n - next - 1) as u64, (k - slot - 1) as u64);
            if rank < remaining {
                break;
            }
            rank -= remaining;
            next += 1;
        }
        combo.push(next);
        next += 1;
    }
    combo
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact one-sided p-value over all equal splits of X∪Y.
pub fn exact_p_value<V: AsRef<[f64]>>(
    x: &[V],
    y: &[V],
    a: &[V],
    b: &[V],
    comparator: Comparator,
    max_partitions: u64,
) -> Result<(f64, u64), WeatError> {
    let (sx, sy) = target_scores(x, y, a, b)?;
    SplitPool::from_scores(&sx, &sy).exact(comparator, max_partitions)
}

/// Monte Carlo p-value over equal splits of X∪Y with add-one smoothing.
pub fn mc_p_value<V: AsRef<[f64]>>(
    x: &[V],
    y: &[V],
    a: &[V],
    b: &[V],
    draws: u64,
    seed: u64,
    comparator: Comparator,
) -> Result<(f64, f64), WeatError> {
    let (sx, sy) = target_scores(x, y, a, b)?;
    SplitPool::from_scores(&sx, &sy).monte_carlo(draws, seed, comparator)
}

/// Attribute-axis pool: `c_k = Σ_x cos(x, k) − Σ_y cos(y, k)` for k in A then B.
pub fn attribute_pool<V: AsRef<[f64]>>(x: &[V], y: &[V], a: &[V], b: &[V]) -> Result<SplitPool, WeatError> {
    check_sets(x, y, a, b)?;
    let mut values = Vec::with_capacity(a.len() + b.len());
    for k in a.iter().chain(b) {
        let mut c = 0.0;
        for w in x {
            c += cosine(w.as_ref(), k.as_ref())?;
        }
        for w in y {
            c -= cosine(w.as_ref(), k.as_ref())?;
        }
        values.push(c);
    }
    Ok(SplitPool::new(values))
}

#[derive(Debug, Clone, Serialize)]
pub struct WordScore {
    pub token: String,
    pub set: SetRole,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeatResult {
    pub test_name: String,
    pub effect_size_d: f64,
    pub p_value: f64,
    pub statistic_observed: f64,
    pub m: usize,
    pub n: usize,
    pub method: Method,
    pub partitions_or_draws: u64,
    pub mc_standard_error: Option<f64>,
    pub seed: u64,
    pub balance_seed: u64,
    pub comparator: Comparator,
    pub axis: PermutationAxis,
    pub axis_note: String,
    pub std_convention: StdConvention,
    pub per_word_scores: Vec<WordScore>,
    pub audit: Vec<AuditEntry>,
    pub warnings: Vec<String>,
}

fn axis_note(axis: PermutationAxis) -> String {
    match axis {
        PermutationAxis::Target => {
            "p permutes equal splits of the target words X∪Y; axis=attribute permutes A∪B instead and may differ"
        }
        PermutationAxis::Attribute => {
            "p permutes equal splits of the attribute words A∪B; axis=target permutes X∪Y instead and may differ"
        }
    }
    .to_string()
}

/// Effect size plus the plan-selected p-value, with every input recorded.
pub fn run_weat(
    resolved: &ResolvedTest,
    plan: &PermutationPlan,
    convention: StdConvention,
) -> Result<WeatResult, WeatError> {
    let (x, y, a, b) = (
        &resolved.x.vectors,
        &resolved.y.vectors,
        &resolved.a.vectors,
        &resolved.b.vectors,
    );
    let (sx, sy) = target_scores(x, y, a, b)?;
    let d = effect_size_from_scores(&sx, &sy, convention)?;
    let statistic = mean(&sx) - mean(&sy);

    let pool = match plan.axis {
        PermutationAxis::Target => SplitPool::from_scores(&sx, &sy),
        PermutationAxis::Attribute => attribute_pool(x, y, a, b)?,
    };
    let method = plan.method_for(pool.half());
    let (p, count, se) = match method {
        Method::Exact => {
            let (p, parts) = pool.exact(plan.comparator, plan.max_exact_partitions)?;
            (p, parts, None)
        }
        Method::Mc => {
            let (p, se) = pool.monte_carlo(plan.draws, plan.seed, plan.comparator)?;
            (p, plan.draws, Some(se))
        }
    };

    let per_word_scores = resolved
        .x
        .tokens
        .iter()
        .zip(&sx)
        .map(|(t, &s)| (t, SetRole::X, s))
        .chain(
            resolved
                .y
                .tokens
                .iter()
                .zip(&sy)
                .map(|(t, &s)| (t, SetRole::Y, s)),
        )
        .map(|(token, set, score)| WordScore {
            token: token.clone(),
            set,
            score,
        })
        .collect();

    Ok(WeatResult {
        test_name: resolved.spec.test_name.clone(),
        effect_size_d: d,
        p_value: p,
        statistic_observed: statistic,
        m: resolved.m(),
        n: resolved.n(),
        method,
        partitions_or_draws: count,
        mc_standard_error: se,
        seed: plan.seed,
        balance_seed: resolved.seed,
        comparator: plan.comparator,
        axis: plan.axis,
        axis_note: axis_note(plan.axis),
        std_convention: convention,
        per_word_scores,
        audit: resolved.audit.clone(),
        warnings: resolved.warnings.clone(),
    })
}
