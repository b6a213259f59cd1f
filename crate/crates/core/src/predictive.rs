//! Posterior-predictive inference over stored draws.
//!
//! Every quantity here averages the EPL probability over the posterior draws,
//! either exactly over all of `S_K` or by forward simulation.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_dim, EplError, Result};
use crate::model::{modal_ordering, sample_epl_unchecked, staged_log_prob, Dataset};
use crate::permutation::{all_permutations, factorial, Permutation};
use crate::sampler::PosteriorDraws;
use crate::stats::log_sum_exp;

pub const DEFAULT_ENUMERATE_MAX_K: usize = 8;
pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_DRAWS_PER_ITERATION: usize = 10;

/// Full predictive distribution over `S_K`, in lexicographic order of rankings.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDistribution {
    k: usize,
    entries: Vec<(Permutation, f64)>,
}

impl PredictiveDistribution {
    /// Validates that `entries` covers `S_K` once each with probabilities summing to 1.
    pub fn new(k: usize, mut entries: Vec<(Permutation, f64)>) -> Result<Self> {
        if entries.len() != factorial(k) {
            return Err(EplError::invalid(format!(
                "predictive distribution has {} entries, expected {}",
                entries.len(),
                factorial(k)
            )));
        }
        for (x, pr) in &entries {
            check_dim(k, x.len())?;
            if !(pr.is_finite() && *pr >= 0.0) {
                return Err(EplError::invalid(format!("probability {pr} for {x}")));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(EplError::invalid(format!("ranking {} listed twice", w[0].0)));
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(EplError::invalid(format!("probabilities sum to {total}")));
        }
        Ok(PredictiveDistribution { k, entries })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[(Permutation, f64)] {
        &self.entries
    }

    pub fn probability(&self, x: &Permutation) -> f64 {
        self.entries
            .binary_search_by(|e| e.0.cmp(x))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// Most probable ranking; ties go to the lexicographically first.
    pub fn argmax(&self) -> (&Permutation, f64) {
        let (x, p) = self
            .entries
            .iter()
            .fold(&self.entries[0], |best, e| if e.1 > best.1 { e } else { best });
        (x, *p)
    }

    /// The `n` most probable rankings, descending.
    pub fn top(&self, n: usize) -> Vec<(Permutation, f64)> {
        let mut v = self.entries.clone();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(n);
        v
    }
}

/// Forward-simulated rankings, `per_draw` for each posterior draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveSample {
    k: usize,
    per_draw: usize,
    flat: Vec<usize>,
}

impl PredictiveSample {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn per_draw(&self) -> usize {
        self.per_draw
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Rankings as 0-based entity slices.
    pub fn iter_zero_based(&self) -> impl Iterator<Item = &[usize]> {
        self.flat.chunks_exact(self.k)
    }

    pub fn ranking(&self, i: usize) -> Permutation {
        Permutation::from_zero_based_unchecked(self.flat[i * self.k..(i + 1) * self.k].to_vec())
    }

    /// Relative frequency of each distinct ranking, most frequent first.
    pub fn frequencies(&self) -> Vec<(Permutation, f64)> {
        let mut counts: HashMap<&[usize], usize> = HashMap::new();
        for x in self.iter_zero_based() {
            *counts.entry(x).or_default() += 1;
        }
        let n = self.len() as f64;
        let mut out: Vec<_> = counts
            .into_iter()
            .map(|(x, c)| (Permutation::from_zero_based_unchecked(x.to_vec()), c as f64 / n))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

/// `K × K` matrix with rows indexed by position (or stage) and columns by entity (or rank).
#[derive(Clone, Debug, PartialEq)]
pub struct RankMatrix {
    k: usize,
    values: Vec<f64>,
}

impl RankMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(EplError::EmptyPermutation);
        }
        for r in &rows {
            check_dim(k, r.len())?;
        }
        Ok(RankMatrix {
            k,
            values: rows.into_iter().flatten().collect(),
        })
    }

    fn zeros(k: usize) -> Self {
        RankMatrix {
            k,
            values: vec![0.0; k * k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Entry for 0-based row `j` and column `e`.
    pub fn get(&self, j: usize, e: usize) -> f64 {
        self.values[j * self.k + e]
    }

    fn add(&mut self, j: usize, e: usize, v: f64) {
        self.values[j * self.k + e] += v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.k..(j + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.k)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.k).map(|e| (0..self.k).map(|j| self.get(j, e)).sum()).collect()
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        self.row_sums()
            .into_iter()
            .chain(self.column_sums())
            .all(|s| (s - 1.0).abs() <= tol)
    }

    pub fn max_abs_diff(&self, other: &RankMatrix) -> Result<f64> {
        check_dim(self.k, other.k)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn scaled(mut self, c: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= c);
        self
    }
}

/// Anything that yields marginal position-by-entity probabilities.
pub trait RankSource {
    fn marginal_rank_matrix(&self) -> RankMatrix;
}

impl RankSource for PredictiveDistribution {
    fn marginal_rank_matrix(&self) -> RankMatrix {
        let mut m = RankMatrix::zeros(self.k);
        for (x, pr) in &self.entries {
            for (j, e) in x.as_zero_based().iter().enumerate() {
                m.add(j, *e, *pr);
            }
        }
        m
    }
}

impl RankSource for PredictiveSample {
    fn marginal_rank_matrix(&self) -> RankMatrix {
        let mut m = RankMatrix::zeros(self.k);
        for x in self.iter_zero_based() {
            for (j, e) in x.iter().enumerate() {
                m.add(j, *e, 1.0);
            }
        }
        let n = self.len() as f64;
        m.scaled(1.0 / n)
    }
}

/// `m[j][k] = Pr(x̃_j = k | 𝒟)`, exact or empirical depending on the source.
pub fn marginal_rank_matrix<S: RankSource>(source: &S) -> RankMatrix {
    source.marginal_rank_matrix()
}

/// Posterior draws unpacked for repeated probability evaluation.
struct DrawTable {
    k: usize,
    sigmas: Vec<Vec<usize>>,
    lambdas: Vec<Vec<f64>>,
    ln_lambdas: Vec<Vec<f64>>,
}

impl DrawTable {
    fn new(draws: &PosteriorDraws) -> Self {
        let ds = draws.draws();
        DrawTable {
            k: draws.k(),
            sigmas: ds.iter().map(|d| d.sigma.as_zero_based().to_vec()).collect(),
            lambdas: ds.iter().map(|d| d.lambda.as_slice().to_vec()).collect(),
            ln_lambdas: ds.iter().map(|d| d.lambda.ln()).collect(),
        }
    }

    fn len(&self) -> usize {
        self.sigmas.len()
    }

    fn log_probs(&self, x: &[usize]) -> impl Iterator<Item = f64> + '_ {
        let x = x.to_vec();
        (0..self.len()).map(move |m| staged_log_prob(&x, &self.sigmas[m], &self.lambdas[m], &self.ln_lambdas[m]))
    }

    /// `ln` of the posterior-mean EPL probability of `x`.
    fn log_mean_prob(&self, x: &[usize]) -> f64 {
        let lps: Vec<f64> = self.log_probs(x).collect();
        log_sum_exp(&lps) - (self.len() as f64).ln()
    }

    fn mean_prob(&self, x: &[usize]) -> f64 {
        self.log_probs(x).map(f64::exp).sum::<f64>() / self.len() as f64
    }

    /// Monte Carlo standard error of the mean probability, given its logarithm.
    fn mean_prob_se(&self, x: &[usize], log_mean: f64) -> f64 {
        let n = self.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let rel: Vec<f64> = self.log_probs(x).map(|lp| (lp - log_mean).exp()).collect();
        let var = rel.iter().map(|r| (r - 1.0).powi(2)).sum::<f64>() / (n - 1.0);
        log_mean.exp() * (var / n).sqrt()
    }
}

/// Exact predictive distribution by enumerating `S_K`.
pub fn enumerate_predictive(draws: &PosteriorDraws, max_k: usize) -> Result<PredictiveDistribution> {
    draws.require_nonempty()?;
    let k = draws.k();
    if k > max_k {
        return Err(EplError::config(format!(
            "enumeration over {k}! rankings exceeds the limit K <= {max_k}; use sampling"
        )));
    }
    let table = DrawTable::new(draws);
    let perms: Vec<Permutation> = all_permutations(k).collect();
    let entries = perms
        .into_par_iter()
        .map(|x| {
            let pr = table.mean_prob(x.as_zero_based());
            (x, pr)
        })
        .collect();
    Ok(PredictiveDistribution { k, entries })
}

/// `per_draw` forward simulations from each posterior draw.
///
/// Draw `m` uses its own stream of a generator seeded from `rng`, so the
/// result does not depend on how the work is split across threads.
pub fn sample_predictive<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    per_draw: usize,
    rng: &mut R,
) -> Result<PredictiveSample> {
    draws.require_nonempty()?;
    if per_draw == 0 {
        return Err(EplError::config("draws per iteration must be at least 1"));
    }
    let k = draws.k();
    let base: u64 = rng.random();
    let flat: Vec<usize> = draws
        .draws()
        .par_iter()
        .enumerate()
        .flat_map_iter(|(m, d)| {
            let mut local = ChaCha8Rng::seed_from_u64(base);
            local.set_stream(m as u64);
            let lambda = d.lambda.as_slice();
            (0..per_draw)
                .flat_map(|_| {
                    sample_epl_unchecked(lambda, &d.sigma, &mut local)
                        .as_zero_based()
                        .to_vec()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(PredictiveSample { k, per_draw, flat })
}

/// Observed frequency of entity k at position j.
pub fn empirical_rank_matrix(data: &Dataset) -> Result<RankMatrix> {
    if data.is_empty() {
        return Err(EplError::invalid("dataset has no rankings"));
    }
    let mut m = RankMatrix::zeros(data.k());
    for x in data.rankings() {
        for (j, e) in x.as_zero_based().iter().enumerate() {
            m.add(j, *e, 1.0);
        }
    }
    Ok(m.scaled(1.0 / data.len() as f64))
}

/// Entrywise `|pred − emp|`.
pub fn discrepancy_matrix(pred: &RankMatrix, emp: &RankMatrix) -> Result<RankMatrix> {
    check_dim(pred.k, emp.k)?;
    Ok(RankMatrix {
        k: pred.k,
        values: pred
            .values
            .iter()
            .zip(&emp.values)
            .map(|(a, b)| (a - b).abs())
            .collect(),
    })
}

/// For each entity, `n` times its probability of finishing in positions `1..=p`.
pub fn expected_top_p_counts(pred: &RankMatrix, p: usize, n: usize) -> Result<Vec<f64>> {
    if p == 0 || p > pred.k {
        return Err(EplError::invalid(format!("p must lie in 1..={}, got {p}", pred.k)));
    }
    Ok((0..pred.k)
        .map(|e| n as f64 * (0..p).map(|j| pred.get(j, e)).sum::<f64>())
        .collect())
}

/// Frequency with which stage j is allocated rank k across the σ draws.
pub fn sigma_marginal_matrix(draws: &PosteriorDraws) -> Result<RankMatrix> {
    draws.require_nonempty()?;
    let mut m = RankMatrix::zeros(draws.k());
    for d in draws.draws() {
        for (j, r) in d.sigma.as_zero_based().iter().enumerate() {
            m.add(j, *r, 1.0);
        }
    }
    Ok(m.scaled(1.0 / draws.len() as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRanking {
    pub ranking: Permutation,
    /// Posterior-mean predictive probability of `ranking`.
    pub probability: f64,
    pub std_error: f64,
}

/// Strict-improvement pairwise-transposition hill climb on `ln f`.
fn climb(table: &DrawTable, start: Vec<usize>) -> (Vec<usize>, f64) {
    let k = table.k;
    let mut x = start;
    let mut best = table.log_mean_prob(&x);
    loop {
        let mut improved = false;
        for j1 in 0..k {
            for j2 in j1 + 1..k {
                x.swap(j1, j2);
                let f = table.log_mean_prob(&x);
                if f > best {
                    best = f;
                    improved = true;
                } else {
                    x.swap(j1, j2);
                }
            }
        }
        if !improved {
            return (x, best);
        }
    }
}

const MODE_CANDIDATES: usize = 100;

/// Cyclic coordinate ascent for the mode of the predictive distribution.
///
/// The first start is the best of the draws' modal orderings (among the 100
/// most frequent); the remaining `restarts − 1` starts are uniform random.
pub fn aggregate_mode<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    restarts: usize,
    rng: &mut R,
) -> Result<AggregateRanking> {
    draws.require_nonempty()?;
    let table = DrawTable::new(draws);
    let k = draws.k();

    let mut modes: HashMap<Permutation, usize> = HashMap::new();
    for d in draws.draws() {
        *modes.entry(modal_ordering(&d.lambda, &d.sigma)?).or_default() += 1;
    }
    let mut modes: Vec<_> = modes.into_iter().collect();
    modes.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    modes.truncate(MODE_CANDIDATES);
    let seeded = modes
        .into_iter()
        .map(|(x, _)| {
            let f = table.log_mean_prob(x.as_zero_based());
            (x, f)
        })
        .fold(None::<(Permutation, f64)>, |best, cand| match best {
            Some(b) if b.1 >= cand.1 => Some(b),
            _ => Some(cand),
        })
        .expect("nonempty draws")
        .0;

    let mut starts = vec![seeded.as_zero_based().to_vec()];
    for _ in 1..restarts.max(1) {
        let mut x: Vec<usize> = (0..k).collect();
        x.shuffle(rng);
        starts.push(x);
    }
    let results: Vec<(Vec<usize>, f64)> = starts.into_par_iter().map(|s| climb(&table, s)).collect();
    let (best, log_f) = results
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("at least one start");
    let std_error = table.mean_prob_se(&best, log_f);
    Ok(AggregateRanking {
        ranking: Permutation::from_zero_based_unchecked(best),
        probability: log_f.exp(),
        std_error,
    })
}
