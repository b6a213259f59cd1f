//! Plackett-Luce and Extended Plackett-Luce (EPL) probabilities.
//!
//! Under EPL(λ, σ) the ranking `x` is built in `K` stages: at stage `j` an
//! unchosen entity is picked with probability proportional to its λ and
//! placed at rank `σ_j`. The probability of `x` is therefore the standard
//! Plackett-Luce probability of the stage-ordered data `x*_j = x_{σ_j}`.
//!
//! All probabilities are returned as natural logarithms.

use rand::Rng;

use crate::error::{check_dim, EplError, Result};
use crate::permutation::Permutation;

/// Strictly positive entity weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaVector(Vec<f64>);

impl LambdaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EplError::invalid("lambda vector is empty"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(EplError::invalid(format!(
                "lambda_{} = {v} is not finite and positive",
                i + 1
            )));
        }
        Ok(LambdaVector(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        LambdaVector(values)
    }

    pub fn uniform(k: usize) -> Self {
        LambdaVector(vec![1.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn ln(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.ln()).collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        LambdaVector::new(self.0.iter().map(|v| v * c).collect())
    }

    pub(crate) fn set(&mut self, k: usize, value: f64) {
        self.0[k] = value;
    }

    pub(crate) fn scale_in_place(&mut self, c: f64) {
        for v in self.0.iter_mut() {
            *v *= c;
        }
    }
}

/// `n` complete rankings of the same `K` entities.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    k: usize,
    rankings: Vec<Permutation>,
    entity_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(k: usize, rankings: Vec<Permutation>) -> Result<Self> {
        if k == 0 {
            return Err(EplError::invalid("K must be at least 1"));
        }
        for r in &rankings {
            check_dim(k, r.len())?;
        }
        Ok(Dataset {
            k,
            rankings,
            entity_names: None,
        })
    }

    pub fn empty(k: usize) -> Self {
        Dataset {
            k,
            rankings: Vec::new(),
            entity_names: None,
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        check_dim(self.k, names.len())?;
        self.entity_names = Some(names);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    pub fn rankings(&self) -> &[Permutation] {
        &self.rankings
    }

    pub fn entity_names(&self) -> Option<&[String]> {
        self.entity_names.as_deref()
    }

    /// Names if present, otherwise `"1".."K"`.
    pub fn labels(&self) -> Vec<String> {
        match &self.entity_names {
            Some(n) => n.clone(),
            None => (1..=self.k).map(|i| i.to_string()).collect(),
        }
    }

    /// First `n` rankings (all of them if `n` exceeds the size).
    pub fn truncated(&self, n: usize) -> Dataset {
        Dataset {
            k: self.k,
            rankings: self.rankings.iter().take(n).cloned().collect(),
            entity_names: self.entity_names.clone(),
        }
    }
}

/// Standard Plackett-Luce log-probability of ranking `x`.
pub fn pl_log_prob(x: &Permutation, lambda: &LambdaVector) -> Result<f64> {
    check_dim(lambda.len(), x.len())?;
    Ok(staged_log_prob(
        x.as_zero_based(),
        Permutation::identity(x.len()).as_zero_based(),
        lambda.as_slice(),
        &lambda.ln(),
    ))
}

/// EPL log-probability of ranking `x` under entity weights λ and choice order σ.
pub fn epl_log_prob(x: &Permutation, lambda: &LambdaVector, sigma: &Permutation) -> Result<f64> {
    check_dim(lambda.len(), x.len())?;
    check_dim(lambda.len(), sigma.len())?;
    Ok(staged_log_prob(
        x.as_zero_based(),
        sigma.as_zero_based(),
        lambda.as_slice(),
        &lambda.ln(),
    ))
}

/// Hot-loop kernel. Slices are 0-based; `ln_lambda` must equal `lambda.ln()`.
///
/// The denominators are accumulated back to front, so stage `j` sees
/// `Σ_{m ≥ j} λ_{x*_m}` after `K − j` additions.
#[inline]
pub(crate) fn staged_log_prob(x: &[usize], sigma: &[usize], lambda: &[f64], ln_lambda: &[f64]) -> f64 {
    let mut tail = 0.0;
    let mut lp = 0.0;
    for &rank in sigma.iter().rev() {
        let entity = x[rank];
        tail += lambda[entity];
        lp += ln_lambda[entity] - tail.ln();
    }
    lp
}

/// Sum of EPL log-probabilities over the dataset, in dataset order.
pub fn log_likelihood(data: &Dataset, lambda: &LambdaVector, sigma: &Permutation) -> Result<f64> {
    check_dim(data.k(), lambda.len())?;
    check_dim(data.k(), sigma.len())?;
    Ok(log_likelihood_unchecked(data, lambda.as_slice(), &lambda.ln(), sigma))
}

pub(crate) fn log_likelihood_unchecked(data: &Dataset, lambda: &[f64], ln_lambda: &[f64], sigma: &Permutation) -> f64 {
    let s = sigma.as_zero_based();
    data.rankings()
        .iter()
        .map(|x| staged_log_prob(x.as_zero_based(), s, lambda, ln_lambda))
        .sum()
}

/// Forward simulation of one ranking from EPL(λ, σ).
pub fn sample_epl<R: Rng + ?Sized>(lambda: &LambdaVector, sigma: &Permutation, rng: &mut R) -> Result<Permutation> {
    check_dim(lambda.len(), sigma.len())?;
    Ok(sample_epl_unchecked(lambda.as_slice(), sigma, rng))
}

pub(crate) fn sample_epl_unchecked<R: Rng + ?Sized>(lambda: &[f64], sigma: &Permutation, rng: &mut R) -> Permutation {
    let k = lambda.len();
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut total: f64 = lambda.iter().sum();
    let mut x = vec![0usize; k];
    for &rank in sigma.as_zero_based() {
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        // fall back to the last remaining entity if rounding leaves u unmatched
        let mut pick = remaining.len() - 1;
        for (pos, &e) in remaining.iter().enumerate() {
            acc += lambda[e];
            if u < acc {
                pick = pos;
                break;
            }
        }
        let entity = remaining.remove(pick);
        total = remaining.iter().map(|&e| lambda[e]).sum();
        x[rank] = entity;
    }
    Permutation::from_zero_based_unchecked(x)
}

/// Most probable ranking under EPL(λ, σ): `order_desc(λ) ∘ σ⁻¹`.
pub fn modal_ordering(lambda: &LambdaVector, sigma: &Permutation) -> Result<Permutation> {
    check_dim(lambda.len(), sigma.len())?;
    Permutation::order_desc(lambda.as_slice())?.compose(&sigma.inverse())
}

/// `η = modal_ordering(λ, σ) ∘ order_desc(λ)⁻¹`.
pub fn eta_permutation(lambda: &LambdaVector, sigma: &Permutation) -> Result<Permutation> {
    eta_from_values(lambda.as_slice(), sigma)
}

pub(crate) fn eta_from_values(values: &[f64], sigma: &Permutation) -> Result<Permutation> {
    check_dim(values.len(), sigma.len())?;
    let x_hat = Permutation::order_desc(values)?;
    x_hat.compose(&sigma.inverse())?.compose(&x_hat.inverse())
}

/// Re-indexes λ by η so that EPL(λ^(σ), σ) has the same modal ordering as PL(λ).
pub fn permute_lambda_for_mode(lambda: &LambdaVector, sigma: &Permutation) -> Result<LambdaVector> {
    let eta = eta_permutation(lambda, sigma)?;
    Ok(LambdaVector(eta.apply(lambda.as_slice())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permutation::all_permutations;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    fn lam(v: &[f64]) -> LambdaVector {
        LambdaVector::new(v.to_vec()).unwrap()
    }

    /// Direct transcription of the product formula, stage by stage, O(K²).
    fn naive_epl_prob(x: &Permutation, lambda: &[f64], sigma: &Permutation) -> f64 {
        let k = x.len();
        let xs: Vec<usize> = (1..=k).map(|j| x.get(sigma.get(j))).collect();
        let mut prob = 1.0;
        for j in 0..k {
            let denom: f64 = xs[j..].iter().map(|&e| lambda[e - 1]).sum();
            prob *= lambda[xs[j] - 1] / denom;
        }
        prob
    }

    fn random_lambda(rng: &mut ChaCha8Rng, k: usize) -> LambdaVector {
        lam(&(0..k).map(|_| rng.random_range(0.05..5.0)).collect::<Vec<_>>())
    }

    fn random_perm(rng: &mut ChaCha8Rng, k: usize) -> Permutation {
        use rand::seq::SliceRandom;
        let mut v: Vec<usize> = (0..k).collect();
        v.shuffle(rng);
        Permutation::from_zero_based(v).unwrap()
    }

    #[test]
    fn lambda_vector_validation() {
        assert!(LambdaVector::new(vec![]).is_err());
        assert!(LambdaVector::new(vec![1.0, 0.0]).is_err());
        assert!(LambdaVector::new(vec![1.0, -2.0]).is_err());
        assert!(LambdaVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn pl_examples() {
        let uniform = lam(&[1.0, 1.0, 1.0]);
        for x in all_permutations(3) {
            assert!((pl_log_prob(&x, &uniform).unwrap() - (1.0f64 / 6.0).ln()).abs() < 1e-14);
        }
        let l = lam(&[2.0, 1.0, 1.0]);
        assert!((pl_log_prob(&p(&[1, 2, 3]), &l).unwrap() - 0.25f64.ln()).abs() < 1e-14);
        let total: f64 = all_permutations(3).map(|x| pl_log_prob(&x, &l).unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(pl_log_prob(&p(&[1, 2]), &l).is_err());
    }

    #[test]
    fn epl_examples() {
        let l = lam(&[2.0, 1.0, 1.0]);
        let lp = epl_log_prob(&p(&[1, 2, 3]), &l, &p(&[3, 2, 1])).unwrap();
        assert!((lp - (1.0f64 / 12.0).ln()).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..=5 {
            for _ in 0..10 {
                let l = random_lambda(&mut rng, k);
                let x = random_perm(&mut rng, k);
                let s = random_perm(&mut rng, k);
                let a = epl_log_prob(&x, &l, &Permutation::identity(k)).unwrap();
                assert!((a - pl_log_prob(&x, &l).unwrap()).abs() < 1e-12);
                let b = epl_log_prob(&x, &l, &s).unwrap();
                assert!((b.exp() - naive_epl_prob(&x, l.as_slice(), &s)).abs() < 1e-13);
                for c in [0.1, 7.3, 1e-3, 1e4] {
                    let scaled = epl_log_prob(&x, &l.scaled(c).unwrap(), &s).unwrap();
                    assert!((scaled - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn normalization_and_reverse_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 1..=5 {
            for _ in 0..5 {
                let l = random_lambda(&mut rng, k);
                let s = random_perm(&mut rng, k);
                let total: f64 = all_permutations(k)
                    .map(|x| epl_log_prob(&x, &l, &s).unwrap().exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "K={k} total={total}");

                let rev = Permutation::reversed_identity(k);
                for x in all_permutations(k) {
                    let star = rev.apply(&x.to_vec()).unwrap();
                    let star = Permutation::new(star).unwrap();
                    let a = epl_log_prob(&x, &l, &rev).unwrap();
                    let b = pl_log_prob(&star, &l).unwrap();
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn likelihood_examples() {
        let l = lam(&[2.0, 1.0, 0.5, 3.0]);
        let s = p(&[2, 4, 1, 3]);
        assert_eq!(log_likelihood(&Dataset::empty(4), &l, &s).unwrap(), 0.0);

        let x = p(&[4, 1, 3, 2]);
        let single = epl_log_prob(&x, &l, &s).unwrap();
        let twice = Dataset::new(4, vec![x.clone(), x.clone()]).unwrap();
        assert!((log_likelihood(&twice, &l, &s).unwrap() - 2.0 * single).abs() < 1e-13);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<_> = (0..3).map(|_| random_perm(&mut rng, 4)).collect();
        let expected: f64 = xs.iter().map(|x| naive_epl_prob(x, l.as_slice(), &s).ln()).sum();
        let data = Dataset::new(4, xs).unwrap();
        assert!((log_likelihood(&data, &l, &s).unwrap() - expected).abs() < 1e-12);

        assert!(log_likelihood(&data, &lam(&[1.0, 1.0, 1.0]), &p(&[1, 2, 3])).is_err());
        assert!(Dataset::new(3, vec![p(&[1, 2])]).is_err());
    }

    #[test]
    fn modal_examples() {
        let l = lam(&[0.5, 3.0, 1.0]);
        assert_eq!(modal_ordering(&l, &p(&[1, 2, 3])).unwrap(), p(&[2, 3, 1]));
        assert_eq!(modal_ordering(&l, &p(&[2, 3, 1])).unwrap(), p(&[1, 2, 3]));
        assert_eq!(eta_permutation(&l, &p(&[2, 3, 1])).unwrap(), p(&[3, 1, 2]));
        for s in all_permutations(3) {
            assert!(eta_permutation(&l, &Permutation::identity(3)).unwrap().is_identity());
            let sorted = lam(&[3.0, 2.0, 1.0]);
            assert_eq!(eta_permutation(&sorted, &s).unwrap(), s.inverse());
        }
        let moved = permute_lambda_for_mode(&l, &p(&[2, 3, 1])).unwrap();
        assert_eq!(moved.as_slice(), &[1.0, 0.5, 3.0]);
        assert_eq!(modal_ordering(&moved, &p(&[2, 3, 1])).unwrap(), p(&[2, 3, 1]));
        assert_eq!(permute_lambda_for_mode(&l, &Permutation::identity(3)).unwrap(), l);
    }

    fn brute_force_mode(l: &LambdaVector, s: &Permutation) -> Permutation {
        all_permutations(l.len())
            .map(|x| (epl_log_prob(&x, l, s).unwrap(), x))
            .fold(None::<(f64, Permutation)>, |best, (lp, x)| match best {
                Some((b, bx)) if b >= lp => Some((b, bx)),
                _ => Some((lp, x)),
            })
            .unwrap()
            .1
    }

    #[test]
    fn mode_matches_brute_force_k4() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let l = random_lambda(&mut rng, 4);
            for s in all_permutations(4) {
                assert_eq!(modal_ordering(&l, &s).unwrap(), brute_force_mode(&l, &s));
                let moved = permute_lambda_for_mode(&l, &s).unwrap();
                assert_eq!(
                    brute_force_mode(&moved, &s),
                    Permutation::order_desc(l.as_slice()).unwrap()
                );
            }
        }
    }

    #[test]
    fn sampler_matches_exact_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 60_000;
        let cases = [
            (lam(&[1.0, 1.0, 1.0]), p(&[2, 3, 1])),
            (lam(&[2.0, 1.0, 1.0]), p(&[1, 2, 3])),
            (lam(&[0.3, 2.5, 1.1]), p(&[3, 1, 2])),
        ];
        for (l, s) in cases {
            let all: Vec<_> = all_permutations(3).collect();
            let mut counts = vec![0usize; all.len()];
            for _ in 0..n {
                let x = sample_epl(&l, &s, &mut rng).unwrap();
                counts[all.iter().position(|a| *a == x).unwrap()] += 1;
            }
            let expected: Vec<f64> = all
                .iter()
                .map(|x| n as f64 * epl_log_prob(x, &l, &s).unwrap().exp())
                .collect();
            let stat = crate::stats::chi_square_statistic(&counts, &expected);
            let pval = crate::stats::chi_square_sf(stat, (all.len() - 1) as f64);
            assert!(pval > 0.001, "chi-square p={pval} for λ={l:?} σ={s}");
            let freq = counts[0] as f64 / n as f64;
            let se = (expected[0] / n as f64 * (1.0 - expected[0] / n as f64) / n as f64).sqrt();
            assert!((freq - expected[0] / n as f64).abs() < 4.0 * se);
        }
    }
}
