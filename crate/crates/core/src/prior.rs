//! Joint prior over the choice order σ and the entity weights λ.
//!
//! σ follows a Plackett-Luce distribution with weights `q` (or an explicit
//! mass table over a subset of `S_K`). Given σ, the λ_k are independent
//! `Ga(a^(σ)_k, 1)` where `a^(σ)` is the base shape vector `a` re-indexed so
//! that the prior-predictive modal ordering is the same for every σ.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{check_dim, EplError, Result};
use crate::model::{eta_from_values, sample_epl_unchecked, staged_log_prob, LambdaVector};
use crate::permutation::Permutation;
use crate::stats::ln_gamma;

#[derive(Clone, Debug)]
pub struct PriorSpec {
    q: Vec<f64>,
    a: Vec<f64>,
    support: Option<SigmaSupport>,
}

/// Explicit σ prior: listed permutations carry the given mass, all others zero.
#[derive(Clone, Debug)]
pub struct SigmaSupport {
    entries: Vec<(Permutation, f64)>,
    index: HashMap<Permutation, f64>,
}

impl SigmaSupport {
    pub fn new(entries: Vec<(Permutation, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(EplError::invalid("sigma support is empty"));
        }
        let k = entries[0].0.len();
        let mut index = HashMap::with_capacity(entries.len());
        let mut total = 0.0;
        for (perm, mass) in &entries {
            check_dim(k, perm.len())?;
            if !(mass.is_finite() && *mass > 0.0) {
                return Err(EplError::invalid(format!(
                    "sigma support mass for {perm} must be positive, got {mass}"
                )));
            }
            if index.insert(perm.clone(), *mass).is_some() {
                return Err(EplError::invalid(format!("sigma support lists {perm} twice")));
            }
            total += mass;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(EplError::invalid(format!(
                "sigma support masses sum to {total}, expected 1"
            )));
        }
        Ok(SigmaSupport { entries, index })
    }

    /// Degenerate prior putting all mass on one choice order.
    pub fn single(sigma: Permutation) -> Self {
        SigmaSupport::new(vec![(sigma, 1.0)]).expect("unit mass is valid")
    }

    pub fn entries(&self) -> &[(Permutation, f64)] {
        &self.entries
    }

    pub fn k(&self) -> usize {
        self.entries[0].0.len()
    }

    fn mass(&self, sigma: &Permutation) -> f64 {
        self.index.get(sigma).copied().unwrap_or(0.0)
    }
}

fn check_positive(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(EplError::invalid(format!("{name} is empty")));
    }
    for (i, x) in v.iter().enumerate() {
        if !(x.is_finite() && *x > 0.0) {
            return Err(EplError::invalid(format!(
                "{name}_{} = {x} must be finite and positive",
                i + 1
            )));
        }
    }
    Ok(())
}

impl PriorSpec {
    pub fn new(q: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        check_positive("q", &q)?;
        check_positive("a", &a)?;
        check_dim(q.len(), a.len())?;
        Ok(PriorSpec { q, a, support: None })
    }

    /// `q = a = 1`: every choice order and every preference order equally likely.
    pub fn uniform(k: usize) -> Self {
        PriorSpec {
            q: vec![1.0; k],
            a: vec![1.0; k],
            support: None,
        }
    }

    pub fn with_support(mut self, support: SigmaSupport) -> Result<Self> {
        check_dim(self.k(), support.k())?;
        self.support = Some(support);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn support(&self) -> Option<&SigmaSupport> {
        self.support.as_ref()
    }

    /// `ln Pr(σ)`; `-inf` outside a declared support.
    pub fn sigma_log_prior(&self, sigma: &Permutation) -> Result<f64> {
        check_dim(self.k(), sigma.len())?;
        Ok(match &self.support {
            Some(s) => s.mass(sigma).ln(),
            None => {
                let ln_q: Vec<f64> = self.q.iter().map(|v| v.ln()).collect();
                let id = Permutation::identity(self.k());
                staged_log_prob(sigma.as_zero_based(), id.as_zero_based(), &self.q, &ln_q)
            }
        })
    }

    pub fn sample_sigma<R: Rng + ?Sized>(&self, rng: &mut R) -> Permutation {
        match &self.support {
            Some(s) => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                for (perm, mass) in &s.entries {
                    acc += mass;
                    if u < acc {
                        return perm.clone();
                    }
                }
                s.entries.last().expect("non-empty support").0.clone()
            }
            None => sample_epl_unchecked(&self.q, &Permutation::identity(self.k()), rng),
        }
    }

    /// Shapes `a^(σ)_k = a_{η_k}` with η computed from `a` as the λ surrogate.
    pub fn lambda_hyperparams(&self, sigma: &Permutation) -> Result<Vec<f64>> {
        let eta = eta_from_values(&self.a, sigma)?;
        eta.apply(&self.a)
    }

    /// `ln π(λ | σ)` for independent `Ga(a^(σ)_k, 1)` components.
    pub fn lambda_log_prior(&self, lambda: &LambdaVector, sigma: &Permutation) -> Result<f64> {
        check_dim(self.k(), lambda.len())?;
        let shapes = self.lambda_hyperparams(sigma)?;
        Ok(gamma_log_density(lambda.as_slice(), &shapes))
    }

    pub fn sample_lambda<R: Rng + ?Sized>(&self, sigma: &Permutation, rng: &mut R) -> Result<LambdaVector> {
        let shapes = self.lambda_hyperparams(sigma)?;
        Ok(sample_gamma_vector(&shapes, rng))
    }
}

/// `Σ_k (a_k − 1) ln λ_k − λ_k − ln Γ(a_k)`.
pub(crate) fn gamma_log_density(lambda: &[f64], shapes: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(shapes)
        .map(|(&l, &a)| (a - 1.0) * l.ln() - l - ln_gamma(a))
        .sum()
}

pub(crate) fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0).expect("validated positive shape");
    // tiny shapes can underflow to exactly zero
    g.sample(rng).max(f64::MIN_POSITIVE)
}

fn sample_gamma_vector<R: Rng + ?Sized>(shapes: &[f64], rng: &mut R) -> LambdaVector {
    LambdaVector::from_vec_unchecked(shapes.iter().map(|&a| sample_gamma(a, rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permutation::all_permutations;
    use crate::stats::{chi_square_sf, chi_square_statistic, mean, variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    /// Product formula for PL(q), written out independently of the model kernel.
    fn pl_prob(sigma: &Permutation, q: &[f64]) -> f64 {
        let s = sigma.to_vec();
        (0..s.len())
            .map(|j| q[s[j] - 1] / s[j..].iter().map(|&r| q[r - 1]).sum::<f64>())
            .product()
    }

    #[test]
    fn spec_validation() {
        assert!(PriorSpec::new(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(PriorSpec::new(vec![1.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(PriorSpec::new(vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(SigmaSupport::new(vec![(p(&[1, 2]), 0.5)]).is_err());
        assert!(SigmaSupport::new(vec![(p(&[1, 2]), 0.5), (p(&[1, 2]), 0.5)]).is_err());
        assert!(SigmaSupport::new(vec![(p(&[1, 2]), 1.0), (p(&[2, 1]), 0.0)]).is_err());
        let s = SigmaSupport::single(p(&[1, 2, 3]));
        assert!(PriorSpec::uniform(4).with_support(s).is_err());
    }

    #[test]
    fn sigma_prior_examples() {
        let uniform = PriorSpec::uniform(3);
        for s in all_permutations(3) {
            assert!((uniform.sigma_log_prior(&s).unwrap() - (1.0f64 / 6.0).ln()).abs() < 1e-14);
        }
        let spec = PriorSpec::new(vec![1.0, 2.0, 3.0], vec![1.0; 3]).unwrap();
        let lp = spec.sigma_log_prior(&p(&[3, 2, 1])).unwrap();
        assert!((lp - (1.0f64 / 3.0).ln()).abs() < 1e-14);

        let restricted = PriorSpec::uniform(3)
            .with_support(SigmaSupport::single(p(&[2, 1, 3])))
            .unwrap();
        assert_eq!(restricted.sigma_log_prior(&p(&[1, 2, 3])).unwrap(), f64::NEG_INFINITY);
        assert_eq!(restricted.sigma_log_prior(&p(&[2, 1, 3])).unwrap(), 0.0);
        assert!(uniform.sigma_log_prior(&p(&[1, 2])).is_err());
    }

    #[test]
    fn sigma_prior_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 1..=5 {
            let q: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..4.0)).collect();
            let spec = PriorSpec::new(q.clone(), vec![1.0; k]).unwrap();
            let mut total = 0.0;
            for s in all_permutations(k) {
                let lp = spec.sigma_log_prior(&s).unwrap();
                assert!((lp.exp() - pl_prob(&s, &q)).abs() < 1e-14);
                total += lp.exp();
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_q_gives_rank_flip_symmetry() {
        // q_i = q_{K+1-i}, decreasing towards the middle
        let q = vec![4.0, 2.0, 1.0, 2.0, 4.0];
        let spec = PriorSpec::new(q, vec![1.0; 5]).unwrap();
        for s in all_permutations(5) {
            let flipped = Permutation::new(s.iter().map(|r| 6 - r).collect()).unwrap();
            let a = spec.sigma_log_prior(&s).unwrap();
            let b = spec.sigma_log_prior(&flipped).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn frequencies_match(spec: &PriorSpec, k: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<_> = all_permutations(k).collect();
        let n = 60_000;
        let mut counts = vec![0usize; all.len()];
        for _ in 0..n {
            let s = spec.sample_sigma(&mut rng);
            counts[all.iter().position(|a| *a == s).unwrap()] += 1;
        }
        let expected: Vec<f64> = all
            .iter()
            .map(|s| n as f64 * spec.sigma_log_prior(s).unwrap().exp())
            .collect();
        let pval = chi_square_sf(chi_square_statistic(&counts, &expected), (all.len() - 1) as f64);
        assert!(pval > 0.001, "p = {pval}");
    }

    #[test]
    fn sigma_prior_sampling() {
        frequencies_match(&PriorSpec::uniform(3), 3, 12);
        frequencies_match(&PriorSpec::new(vec![1.0, 2.0, 3.0], vec![1.0; 3]).unwrap(), 3, 13);
        let only = p(&[3, 1, 2]);
        let degenerate = PriorSpec::uniform(3)
            .with_support(SigmaSupport::single(only.clone()))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        assert!((0..100).all(|_| degenerate.sample_sigma(&mut rng) == only));
    }

    #[test]
    fn hyperparameter_map() {
        let spec = PriorSpec::new(vec![1.0; 4], vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        // entities already in preference order: a^(σ)_k = a_{σ⁻¹_k}
        for s in all_permutations(4) {
            let inv = s.inverse();
            let expected: Vec<f64> = (1..=4).map(|k| spec.a()[inv.get(k) - 1]).collect();
            assert_eq!(spec.lambda_hyperparams(&s).unwrap(), expected);
        }
        assert_eq!(
            spec.lambda_hyperparams(&Permutation::identity(4)).unwrap(),
            spec.a().to_vec()
        );
        let flat = PriorSpec::new(vec![1.0; 4], vec![2.5; 4]).unwrap();
        for s in all_permutations(4) {
            assert_eq!(flat.lambda_hyperparams(&s).unwrap(), vec![2.5; 4]);
        }
    }

    #[test]
    fn prior_mean_mode_is_preserved() {
        let spec = PriorSpec::new(vec![1.0; 4], vec![0.7, 3.0, 1.4, 2.2]).unwrap();
        let base = Permutation::order_desc(spec.a()).unwrap();
        for s in all_permutations(4) {
            let shapes = spec.lambda_hyperparams(&s).unwrap();
            let mode = crate::model::modal_ordering(&LambdaVector::new(shapes).unwrap(), &s).unwrap();
            assert_eq!(mode, base);
        }
    }

    #[test]
    fn lambda_prior_density() {
        let spec = PriorSpec::uniform(3);
        let l = LambdaVector::new(vec![0.3, 1.2, 2.0]).unwrap();
        let lp = spec.lambda_log_prior(&l, &p(&[2, 3, 1])).unwrap();
        assert!((lp + 3.5).abs() < 1e-12);

        let spec = PriorSpec::new(vec![1.0; 2], vec![2.0, 1.0]).unwrap();
        let ones = LambdaVector::new(vec![1.0, 1.0]).unwrap();
        let lp = spec.lambda_log_prior(&ones, &Permutation::identity(2)).unwrap();
        assert!((lp + 2.0).abs() < 1e-12);

        let spec = PriorSpec::new(vec![1.0; 3], vec![3.0, 2.0, 1.0]).unwrap();
        let l = LambdaVector::new(vec![0.5, 1.5, 2.5]).unwrap();
        let at_id = spec.lambda_log_prior(&l, &Permutation::identity(3)).unwrap();
        let at_s = spec.lambda_log_prior(&l, &p(&[2, 3, 1])).unwrap();
        // a^(σ) = (a_3, a_1, a_2) = (1, 3, 2) for σ = (2,3,1)
        let by_hand = gamma_log_density(l.as_slice(), &[1.0, 3.0, 2.0]);
        assert!((at_s - by_hand).abs() < 1e-12);
        assert!((at_id - at_s).abs() > 1e-3);
    }

    #[test]
    fn lambda_prior_sampling_moments() {
        let spec = PriorSpec::new(vec![1.0; 3], vec![3.0, 2.0, 0.5]).unwrap();
        let s = p(&[3, 1, 2]);
        let shapes = spec.lambda_hyperparams(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 100_000;
        let draws: Vec<LambdaVector> = (0..n).map(|_| spec.sample_lambda(&s, &mut rng).unwrap()).collect();
        for (k, &a) in shapes.iter().enumerate() {
            let xs: Vec<f64> = draws.iter().map(|l| l.as_slice()[k]).collect();
            let se_mean = (a / n as f64).sqrt();
            assert!((mean(&xs) - a).abs() < 3.0 * se_mean);
            // Var of the sample variance for Ga(a,1): (μ4 − σ⁴)/n with μ4 = 3a² + 6a
            let se_var = ((3.0 * a * a + 6.0 * a - a * a) / n as f64).sqrt();
            assert!((variance(&xs) - a).abs() < 3.0 * se_var);
        }
    }

    #[test]
    fn flat_shapes_give_uniform_prior_predictive_mode() {
        let spec = PriorSpec::new(vec![1.0; 3], vec![2.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let all: Vec<_> = all_permutations(3).collect();
        let n = 30_000;
        let mut counts = vec![0usize; 6];
        for _ in 0..n {
            let s = spec.sample_sigma(&mut rng);
            let l = spec.sample_lambda(&s, &mut rng).unwrap();
            let m = Permutation::order_desc(l.as_slice()).unwrap();
            counts[all.iter().position(|a| *a == m).unwrap()] += 1;
        }
        let pval = chi_square_sf(chi_square_statistic(&counts, &[n as f64 / 6.0; 6]), 5.0);
        assert!(pval > 0.001);
    }
}
