use std::collections::HashMap;

use crate::error::{check_dim, EplError, Result};
use crate::model::LambdaVector;
use crate::permutation::Permutation;

/// One recorded cold-chain state.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    /// 1-based sampler iteration at which the state was recorded.
    pub iteration: u64,
    pub loglik: f64,
    pub sigma: Permutation,
    pub lambda: LambdaVector,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DrawsMeta {
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub config_hash: String,
    pub entity_names: Option<Vec<String>>,
}

/// Thinned post-burn-in draws from the temperature-1 chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    k: usize,
    draws: Vec<Draw>,
    meta: DrawsMeta,
}

impl PosteriorDraws {
    pub fn new(k: usize, draws: Vec<Draw>, meta: DrawsMeta) -> Result<Self> {
        if k == 0 {
            return Err(EplError::EmptyPermutation);
        }
        for d in &draws {
            check_dim(k, d.sigma.len())?;
            check_dim(k, d.lambda.len())?;
        }
        if let Some(names) = &meta.entity_names {
            check_dim(k, names.len())?;
        }
        Ok(PosteriorDraws { k, draws, meta })
    }

    /// Draws built from bare `(λ, σ)` pairs, with zero log-likelihood and default metadata.
    pub fn from_pairs(k: usize, pairs: Vec<(LambdaVector, Permutation)>) -> Result<Self> {
        let draws = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (lambda, sigma))| Draw {
                iteration: i as u64 + 1,
                loglik: 0.0,
                sigma,
                lambda,
            })
            .collect();
        PosteriorDraws::new(k, draws, DrawsMeta::default())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn meta(&self) -> &DrawsMeta {
        &self.meta
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.draws.is_empty() {
            return Err(EplError::invalid("posterior draws are empty"));
        }
        Ok(())
    }

    /// Distinct σ values with their counts, most frequent first (ties in lexicographic order).
    pub fn sigma_counts(&self) -> Vec<(Permutation, usize)> {
        let mut counts: HashMap<&Permutation, usize> = HashMap::new();
        for d in &self.draws {
            *counts.entry(&d.sigma).or_default() += 1;
        }
        let mut out: Vec<_> = counts.into_iter().map(|(s, c)| (s.clone(), c)).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Most frequent σ and its posterior probability estimate.
    pub fn modal_sigma(&self) -> Option<(Permutation, f64)> {
        let n = self.draws.len() as f64;
        self.sigma_counts().into_iter().next().map(|(s, c)| (s, c as f64 / n))
    }

    pub fn sigma_probability(&self, sigma: &Permutation) -> f64 {
        if self.draws.is_empty() {
            return 0.0;
        }
        self.draws.iter().filter(|d| &d.sigma == sigma).count() as f64 / self.draws.len() as f64
    }
}
