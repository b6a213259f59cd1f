//! Metropolis-Hastings proposals for the choice order σ.
//!
//! Mechanisms 1-3 (random swap, Poisson swap, random insertion) are applied
//! `S` times in succession; 4 draws independently from the σ prior and 5
//! reverses the current order. Every mechanism except 4 is symmetric.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{EplError, Result};
use crate::permutation::Permutation;
use crate::prior::PriorSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SigmaMove {
    RandomSwap,
    PoissonSwap,
    RandomInsertion,
    PriorDraw,
    Reverse,
}

impl SigmaMove {
    pub const ALL: [SigmaMove; 5] = [
        SigmaMove::RandomSwap,
        SigmaMove::PoissonSwap,
        SigmaMove::RandomInsertion,
        SigmaMove::PriorDraw,
        SigmaMove::Reverse,
    ];

    /// 1-based mechanism number.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn from_number(n: usize) -> Result<Self> {
        SigmaMove::ALL
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| EplError::invalid(format!("proposal mechanism must be 1..=5, got {n}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            SigmaMove::RandomSwap => "random_swap",
            SigmaMove::PoissonSwap => "poisson_swap",
            SigmaMove::RandomInsertion => "random_insertion",
            SigmaMove::PriorDraw => "prior_draw",
            SigmaMove::Reverse => "reverse",
        }
    }
}

/// Tuning for one chain's σ proposals and λ random walks.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalConfig {
    weights: [f64; 5],
    compound: usize,
    poisson_rate: f64,
    lambda_step: Vec<f64>,
}

impl ProposalConfig {
    pub fn new(weights: [f64; 5], compound: usize, poisson_rate: f64, lambda_step: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(EplError::config(format!(
                "proposal weights must be nonnegative, got {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EplError::config(format!("proposal weights must sum to 1, got {total}")));
        }
        if compound == 0 {
            return Err(EplError::config("compounding count S must be at least 1"));
        }
        if !(poisson_rate.is_finite() && poisson_rate > 0.0) {
            return Err(EplError::config(format!(
                "Poisson swap rate must be positive, got {poisson_rate}"
            )));
        }
        if lambda_step.is_empty() || lambda_step.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(EplError::config(format!(
                "lambda step sizes must be positive, got {lambda_step:?}"
            )));
        }
        Ok(ProposalConfig {
            weights,
            compound,
            poisson_rate,
            lambda_step,
        })
    }

    /// Equal mechanism weights, `S = 3`, `t = 1`, λ step 0.5.
    pub fn default_for(k: usize) -> Self {
        ProposalConfig {
            weights: [0.2; 5],
            compound: 3,
            poisson_rate: 1.0,
            lambda_step: vec![0.5; k],
        }
    }

    pub fn weights(&self) -> &[f64; 5] {
        &self.weights
    }

    pub fn compound(&self) -> usize {
        self.compound
    }

    pub fn poisson_rate(&self) -> f64 {
        self.poisson_rate
    }

    pub fn lambda_step(&self) -> &[f64] {
        &self.lambda_step
    }

    pub fn with_weights(mut self, weights: [f64; 5]) -> Result<Self> {
        self.weights = weights;
        ProposalConfig::new(self.weights, self.compound, self.poisson_rate, self.lambda_step)
    }

    pub fn with_compound(mut self, compound: usize) -> Result<Self> {
        self.compound = compound;
        ProposalConfig::new(self.weights, self.compound, self.poisson_rate, self.lambda_step)
    }

    pub fn with_lambda_step(mut self, step: Vec<f64>) -> Result<Self> {
        self.lambda_step = step;
        ProposalConfig::new(self.weights, self.compound, self.poisson_rate, self.lambda_step)
    }

    pub fn sample_move<R: Rng + ?Sized>(&self, rng: &mut R) -> SigmaMove {
        let u = rng.random::<f64>();
        let mut acc = 0.0;
        for (m, w) in SigmaMove::ALL.iter().zip(self.weights) {
            acc += w;
            if u < acc {
                return *m;
            }
        }
        // rounding: fall back to the last mechanism with positive weight
        *SigmaMove::ALL
            .iter()
            .zip(self.weights)
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(m, _)| m)
            .expect("weights sum to 1")
    }
}

/// Partner position for the Poisson swap: `φ₁ + (−1)^τ f`, wrapped into `1..=K`.
pub fn poisson_partner(phi1: usize, tau: bool, f: u64, k: usize) -> usize {
    let k = k as i64;
    let step = if tau { -(f as i64) } else { f as i64 };
    let raw = phi1 as i64 + step;
    ((raw - 1).rem_euclid(k) + 1) as usize
}

pub fn propose_sigma<R: Rng + ?Sized>(
    mechanism: SigmaMove,
    sigma: &Permutation,
    cfg: &ProposalConfig,
    spec: &PriorSpec,
    rng: &mut R,
) -> Permutation {
    let k = sigma.len();
    let mut out = sigma.clone();
    match mechanism {
        SigmaMove::RandomSwap => {
            for _ in 0..cfg.compound {
                let a = rng.random_range(1..=k);
                let b = rng.random_range(1..=k);
                out.swap_positions(a, b);
            }
        }
        SigmaMove::PoissonSwap => {
            let pois = Poisson::new(cfg.poisson_rate).expect("validated rate");
            for _ in 0..cfg.compound {
                let a = rng.random_range(1..=k);
                let tau = rng.random_bool(0.5);
                let f = pois.sample(rng) as u64;
                out.swap_positions(a, poisson_partner(a, tau, f, k));
            }
        }
        SigmaMove::RandomInsertion => {
            if k > 1 {
                for _ in 0..cfg.compound {
                    let from = rng.random_range(1..=k);
                    let mut to = rng.random_range(1..k);
                    if to >= from {
                        to += 1;
                    }
                    out.insert_move(from, to);
                }
            }
        }
        SigmaMove::PriorDraw => out = spec.sample_sigma(rng),
        SigmaMove::Reverse => out = sigma.reverse(),
    }
    out
}
