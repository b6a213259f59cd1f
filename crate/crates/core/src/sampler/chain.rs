//! One tempered chain and its within-chain moves.
//!
//! A chain at temperature `T` targets `π(𝒟 | λ, σ)^(1/T) π(λ | σ) Pr(σ)`;
//! tempering never touches the prior.

use rand::Rng;

use crate::error::{check_dim, EplError, Result};
use crate::model::{log_likelihood_unchecked, Dataset, LambdaVector};
use crate::permutation::{all_permutations, factorial, Permutation};
use crate::prior::{gamma_log_density, sample_gamma, PriorSpec};
use crate::sampler::proposal::{propose_sigma, ProposalConfig, SigmaMove};
use crate::stats::log_sum_exp;

#[derive(Clone, Debug)]
pub struct ChainState {
    lambda: LambdaVector,
    ln_lambda: Vec<f64>,
    sigma: Permutation,
    temp: f64,
    loglik: f64,
}

impl ChainState {
    pub fn new(data: &Dataset, lambda: LambdaVector, sigma: Permutation, temp: f64) -> Result<Self> {
        check_dim(data.k(), lambda.len())?;
        check_dim(data.k(), sigma.len())?;
        if !(temp.is_finite() && temp >= 1.0) {
            return Err(EplError::config(format!("temperature must be >= 1, got {temp}")));
        }
        let ln_lambda = lambda.ln();
        let loglik = log_likelihood_unchecked(data, lambda.as_slice(), &ln_lambda, &sigma);
        Ok(ChainState {
            lambda,
            ln_lambda,
            sigma,
            temp,
            loglik,
        })
    }

    pub fn lambda(&self) -> &LambdaVector {
        &self.lambda
    }

    pub fn sigma(&self) -> &Permutation {
        &self.sigma
    }

    pub fn temp(&self) -> f64 {
        self.temp
    }

    /// Cached `log π(𝒟 | λ, σ)`.
    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    /// Recomputes the log-likelihood from scratch.
    pub fn fresh_loglik(&self, data: &Dataset) -> f64 {
        log_likelihood_unchecked(data, self.lambda.as_slice(), &self.lambda.ln(), &self.sigma)
    }

    /// Exchanges (λ, σ, cached log-likelihood) with `other`; temperatures stay put.
    pub fn swap_contents(&mut self, other: &mut ChainState) {
        std::mem::swap(&mut self.lambda, &mut other.lambda);
        std::mem::swap(&mut self.ln_lambda, &mut other.ln_lambda);
        std::mem::swap(&mut self.sigma, &mut other.sigma);
        std::mem::swap(&mut self.loglik, &mut other.loglik);
    }
}

/// One sweep of log-normal random-walk updates, `k = 1..K` in order.
///
/// Returns the per-entity acceptance flags.
pub fn update_lambda_mh<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &Dataset,
    spec: &PriorSpec,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let k = data.k();
    check_dim(k, cfg.lambda_step().len())?;
    let shapes = spec.lambda_hyperparams(&state.sigma)?;
    let inv_t = 1.0 / state.temp;
    let mut accepted = vec![false; k];
    for e in 0..k {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let log_ratio = cfg.lambda_step()[e] * z;
        let old = state.lambda.as_slice()[e];
        let proposed = old * log_ratio.exp();
        if !(proposed.is_finite() && proposed > 0.0) {
            continue;
        }
        let old_ln = state.ln_lambda[e];
        state.lambda.set(e, proposed);
        state.ln_lambda[e] = proposed.ln();
        let new_loglik = log_likelihood_unchecked(data, state.lambda.as_slice(), &state.ln_lambda, &state.sigma);
        // prior ratio (λ†/λ)^(a−1) e^(λ−λ†) times the log-normal Jacobian λ†/λ
        let log_a = (new_loglik - state.loglik) * inv_t + shapes[e] * (state.ln_lambda[e] - old_ln) + (old - proposed);
        if new_loglik.is_finite() && accept(log_a, rng) {
            state.loglik = new_loglik;
            accepted[e] = true;
        } else {
            state.lambda.set(e, old);
            state.ln_lambda[e] = old_ln;
        }
    }
    Ok(accepted)
}

fn accept<R: Rng + ?Sized>(log_a: f64, rng: &mut R) -> bool {
    if log_a >= 0.0 {
        return true;
    }
    if log_a.is_nan() {
        return false;
    }
    rng.random::<f64>().ln() < log_a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SigmaStep {
    pub mechanism: SigmaMove,
    pub accepted: bool,
}

/// Metropolis-Hastings update of σ with a randomly chosen mechanism.
///
/// The independence (prior-draw) move carries the Hastings factor
/// `Pr(σ)/Pr(σ†)`, which cancels the prior ratio exactly.
pub fn update_sigma_mh<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &Dataset,
    spec: &PriorSpec,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> Result<SigmaStep> {
    let mechanism = cfg.sample_move(rng);
    let proposed = propose_sigma(mechanism, &state.sigma, cfg, spec, rng);
    if proposed == state.sigma {
        return Ok(SigmaStep {
            mechanism,
            accepted: true,
        });
    }
    let log_prior_ratio = if mechanism == SigmaMove::PriorDraw {
        0.0
    } else {
        let new = spec.sigma_log_prior(&proposed)?;
        if new == f64::NEG_INFINITY {
            return Ok(SigmaStep {
                mechanism,
                accepted: false,
            });
        }
        new - spec.sigma_log_prior(&state.sigma)?
    };
    let lam = state.lambda.as_slice();
    let lambda_prior_ratio = gamma_log_density(lam, &spec.lambda_hyperparams(&proposed)?)
        - gamma_log_density(lam, &spec.lambda_hyperparams(&state.sigma)?);
    let new_loglik = log_likelihood_unchecked(data, lam, &state.ln_lambda, &proposed);
    let log_a = (new_loglik - state.loglik) / state.temp + lambda_prior_ratio + log_prior_ratio;
    let accepted = new_loglik.is_finite() && accept(log_a, rng);
    if accepted {
        state.sigma = proposed;
        state.loglik = new_loglik;
    }
    Ok(SigmaStep { mechanism, accepted })
}

/// Exact tempered full conditional of σ given λ, over all of `S_K`.
pub fn sigma_full_conditional(
    state: &ChainState,
    data: &Dataset,
    spec: &PriorSpec,
    max_k: usize,
) -> Result<Vec<(Permutation, f64)>> {
    let k = data.k();
    if k > max_k {
        return Err(EplError::config(format!(
            "exact σ update enumerates K! = {} orders; K = {k} exceeds the limit {max_k}",
            factorial(k)
        )));
    }
    let lam = state.lambda.as_slice();
    let mut perms = Vec::with_capacity(factorial(k));
    let mut logp = Vec::with_capacity(factorial(k));
    for s in all_permutations(k) {
        let prior = spec.sigma_log_prior(&s)?;
        let lp = if prior == f64::NEG_INFINITY {
            prior
        } else {
            log_likelihood_unchecked(data, lam, &state.ln_lambda, &s) / state.temp
                + gamma_log_density(lam, &spec.lambda_hyperparams(&s)?)
                + prior
        };
        perms.push(s);
        logp.push(lp);
    }
    let norm = log_sum_exp(&logp);
    if !norm.is_finite() {
        return Err(EplError::Numerical("σ full conditional has no finite mass".into()));
    }
    Ok(perms
        .into_iter()
        .zip(logp)
        .map(|(s, lp)| (s, (lp - norm).exp()))
        .collect())
}

/// Gibbs update: draws σ from its exact full conditional.
pub fn gibbs_update_sigma<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &Dataset,
    spec: &PriorSpec,
    max_k: usize,
    rng: &mut R,
) -> Result<()> {
    let probs = sigma_full_conditional(state, data, spec, max_k)?;
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    let mut chosen = None;
    for (s, pr) in &probs {
        acc += pr;
        if u < acc {
            chosen = Some(s);
            break;
        }
    }
    let chosen = chosen.unwrap_or_else(|| {
        &probs
            .iter()
            .rev()
            .find(|(_, pr)| *pr > 0.0)
            .expect("normalized conditional")
            .0
    });
    if *chosen != state.sigma {
        state.sigma = chosen.clone();
        state.loglik = log_likelihood_unchecked(data, state.lambda.as_slice(), &state.ln_lambda, &state.sigma);
    }
    Ok(())
}

/// Draws a fresh total `Λ ~ Ga(Σ_k a^(σ)_k, 1)` and rescales λ to sum to it.
///
/// The likelihood is scale invariant, so the cached log-likelihood is kept.
pub fn rescale_lambda<R: Rng + ?Sized>(state: &mut ChainState, spec: &PriorSpec, rng: &mut R) -> Result<()> {
    let total_shape: f64 = spec.lambda_hyperparams(&state.sigma)?.iter().sum();
    let target = sample_gamma(total_shape, rng);
    let current = state.lambda.sum();
    let c = target / current;
    if !(c.is_finite() && c > 0.0) {
        return Err(EplError::Numerical(format!(
            "rescaling factor {c} from total {current} to {target}"
        )));
    }
    state.lambda.scale_in_place(c);
    if state.lambda.as_slice().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(EplError::Numerical("λ left the positive reals after rescaling".into()));
    }
    state.ln_lambda = state.lambda.ln();
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwapOutcome {
    /// 0-based index `c` of the attempted pair `(c, c + 1)`.
    pub pair: usize,
    pub accepted: bool,
}

/// `log A = (1/T_i − 1/T_j)(ℓ_j − ℓ_i)` for exchanging the states of chains i and j.
pub fn swap_log_acceptance(loglik_i: f64, temp_i: f64, loglik_j: f64, temp_j: f64) -> f64 {
    if temp_i == temp_j || loglik_i == loglik_j {
        return 0.0;
    }
    (1.0 / temp_i - 1.0 / temp_j) * (loglik_j - loglik_i)
}

/// Attempts one exchange between a uniformly chosen adjacent pair.
///
/// Returns `None` when there is only one chain.
pub fn swap_chains<R: Rng + ?Sized>(states: &mut [ChainState], rng: &mut R) -> Option<SwapOutcome> {
    if states.len() < 2 {
        return None;
    }
    let pair = rng.random_range(0..states.len() - 1);
    let (left, right) = states.split_at_mut(pair + 1);
    let (a, b) = (&mut left[pair], &mut right[0]);
    let log_a = swap_log_acceptance(a.loglik, a.temp, b.loglik, b.temp);
    let accepted = accept(log_a, rng);
    if accepted {
        a.swap_contents(b);
    }
    Some(SwapOutcome { pair, accepted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_epl;
    use crate::stats::{batch_means_se, mean, total_variation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    fn lam(v: &[f64]) -> LambdaVector {
        LambdaVector::new(v.to_vec()).unwrap()
    }

    fn toy_data(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = lam(&[3.0, 1.0, 0.4]);
        let s = p(&[2, 3, 1]);
        let xs = (0..n).map(|_| sample_epl(&l, &s, &mut rng).unwrap()).collect();
        Dataset::new(3, xs).unwrap()
    }

    #[test]
    fn zero_step_always_accepts() {
        let data = toy_data(1, 10);
        let spec = PriorSpec::uniform(3);
        let cfg = ProposalConfig::default_for(3)
            .with_lambda_step(vec![1e-300; 3])
            .unwrap();
        let mut st = ChainState::new(&data, lam(&[1.0, 2.0, 3.0]), p(&[1, 2, 3]), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            assert!(update_lambda_mh(&mut st, &data, &spec, &cfg, &mut rng)
                .unwrap()
                .iter()
                .all(|a| *a));
        }
    }

    #[test]
    fn identical_proposal_accepts() {
        let data = toy_data(1, 10);
        let spec = PriorSpec::uniform(3);
        // σ = (2,2,...) style null move: a single random swap on K = 1 never changes σ
        let one = Dataset::new(1, vec![p(&[1])]).unwrap();
        let cfg = ProposalConfig::default_for(1);
        let mut st = ChainState::new(&one, lam(&[1.0]), p(&[1]), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert!(
                update_sigma_mh(&mut st, &one, &PriorSpec::uniform(1), &cfg, &mut rng)
                    .unwrap()
                    .accepted
            );
        }
        let _ = (data, spec);
    }

    /// Long-run λ marginals from the MH sweep plus rescaling with no data.
    fn prior_recovery(temp: f64, data: &Dataset) -> Vec<(f64, f64)> {
        let spec = PriorSpec::new(vec![1.0; 3], vec![2.5, 1.0, 0.6]).unwrap();
        let sigma = p(&[3, 1, 2]);
        let cfg = ProposalConfig::default_for(3);
        let mut st = ChainState::new(data, lam(&[1.0, 1.0, 1.0]), sigma.clone(), temp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut xs = vec![Vec::new(); 3];
        for it in 0..120_000 {
            update_lambda_mh(&mut st, data, &spec, &cfg, &mut rng).unwrap();
            rescale_lambda(&mut st, &spec, &mut rng).unwrap();
            if it >= 1000 {
                for (k, v) in st.lambda().as_slice().iter().enumerate() {
                    xs[k].push(*v);
                }
            }
        }
        let shapes = spec.lambda_hyperparams(&sigma).unwrap();
        xs.iter()
            .zip(shapes)
            .map(|(x, a)| ((mean(x) - a) / batch_means_se(x, 50), a))
            .collect()
    }

    #[test]
    fn lambda_moves_recover_gamma_prior_without_data() {
        for (z, a) in prior_recovery(1.0, &Dataset::empty(3)) {
            assert!(z.abs() < 3.0, "shape {a}: z = {z}");
        }
    }

    #[test]
    fn very_hot_chain_ignores_likelihood() {
        let data = toy_data(5, 30);
        for (z, a) in prior_recovery(1e12, &data) {
            assert!(z.abs() < 3.0, "shape {a}: z = {z}");
        }
    }

    #[test]
    fn rescale_keeps_likelihood_and_sets_total() {
        let data = toy_data(6, 25);
        let spec = PriorSpec::new(vec![1.0; 3], vec![2.0, 1.0, 3.0]).unwrap();
        let mut st = ChainState::new(&data, lam(&[0.2, 5.0, 1.3]), p(&[2, 1, 3]), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let before = st.loglik();
            let mut replay = rng.clone();
            rescale_lambda(&mut st, &spec, &mut rng).unwrap();
            let target = sample_gamma(6.0, &mut replay);
            assert!((st.lambda().sum() - target).abs() < 1e-12 * target.max(1.0));
            assert_eq!(st.loglik(), before);
            assert!((st.fresh_loglik(&data) - before).abs() < 1e-10);
        }
    }

    #[test]
    fn rescale_total_follows_gamma() {
        let spec = PriorSpec::new(vec![1.0; 3], vec![2.0, 1.0, 3.0]).unwrap();
        let data = Dataset::empty(3);
        let mut st = ChainState::new(&data, lam(&[1.0, 1.0, 1.0]), p(&[1, 2, 3]), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let totals: Vec<f64> = (0..50_000)
            .map(|_| {
                rescale_lambda(&mut st, &spec, &mut rng).unwrap();
                st.lambda().sum()
            })
            .collect();
        let se = (6.0f64 / totals.len() as f64).sqrt();
        assert!((mean(&totals) - 6.0).abs() < 3.0 * se);
    }

    #[test]
    fn swap_acceptance_identities() {
        assert_eq!(swap_log_acceptance(-10.0, 2.0, -3.0, 2.0), 0.0);
        assert_eq!(swap_log_acceptance(-7.0, 1.0, -7.0, 4.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (li, lj) = (-rng.random_range(0.0..100.0), -rng.random_range(0.0..100.0));
            let (ti, tj) = (rng.random_range(1.0..3.0), rng.random_range(3.0..9.0));
            let direct = (lj / ti + li / tj) - (li / ti + lj / tj);
            assert!((swap_log_acceptance(li, ti, lj, tj) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn swaps_exchange_states_only() {
        let data = toy_data(10, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut states: Vec<ChainState> = [1.0, 1.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &t)| ChainState::new(&data, lam(&[1.0 + i as f64, 1.0, 2.0]), p(&[1, 3, 2]), t).unwrap())
            .collect();
        let before: Vec<_> = states.iter().map(|s| (s.lambda().clone(), s.loglik())).collect();
        for _ in 0..20 {
            let out = swap_chains(&mut states, &mut rng).unwrap();
            assert!(out.accepted, "equal temperatures always swap");
        }
        for s in &states {
            assert!(before.iter().any(|(l, ll)| l == s.lambda() && *ll == s.loglik()));
            assert_eq!(s.temp(), 1.0);
        }
        assert!(swap_chains(&mut states[..1], &mut rng).is_none());
    }

    #[test]
    fn full_conditional_normalizes() {
        let data = toy_data(12, 20);
        let spec = PriorSpec::new(vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.5]).unwrap();
        let st = ChainState::new(&data, lam(&[2.0, 0.7, 1.1]), p(&[1, 2, 3]), 1.0).unwrap();
        let probs = sigma_full_conditional(&st, &data, &spec, 6).unwrap();
        let total: f64 = probs.iter().map(|(_, pr)| pr).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(sigma_full_conditional(&st, &data, &spec, 2).is_err());

        let flat = PriorSpec::uniform(3);
        let st = ChainState::new(&Dataset::empty(3), lam(&[2.0, 0.7, 1.1]), p(&[1, 2, 3]), 1.0).unwrap();
        for (_, pr) in sigma_full_conditional(&st, &Dataset::empty(3), &flat, 6).unwrap() {
            assert!((pr - 1.0 / 6.0).abs() < 1e-14);
        }
    }

    /// σ-only chains with λ fixed: MH and Gibbs against the exact conditional.
    #[test]
    fn mh_and_gibbs_sigma_kernels_match_enumeration() {
        let data = toy_data(13, 6);
        let spec = PriorSpec::new(vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.5]).unwrap();
        let l = lam(&[2.0, 0.7, 1.1]);
        let exact = sigma_full_conditional(
            &ChainState::new(&data, l.clone(), p(&[1, 2, 3]), 1.0).unwrap(),
            &data,
            &spec,
            6,
        )
        .unwrap();
        let all: Vec<_> = exact.iter().map(|(s, _)| s.clone()).collect();
        let target: Vec<f64> = exact.iter().map(|(_, pr)| *pr).collect();

        let cfg = ProposalConfig::default_for(3)
            .with_weights([0.2, 0.2, 0.2, 0.3, 0.1])
            .unwrap();
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut mh = ChainState::new(&data, l.clone(), p(&[1, 2, 3]), 1.0).unwrap();
        let mut gibbs = mh.clone();
        let (mut c_mh, mut c_g) = (vec![0f64; 6], vec![0f64; 6]);
        for _ in 0..n {
            update_sigma_mh(&mut mh, &data, &spec, &cfg, &mut rng).unwrap();
            gibbs_update_sigma(&mut gibbs, &data, &spec, 6, &mut rng).unwrap();
            c_mh[all.iter().position(|s| s == mh.sigma()).unwrap()] += 1.0 / n as f64;
            c_g[all.iter().position(|s| s == gibbs.sigma()).unwrap()] += 1.0 / n as f64;
            assert!((mh.loglik() - mh.fresh_loglik(&data)).abs() < 1e-9);
        }
        assert!(total_variation(&c_mh, &target) < 0.01, "MH {c_mh:?} vs {target:?}");
        assert!(total_variation(&c_g, &target) < 0.01, "Gibbs {c_g:?} vs {target:?}");
    }

    #[test]
    fn restricted_support_is_never_left() {
        use crate::prior::SigmaSupport;
        let data = toy_data(15, 10);
        let support = SigmaSupport::new(vec![(p(&[1, 2, 3]), 0.5), (p(&[3, 2, 1]), 0.5)]).unwrap();
        let spec = PriorSpec::uniform(3).with_support(support).unwrap();
        let cfg = ProposalConfig::default_for(3);
        let mut st = ChainState::new(&data, lam(&[1.0, 2.0, 3.0]), p(&[1, 2, 3]), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..5000 {
            update_sigma_mh(&mut st, &data, &spec, &cfg, &mut rng).unwrap();
            assert!(spec.sigma_log_prior(st.sigma()).unwrap().is_finite());
        }
    }
}
