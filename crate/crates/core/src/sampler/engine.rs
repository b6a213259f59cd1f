//! Metropolis-coupled MCMC driver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{check_dim, EplError, Result};
use crate::model::{Dataset, LambdaVector};
use crate::permutation::Permutation;
use crate::prior::PriorSpec;
use crate::sampler::chain::{
    gibbs_update_sigma, rescale_lambda, swap_chains, update_lambda_mh, update_sigma_mh, ChainState,
};
use crate::sampler::draws::{Draw, DrawsMeta, PosteriorDraws};
use crate::sampler::ladder::TemperatureLadder;
use crate::sampler::proposal::{ProposalConfig, SigmaMove};

const SWAP_STREAM: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// Independent draw from the prior for every chain.
    Prior,
    /// Every chain starts from the same σ and, if given, λ (otherwise λ is drawn from its prior given σ).
    Fixed {
        sigma: Permutation,
        lambda: Option<LambdaVector>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaUpdate {
    Mh,
    /// Exact draw from the full conditional; refuses K above `max_k`.
    Gibbs {
        max_k: usize,
    },
}

#[derive(Clone, Debug)]
pub struct Mc3Config {
    pub ladder: TemperatureLadder,
    /// One proposal configuration per chain, in ladder order.
    pub proposals: Vec<ProposalConfig>,
    /// Total iterations including burn-in.
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub init: Init,
    pub sigma_update: SigmaUpdate,
    /// Worker threads; 1 runs every chain on the calling thread.
    pub threads: usize,
    /// Print a progress line to standard error every this many iterations.
    pub progress_interval: Option<u64>,
}

impl Mc3Config {
    /// A configuration with default proposals on every chain.
    pub fn new(k: usize, ladder: TemperatureLadder, iterations: u64, burn_in: u64, thin: u64, seed: u64) -> Self {
        let proposals = vec![ProposalConfig::default_for(k); ladder.len()];
        Mc3Config {
            ladder,
            proposals,
            iterations,
            burn_in,
            thin,
            seed,
            init: Init::Prior,
            sigma_update: SigmaUpdate::Mh,
            threads: 1,
            progress_interval: None,
        }
    }

    pub fn with_proposal(mut self, proposal: ProposalConfig) -> Self {
        self.proposals = vec![proposal; self.ladder.len()];
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.proposals.len() != self.ladder.len() {
            return Err(EplError::config(format!(
                "{} proposal configurations for {} chains",
                self.proposals.len(),
                self.ladder.len()
            )));
        }
        for p in &self.proposals {
            check_dim(k, p.lambda_step().len())?;
        }
        if self.thin == 0 {
            return Err(EplError::config("thin must be at least 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(EplError::config(format!(
                "burn-in {} leaves no iterations out of {}",
                self.burn_in, self.iterations
            )));
        }
        if self.threads == 0 {
            return Err(EplError::config("threads must be at least 1"));
        }
        if let Init::Fixed { sigma, lambda } = &self.init {
            check_dim(k, sigma.len())?;
            if let Some(l) = lambda {
                check_dim(k, l.len())?;
            }
        }
        if let SigmaUpdate::Gibbs { max_k } = self.sigma_update {
            if k > max_k {
                return Err(EplError::config(format!(
                    "Gibbs σ update requested for K = {k} above the limit {max_k}"
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of everything that determines the draws, for provenance.
    ///
    /// Thread count and progress reporting are excluded.
    pub fn fingerprint(&self, spec: &PriorSpec, data: &Dataset) -> String {
        let mut h = Sha256::new();
        let mut put = |s: String| {
            h.update(s.as_bytes());
            h.update(b"\n");
        };
        put(format!("temps={:?}", self.ladder.temps()));
        for p in &self.proposals {
            put(format!(
                "proposal={:?};{};{:?};{:?}",
                p.weights(),
                p.compound(),
                p.poisson_rate(),
                p.lambda_step()
            ));
        }
        put(format!(
            "iterations={};burn_in={};thin={};seed={}",
            self.iterations, self.burn_in, self.thin, self.seed
        ));
        put(format!("init={:?};sigma_update={:?}", self.init, self.sigma_update));
        put(format!("q={:?};a={:?}", spec.q(), spec.a()));
        if let Some(s) = spec.support() {
            for (sigma, mass) in s.entries() {
                put(format!("support={}:{:?}", sigma.to_dashed(), mass));
            }
        }
        put(format!("k={};n={}", data.k(), data.len()));
        for x in data.rankings() {
            put(x.to_dashed());
        }
        hex::encode(h.finalize())
    }
}

/// Acceptance counts for one chain slot (one temperature).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainStats {
    pub lambda_proposed: u64,
    pub lambda_accepted: Vec<u64>,
    pub sigma_proposed: [u64; 5],
    pub sigma_accepted: [u64; 5],
}

impl ChainStats {
    fn new(k: usize) -> Self {
        ChainStats {
            lambda_accepted: vec![0; k],
            ..ChainStats::default()
        }
    }

    pub fn lambda_rates(&self) -> Vec<f64> {
        self.lambda_accepted
            .iter()
            .map(|&a| ratio(a, self.lambda_proposed))
            .collect()
    }

    pub fn sigma_rate(&self, mechanism: SigmaMove) -> f64 {
        let i = mechanism.number() - 1;
        ratio(self.sigma_accepted[i], self.sigma_proposed[i])
    }

    pub fn sigma_overall_rate(&self) -> f64 {
        ratio(self.sigma_accepted.iter().sum(), self.sigma_proposed.iter().sum())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub temps: Vec<f64>,
    pub chains: Vec<ChainStats>,
    /// Attempts and acceptances for the adjacent pair `(c, c + 1)`.
    pub swap_attempts: Vec<u64>,
    pub swap_accepts: Vec<u64>,
    /// Cold-chain `(iteration, log-likelihood)` every `thin` iterations, burn-in included.
    pub trace: Vec<(u64, f64)>,
}

impl Diagnostics {
    pub fn swap_rates(&self) -> Vec<f64> {
        self.swap_attempts
            .iter()
            .zip(&self.swap_accepts)
            .map(|(&n, &a)| ratio(a, n))
            .collect()
    }

    /// Accepted over attempted swaps, pooled over pairs.
    pub fn overall_swap_rate(&self) -> f64 {
        ratio(self.swap_accepts.iter().sum(), self.swap_attempts.iter().sum())
    }
}

pub struct Mc3Output {
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
}

struct Slot {
    rng: ChaCha8Rng,
    stats: ChainStats,
    proposal: ProposalConfig,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn initial_state(data: &Dataset, spec: &PriorSpec, init: &Init, temp: f64, rng: &mut ChaCha8Rng) -> Result<ChainState> {
    let (sigma, lambda) = match init {
        Init::Prior => {
            let sigma = spec.sample_sigma(rng);
            let lambda = spec.sample_lambda(&sigma, rng)?;
            (sigma, lambda)
        }
        Init::Fixed { sigma, lambda } => {
            let lambda = match lambda {
                Some(l) => l.clone(),
                None => spec.sample_lambda(sigma, rng)?,
            };
            (sigma.clone(), lambda)
        }
    };
    if spec.sigma_log_prior(&sigma)? == f64::NEG_INFINITY {
        return Err(EplError::config(format!(
            "initial σ {sigma} has zero prior probability"
        )));
    }
    ChainState::new(data, lambda, sigma, temp)
}

fn chain_iteration(
    state: &mut ChainState,
    slot: &mut Slot,
    data: &Dataset,
    spec: &PriorSpec,
    sigma_update: SigmaUpdate,
    check: bool,
) -> Result<()> {
    let flags = update_lambda_mh(state, data, spec, &slot.proposal, &mut slot.rng)?;
    slot.stats.lambda_proposed += 1;
    for (count, ok) in slot.stats.lambda_accepted.iter_mut().zip(flags) {
        *count += ok as u64;
    }
    match sigma_update {
        SigmaUpdate::Mh => {
            let step = update_sigma_mh(state, data, spec, &slot.proposal, &mut slot.rng)?;
            let i = step.mechanism.number() - 1;
            slot.stats.sigma_proposed[i] += 1;
            slot.stats.sigma_accepted[i] += step.accepted as u64;
        }
        SigmaUpdate::Gibbs { max_k } => gibbs_update_sigma(state, data, spec, max_k, &mut slot.rng)?,
    }
    rescale_lambda(state, spec, &mut slot.rng)?;
    if check {
        let fresh = state.fresh_loglik(data);
        let cached = state.loglik();
        if (fresh - cached).abs() > 1e-8 * cached.abs().max(1.0) {
            return Err(EplError::Numerical(format!(
                "cached log-likelihood {cached} drifted from recomputed {fresh}"
            )));
        }
    }
    Ok(())
}

/// Runs the coupled chains and returns the thinned cold-chain draws.
///
/// Each chain slot owns its own random stream and the swap move has another,
/// so the output does not depend on `threads`.
pub fn run_mc3(data: &Dataset, spec: &PriorSpec, cfg: &Mc3Config) -> Result<Mc3Output> {
    let k = data.k();
    check_dim(k, spec.k())?;
    cfg.validate(k)?;
    let check_every: u64 = if cfg!(debug_assertions) { 1 } else { 1000 };

    let temps = cfg.ladder.temps().to_vec();
    let mut slots = Vec::with_capacity(temps.len());
    let mut states = Vec::with_capacity(temps.len());
    for (c, &temp) in temps.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, c as u64);
        states.push(initial_state(data, spec, &cfg.init, temp, &mut rng)?);
        slots.push(Slot {
            rng,
            stats: ChainStats::new(k),
            proposal: cfg.proposals[c].clone(),
        });
    }
    let mut swap_rng = stream_rng(cfg.seed, SWAP_STREAM);
    let pairs = temps.len().saturating_sub(1);
    let mut swap_attempts = vec![0u64; pairs];
    let mut swap_accepts = vec![0u64; pairs];
    let mut trace = Vec::new();
    let mut kept = Vec::with_capacity(((cfg.iterations - cfg.burn_in) / cfg.thin) as usize);

    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| EplError::config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    for t in 0..cfg.iterations {
        let check = (t + 1) % check_every == 0;
        let sweep = |states: &mut Vec<ChainState>, slots: &mut Vec<Slot>| -> Result<()> {
            match &pool {
                Some(pool) => pool.install(|| {
                    states
                        .par_iter_mut()
                        .zip(slots.par_iter_mut())
                        .map(|(st, slot)| chain_iteration(st, slot, data, spec, cfg.sigma_update, check))
                        .collect::<Vec<_>>()
                        .into_iter()
                        .collect::<Result<()>>()
                }),
                None => states
                    .iter_mut()
                    .zip(slots.iter_mut())
                    .try_for_each(|(st, slot)| chain_iteration(st, slot, data, spec, cfg.sigma_update, check)),
            }
        };
        sweep(&mut states, &mut slots)?;

        if let Some(out) = swap_chains(&mut states, &mut swap_rng) {
            swap_attempts[out.pair] += 1;
            swap_accepts[out.pair] += out.accepted as u64;
        }

        let cold = &states[0];
        if (t + 1) % cfg.thin == 0 {
            trace.push((t + 1, cold.loglik()));
        }
        if t >= cfg.burn_in && (t + 1 - cfg.burn_in).is_multiple_of(cfg.thin) {
            kept.push(Draw {
                iteration: t + 1,
                loglik: cold.loglik(),
                sigma: cold.sigma().clone(),
                lambda: cold.lambda().clone(),
            });
        }
        if let Some(every) = cfg.progress_interval {
            if every > 0 && (t + 1) % every == 0 {
                eprintln!(
                    "iteration {}/{}  cold loglik {:.4}  sigma {}",
                    t + 1,
                    cfg.iterations,
                    cold.loglik(),
                    cold.sigma()
                );
            }
        }
    }

    let meta = DrawsMeta {
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        seed: cfg.seed,
        config_hash: cfg.fingerprint(spec, data),
        entity_names: data.entity_names().map(|n| n.to_vec()),
    };
    Ok(Mc3Output {
        draws: PosteriorDraws::new(k, kept, meta)?,
        diagnostics: Diagnostics {
            temps,
            chains: slots.into_iter().map(|s| s.stats).collect(),
            swap_attempts,
            swap_accepts,
            trace,
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PilotResult {
    pub ratio: f64,
    pub overall_rate: f64,
    pub pair_rates: Vec<f64>,
}

/// Short runs of the ladder `r^(c−1)` for each candidate ratio, recording swap rates.
pub fn pilot_swap_rates(
    data: &Dataset,
    spec: &PriorSpec,
    base: &Mc3Config,
    chains: usize,
    ratios: &[f64],
    iterations: u64,
) -> Result<Vec<PilotResult>> {
    ratios
        .iter()
        .map(|&ratio| {
            let ladder = TemperatureLadder::geometric(chains, ratio)?;
            let mut cfg = base.clone();
            cfg.proposals = vec![base.proposals[0].clone(); ladder.len()];
            cfg.ladder = ladder;
            cfg.iterations = iterations;
            cfg.burn_in = 0;
            cfg.thin = 1;
            cfg.progress_interval = None;
            let out = run_mc3(data, spec, &cfg)?;
            Ok(PilotResult {
                ratio,
                overall_rate: out.diagnostics.overall_swap_rate(),
                pair_rates: out.diagnostics.swap_rates(),
            })
        })
        .collect()
}

/// Picks the ratio whose pooled swap rate is closest to 0.4, preferring those inside [0.2, 0.6].
pub fn select_ratio(results: &[PilotResult]) -> Option<f64> {
    let in_band = |r: &PilotResult| (0.2..=0.6).contains(&r.overall_rate);
    let dist = |r: &PilotResult| (r.overall_rate - 0.4).abs();
    results
        .iter()
        .filter(|r| !r.overall_rate.is_nan())
        .min_by(|a, b| in_band(b).cmp(&in_band(a)).then(dist(a).total_cmp(&dist(b))))
        .map(|r| r.ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_epl;
    use crate::permutation::all_permutations;
    use crate::stats::{chi_square_sf, chi_square_statistic};

    fn p(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    fn synthetic(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = LambdaVector::new(vec![4.0, 2.0, 1.0, 0.5]).unwrap();
        let s = p(&[3, 1, 4, 2]);
        let xs = (0..n).map(|_| sample_epl(&l, &s, &mut rng).unwrap()).collect();
        Dataset::new(4, xs).unwrap()
    }

    #[test]
    fn validation() {
        let mut cfg = Mc3Config::new(3, TemperatureLadder::single(), 100, 100, 1, 0);
        assert!(cfg.validate(3).is_err());
        cfg.burn_in = 10;
        cfg.thin = 0;
        assert!(cfg.validate(3).is_err());
        cfg.thin = 1;
        assert!(cfg.validate(3).is_ok());
        assert!(cfg.validate(4).is_err());
        cfg.sigma_update = SigmaUpdate::Gibbs { max_k: 2 };
        assert!(cfg.validate(3).is_err());
    }

    #[test]
    fn kept_count_and_iterations() {
        let data = synthetic(1, 20);
        let cfg = Mc3Config::new(4, TemperatureLadder::geometric(3, 1.5).unwrap(), 250, 50, 20, 7);
        let out = run_mc3(&data, &PriorSpec::uniform(4), &cfg).unwrap();
        let its: Vec<u64> = out.draws.draws().iter().map(|d| d.iteration).collect();
        assert_eq!(its, vec![70, 90, 110, 130, 150, 170, 190, 210, 230, 250]);
        assert_eq!(out.diagnostics.trace.len(), 12);
        assert_eq!(out.diagnostics.swap_attempts.iter().sum::<u64>(), 250);
        assert_eq!(out.diagnostics.chains[0].lambda_proposed, 250);
        for d in out.draws.draws() {
            let fresh = crate::model::log_likelihood(&data, &d.lambda, &d.sigma).unwrap();
            assert!((fresh - d.loglik).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_across_threads() {
        let data = synthetic(2, 30);
        let mut cfg = Mc3Config::new(4, TemperatureLadder::geometric(4, 1.3).unwrap(), 400, 100, 3, 11);
        let a = run_mc3(&data, &PriorSpec::uniform(4), &cfg).unwrap();
        cfg.threads = 3;
        let b = run_mc3(&data, &PriorSpec::uniform(4), &cfg).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.diagnostics, b.diagnostics);
        cfg.seed = 12;
        let c = run_mc3(&data, &PriorSpec::uniform(4), &cfg).unwrap();
        assert_ne!(a.draws.draws(), c.draws.draws());
        assert_eq!(a.draws.meta().config_hash.len(), 64);
        assert_ne!(a.draws.meta().config_hash, c.draws.meta().config_hash);
    }

    #[test]
    fn identity_support_never_moves() {
        use crate::prior::SigmaSupport;
        let data = synthetic(3, 25);
        let spec = PriorSpec::uniform(4)
            .with_support(SigmaSupport::single(Permutation::identity(4)))
            .unwrap();
        let mut cfg = Mc3Config::new(4, TemperatureLadder::geometric(2, 2.0).unwrap(), 300, 0, 1, 5);
        let out = run_mc3(&data, &spec, &cfg).unwrap();
        assert!(out.draws.draws().iter().all(|d| d.sigma.is_identity()));
        cfg.init = Init::Fixed {
            sigma: Permutation::reversed_identity(4),
            lambda: None,
        };
        assert!(run_mc3(&data, &spec, &cfg).is_err());
    }

    /// No data: the cold chain must reproduce the PL(q) prior on σ.
    #[test]
    fn sigma_prior_recovered_without_data() {
        let spec = PriorSpec::new(vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 1.0]).unwrap();
        let cfg = Mc3Config::new(3, TemperatureLadder::geometric(2, 2.0).unwrap(), 60_000, 1000, 5, 21);
        let out = run_mc3(&Dataset::empty(3), &spec, &cfg).unwrap();
        let perms: Vec<_> = all_permutations(3).collect();
        let mut counts = vec![0usize; 6];
        for d in out.draws.draws() {
            counts[perms.iter().position(|s| *s == d.sigma).unwrap()] += 1;
        }
        let n = out.draws.len() as f64;
        let expected: Vec<f64> = perms
            .iter()
            .map(|s| n * spec.sigma_log_prior(s).unwrap().exp())
            .collect();
        let pval = chi_square_sf(chi_square_statistic(&counts, &expected), 5.0);
        assert!(pval > 0.001, "p = {pval}, counts {counts:?}");
    }

    #[test]
    fn pilot_reports_each_ratio() {
        let data = synthetic(4, 40);
        let cfg = Mc3Config::new(4, TemperatureLadder::single(), 10, 0, 1, 3);
        let res = pilot_swap_rates(&data, &PriorSpec::uniform(4), &cfg, 4, &[1.1, 3.0], 300).unwrap();
        assert_eq!(res.len(), 2);
        assert_eq!(res[0].pair_rates.len(), 3);
        assert!(res[0].overall_rate >= res[1].overall_rate);
        let pick = |rates: &[f64]| {
            let r: Vec<_> = rates
                .iter()
                .enumerate()
                .map(|(i, &o)| PilotResult {
                    ratio: i as f64 + 1.5,
                    overall_rate: o,
                    pair_rates: vec![],
                })
                .collect();
            select_ratio(&r).unwrap()
        };
        assert_eq!(pick(&[0.9, 0.5, 0.25]), 2.5);
        assert_eq!(pick(&[0.9, 0.7, 0.05]), 2.5);
    }
}
