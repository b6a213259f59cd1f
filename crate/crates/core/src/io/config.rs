//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! k = 5
//! prior.q = 1, 2, 3, 4, 5
//! sampler.chains = 5
//! sampler.temp_ratio = auto
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{EplError, Result};
use crate::model::LambdaVector;
use crate::permutation::Permutation;
use crate::predictive::{DEFAULT_DRAWS_PER_ITERATION, DEFAULT_ENUMERATE_MAX_K, DEFAULT_RESTARTS};
use crate::prior::{PriorSpec, SigmaSupport};
use crate::sampler::{Init, Mc3Config, ProposalConfig, SigmaUpdate, TemperatureLadder};

pub const PILOT_RATIOS: [f64; 4] = [1.1, 1.3, 1.5, 2.0];

#[derive(Clone, Debug, PartialEq)]
pub enum TempSetting {
    /// Choose the geometric ratio by short pilot runs.
    Auto,
    Ratio(f64),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitSetting {
    Prior,
    Fixed {
        sigma: Vec<usize>,
        lambda: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub k: Option<usize>,
    pub q: Option<Vec<f64>>,
    pub a: Option<Vec<f64>>,
    pub sigma_support: Option<Vec<(Vec<usize>, f64)>>,
    pub chains: usize,
    pub temps: TempSetting,
    pub pilot_iterations: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub proposal_weights: [f64; 5],
    pub compound: usize,
    pub poisson_rate: f64,
    pub lambda_step: Vec<f64>,
    /// Per-chain overrides keyed by 1-based chain index.
    pub chain_lambda_step: BTreeMap<usize, Vec<f64>>,
    pub chain_proposal_weights: BTreeMap<usize, [f64; 5]>,
    pub seed: u64,
    pub init: InitSetting,
    pub gibbs: bool,
    pub gibbs_max_k: usize,
    pub threads: usize,
    pub progress_interval: Option<u64>,
    pub draws_per_iteration: usize,
    pub enumerate_max_k: usize,
    pub restarts: usize,
    pub data_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: None,
            q: None,
            a: None,
            sigma_support: None,
            chains: 5,
            temps: TempSetting::Auto,
            pilot_iterations: 2000,
            iterations: 110_000,
            burn_in: 10_000,
            thin: 10,
            proposal_weights: [0.2; 5],
            compound: 3,
            poisson_rate: 1.0,
            lambda_step: vec![0.5],
            chain_lambda_step: BTreeMap::new(),
            chain_proposal_weights: BTreeMap::new(),
            seed: 1,
            init: InitSetting::Prior,
            gibbs: false,
            gibbs_max_k: 6,
            threads: 1,
            progress_interval: None,
            draws_per_iteration: DEFAULT_DRAWS_PER_ITERATION,
            enumerate_max_k: DEFAULT_ENUMERATE_MAX_K,
            restarts: DEFAULT_RESTARTS,
            data_path: None,
            out_dir: None,
        }
    }
}

/// Everything the sampler needs once K is known.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub spec: PriorSpec,
    /// Sampler settings; the ladder is a single chain placeholder when the ratio is `auto`.
    pub mc3: Mc3Config,
    pub needs_pilot: bool,
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| EplError::config(format!("{key}: cannot parse '{}'", v.trim())))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let v = v.trim().trim_start_matches(['(', '[']).trim_end_matches([')', ']']);
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_weights(key: &str, v: &str) -> Result<[f64; 5]> {
    let w: Vec<f64> = parse_list(key, v)?;
    w.try_into()
        .map_err(|w: Vec<f64>| EplError::config(format!("{key}: expected 5 weights, got {}", w.len())))
}

fn parse_perm(key: &str, v: &str) -> Result<Vec<usize>> {
    let perm: Permutation = v
        .parse()
        .map_err(|e: EplError| EplError::config(format!("{key}: {e}")))?;
    Ok(perm.to_vec())
}

/// `"1-2-3:0.5; 3-2-1:0.5"`.
fn parse_support(key: &str, v: &str) -> Result<Vec<(Vec<usize>, f64)>> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (perm, mass) = entry
                .split_once(':')
                .ok_or_else(|| EplError::config(format!("{key}: entry '{entry}' lacks ':mass'")))?;
            Ok((parse_perm(key, perm)?, parse_num(key, mass)?))
        })
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EplError::io(path, e))?;
        RunConfig::parse(&text).map_err(|e| match e {
            EplError::Config(msg) => EplError::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| EplError::config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if let Some(prev) = seen.insert(key.to_string(), i + 1) {
                return Err(EplError::config(format!(
                    "line {}: '{key}' already set on line {prev}",
                    i + 1
                )));
            }
            cfg.set(key, value.trim())
                .map_err(|e| EplError::config(format!("line {}: {}", i + 1, strip_config(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one setting; used by the parser and for command-line overrides.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "k" => self.k = Some(parse_num(key, v)?),
            "prior.q" => self.q = Some(parse_list(key, v)?),
            "prior.a" => self.a = Some(parse_list(key, v)?),
            "prior.sigma_support" => self.sigma_support = Some(parse_support(key, v)?),
            "sampler.chains" => self.chains = parse_num(key, v)?,
            "sampler.temp_ratio" => {
                if !matches!(self.temps, TempSetting::Explicit(_)) {
                    self.temps = if v.eq_ignore_ascii_case("auto") {
                        TempSetting::Auto
                    } else {
                        TempSetting::Ratio(parse_num(key, v)?)
                    };
                }
            }
            "sampler.temperatures" => self.temps = TempSetting::Explicit(parse_list(key, v)?),
            "sampler.pilot_iterations" => self.pilot_iterations = parse_num(key, v)?,
            "sampler.iterations" => self.iterations = parse_num(key, v)?,
            "sampler.burn_in" => self.burn_in = parse_num(key, v)?,
            "sampler.thin" => self.thin = parse_num(key, v)?,
            "sampler.proposal_weights" => self.proposal_weights = parse_weights(key, v)?,
            "sampler.compound" => self.compound = parse_num(key, v)?,
            "sampler.poisson_rate" => self.poisson_rate = parse_num(key, v)?,
            "sampler.lambda_step" => self.lambda_step = parse_list(key, v)?,
            "sampler.seed" => self.seed = parse_num(key, v)?,
            "sampler.init" => match v {
                "prior" => self.init = InitSetting::Prior,
                "fixed" => {
                    if !matches!(self.init, InitSetting::Fixed { .. }) {
                        self.init = InitSetting::Fixed {
                            sigma: vec![],
                            lambda: None,
                        }
                    }
                }
                _ => return Err(EplError::config(format!("{key}: expected prior or fixed, got '{v}'"))),
            },
            "sampler.init_sigma" => {
                let s = parse_perm(key, v)?;
                match &mut self.init {
                    InitSetting::Fixed { sigma, .. } => *sigma = s,
                    InitSetting::Prior => self.init = InitSetting::Fixed { sigma: s, lambda: None },
                }
            }
            "sampler.init_lambda" => {
                let l = parse_list(key, v)?;
                match &mut self.init {
                    InitSetting::Fixed { lambda, .. } => *lambda = Some(l),
                    InitSetting::Prior => {
                        self.init = InitSetting::Fixed {
                            sigma: vec![],
                            lambda: Some(l),
                        }
                    }
                }
            }
            "sampler.sigma_update" => {
                self.gibbs = match v {
                    "mh" => false,
                    "gibbs" => true,
                    _ => return Err(EplError::config(format!("{key}: expected mh or gibbs, got '{v}'"))),
                }
            }
            "sampler.gibbs_max_k" => self.gibbs_max_k = parse_num(key, v)?,
            "sampler.threads" => self.threads = parse_num(key, v)?,
            "sampler.progress_interval" => {
                let n: u64 = parse_num(key, v)?;
                self.progress_interval = (n > 0).then_some(n);
            }
            "predictive.draws_per_iteration" => self.draws_per_iteration = parse_num(key, v)?,
            "predictive.enumerate_max_k" => self.enumerate_max_k = parse_num(key, v)?,
            "predictive.restarts" => self.restarts = parse_num(key, v)?,
            "paths.data" => self.data_path = Some(PathBuf::from(v)),
            "paths.out" => self.out_dir = Some(PathBuf::from(v)),
            other => return self.set_chain_override(other, v),
        }
        Ok(())
    }

    fn set_chain_override(&mut self, key: &str, v: &str) -> Result<()> {
        let unknown = || EplError::config(format!("unknown key '{key}'"));
        let rest = key.strip_prefix("sampler.chain").ok_or_else(unknown)?;
        let (idx, field) = rest.split_once('.').ok_or_else(unknown)?;
        let idx: usize = idx.parse().map_err(|_| unknown())?;
        if idx == 0 {
            return Err(EplError::config(format!("{key}: chains are numbered from 1")));
        }
        match field {
            "lambda_step" => {
                self.chain_lambda_step.insert(idx, parse_list(key, v)?);
            }
            "proposal_weights" => {
                self.chain_proposal_weights.insert(idx, parse_weights(key, v)?);
            }
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Checks everything that does not depend on K; with K known, resolves fully.
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(EplError::config("sampler.chains must be at least 1"));
        }
        match &self.temps {
            TempSetting::Ratio(r) => {
                TemperatureLadder::geometric(self.chains, *r)?;
            }
            TempSetting::Explicit(t) => {
                if t.len() != self.chains {
                    return Err(EplError::config(format!(
                        "sampler.temperatures lists {} values for {} chains",
                        t.len(),
                        self.chains
                    )));
                }
                TemperatureLadder::new(t.clone())?;
            }
            TempSetting::Auto => {
                if self.chains > 1 && self.pilot_iterations == 0 {
                    return Err(EplError::config("sampler.pilot_iterations must be positive"));
                }
            }
        }
        if let Some(&c) = self
            .chain_lambda_step
            .keys()
            .chain(self.chain_proposal_weights.keys())
            .find(|&&c| c > self.chains)
        {
            return Err(EplError::config(format!(
                "override for chain {c} but only {} chains",
                self.chains
            )));
        }
        if let InitSetting::Fixed { sigma, .. } = &self.init {
            if sigma.is_empty() {
                return Err(EplError::config("sampler.init = fixed requires sampler.init_sigma"));
            }
        }
        if self.draws_per_iteration == 0 {
            return Err(EplError::config("predictive.draws_per_iteration must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(EplError::config("predictive.restarts must be at least 1"));
        }
        if let Some(k) = self.k {
            self.resolve(k)?;
        } else {
            // K-free parts of the proposal still need checking
            let k = self.lambda_step.len();
            self.proposal(&self.proposal_weights, &self.lambda_step, k)?;
        }
        Ok(())
    }

    fn expand(&self, key: &str, values: &[f64], k: usize) -> Result<Vec<f64>> {
        match values.len() {
            1 => Ok(vec![values[0]; k]),
            n if n == k => Ok(values.to_vec()),
            n => Err(EplError::config(format!("{key}: expected 1 or {k} values, got {n}"))),
        }
    }

    fn proposal(&self, weights: &[f64; 5], step: &[f64], k: usize) -> Result<ProposalConfig> {
        let step = self.expand("sampler.lambda_step", step, k)?;
        ProposalConfig::new(*weights, self.compound, self.poisson_rate, step)
    }

    pub fn prior_spec(&self, k: usize) -> Result<PriorSpec> {
        let q = self.q.clone().unwrap_or_else(|| vec![1.0; k]);
        let a = self.a.clone().unwrap_or_else(|| vec![1.0; k]);
        if q.len() != k || a.len() != k {
            return Err(EplError::config(format!(
                "prior.q and prior.a need {k} values, got {} and {}",
                q.len(),
                a.len()
            )));
        }
        let spec = PriorSpec::new(q, a)?;
        match &self.sigma_support {
            None => Ok(spec),
            Some(entries) => {
                let entries = entries
                    .iter()
                    .map(|(s, m)| Ok((Permutation::new(s.clone())?, *m)))
                    .collect::<Result<Vec<_>>>()?;
                spec.with_support(SigmaSupport::new(entries)?)
            }
        }
    }

    /// Builds the prior and sampler settings for `k` entities.
    pub fn resolve(&self, k: usize) -> Result<ResolvedRun> {
        if let Some(ck) = self.k {
            if ck != k {
                return Err(EplError::DimensionMismatch { expected: ck, found: k });
            }
        }
        let spec = self.prior_spec(k)?;
        let (ladder, needs_pilot) = match &self.temps {
            TempSetting::Explicit(t) => (TemperatureLadder::new(t.clone())?, false),
            TempSetting::Ratio(r) => (TemperatureLadder::geometric(self.chains, *r)?, false),
            TempSetting::Auto if self.chains == 1 => (TemperatureLadder::single(), false),
            TempSetting::Auto => (TemperatureLadder::geometric(self.chains, PILOT_RATIOS[0])?, true),
        };
        let proposals = (1..=ladder.len())
            .map(|c| {
                let w = self.chain_proposal_weights.get(&c).unwrap_or(&self.proposal_weights);
                let s = self.chain_lambda_step.get(&c).unwrap_or(&self.lambda_step);
                self.proposal(w, s, k)
            })
            .collect::<Result<Vec<_>>>()?;
        let init = match &self.init {
            InitSetting::Prior => Init::Prior,
            InitSetting::Fixed { sigma, lambda } => Init::Fixed {
                sigma: Permutation::new(sigma.clone())?,
                lambda: lambda.clone().map(LambdaVector::new).transpose()?,
            },
        };
        let sigma_update = if self.gibbs {
            SigmaUpdate::Gibbs {
                max_k: self.gibbs_max_k,
            }
        } else {
            SigmaUpdate::Mh
        };
        let mc3 = Mc3Config {
            ladder,
            proposals,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            init,
            sigma_update,
            threads: self.threads,
            progress_interval: self.progress_interval,
        };
        mc3.validate(k)?;
        if let Init::Fixed { sigma, .. } = &mc3.init {
            if spec.sigma_log_prior(sigma)? == f64::NEG_INFINITY {
                return Err(EplError::config(format!(
                    "sampler.init_sigma {sigma} is outside the prior support"
                )));
            }
        }
        Ok(ResolvedRun { spec, mc3, needs_pilot })
    }
}

fn strip_config(e: EplError) -> String {
    match e {
        EplError::Config(m) => m,
        other => other.to_string(),
    }
}
