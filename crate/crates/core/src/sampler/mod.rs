//! Posterior sampling by Metropolis-coupled MCMC.

pub mod chain;
pub mod draws;
pub mod engine;
pub mod ladder;
pub mod proposal;

pub use chain::{
    gibbs_update_sigma, rescale_lambda, sigma_full_conditional, swap_chains, swap_log_acceptance, update_lambda_mh,
    update_sigma_mh, ChainState, SigmaStep, SwapOutcome,
};
pub use draws::{Draw, DrawsMeta, PosteriorDraws};
pub use engine::{
    pilot_swap_rates, run_mc3, select_ratio, ChainStats, Diagnostics, Init, Mc3Config, Mc3Output, PilotResult,
    SigmaUpdate,
};
pub use ladder::TemperatureLadder;
pub use proposal::{poisson_partner, propose_sigma, ProposalConfig, SigmaMove};
