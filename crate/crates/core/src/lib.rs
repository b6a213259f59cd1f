//! Bayesian inference for the Extended Plackett-Luce ranking model.

pub mod error;
pub mod io;
pub mod model;
pub mod permutation;
pub mod predictive;
pub mod prior;
pub mod sampler;
pub mod stats;

pub use error::{EplError, Result};
pub use model::{
    epl_log_prob, eta_permutation, log_likelihood, modal_ordering, permute_lambda_for_mode, pl_log_prob, sample_epl,
    Dataset, LambdaVector,
};
pub use permutation::{all_permutations, factorial, Permutation};
pub use prior::{PriorSpec, SigmaSupport};
