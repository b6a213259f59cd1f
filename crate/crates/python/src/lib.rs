//! Python bindings for `eplrank-core`.
//!
//! Rankings, orderings and σ are plain lists of 1-based entity numbers;
//! λ is a list of positive floats.

use std::path::PathBuf;

use eplrank_core::io::{self, RunConfig};
use eplrank_core::predictive::{self, RankMatrix};
use eplrank_core::sampler::PosteriorDraws;
use eplrank_core::{model, Dataset, EplError, LambdaVector, Permutation, PriorSpec, SigmaSupport};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyTuple};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py(e: EplError) -> PyErr {
    match e {
        EplError::Io { .. } => PyOSError::new_err(e.to_string()),
        EplError::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn perm(v: Vec<usize>) -> PyResult<Permutation> {
    Permutation::new(v).map_err(to_py)
}

fn lambda(v: Vec<f64>) -> PyResult<LambdaVector> {
    LambdaVector::new(v).map_err(to_py)
}

fn dataset(rankings: Vec<Vec<usize>>) -> PyResult<Dataset> {
    let k = rankings
        .first()
        .map(Vec::len)
        .ok_or_else(|| PyValueError::new_err("at least one ranking is required"))?;
    let perms = rankings.into_iter().map(perm).collect::<PyResult<Vec<_>>>()?;
    Dataset::new(k, perms).map_err(to_py)
}

fn matrix_rows(m: &RankMatrix) -> Vec<Vec<f64>> {
    m.rows().map(<[f64]>::to_vec).collect()
}

/// Log-probability of `ranking` under EPL(λ, σ).
#[pyfunction]
fn epl_log_prob(ranking: Vec<usize>, lam: Vec<f64>, sigma: Vec<usize>) -> PyResult<f64> {
    model::epl_log_prob(&perm(ranking)?, &lambda(lam)?, &perm(sigma)?).map_err(to_py)
}

/// Log-probability of `ranking` under the standard Plackett-Luce model.
#[pyfunction]
fn pl_log_prob(ranking: Vec<usize>, lam: Vec<f64>) -> PyResult<f64> {
    model::pl_log_prob(&perm(ranking)?, &lambda(lam)?).map_err(to_py)
}

#[pyfunction]
fn log_likelihood(rankings: Vec<Vec<usize>>, lam: Vec<f64>, sigma: Vec<usize>) -> PyResult<f64> {
    model::log_likelihood(&dataset(rankings)?, &lambda(lam)?, &perm(sigma)?).map_err(to_py)
}

/// Most probable ranking under EPL(λ, σ).
#[pyfunction]
fn modal_ordering(lam: Vec<f64>, sigma: Vec<usize>) -> PyResult<Vec<usize>> {
    Ok(model::modal_ordering(&lambda(lam)?, &perm(sigma)?)
        .map_err(to_py)?
        .to_vec())
}

#[pyfunction]
#[pyo3(signature = (lam, sigma, n, seed=1))]
fn sample_epl(lam: Vec<f64>, sigma: Vec<usize>, n: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
    let (lam, sigma) = (lambda(lam)?, perm(sigma)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Ok(model::sample_epl(&lam, &sigma, &mut rng).map_err(to_py)?.to_vec()))
        .collect()
}

/// Simulates `n` rankings; unspecified parameters come from the uniform prior.
///
/// Returns `(rankings, lambda, sigma)`.
#[pyfunction]
#[pyo3(signature = (k, n, seed=1, lam=None, sigma=None))]
#[allow(clippy::type_complexity)]
fn simulate(
    k: usize,
    n: usize,
    seed: u64,
    lam: Option<Vec<f64>>,
    sigma: Option<Vec<usize>>,
) -> PyResult<(Vec<Vec<usize>>, Vec<f64>, Vec<usize>)> {
    let lam = lam.map(lambda).transpose()?;
    let sigma = sigma.map(perm).transpose()?;
    let (data, truth) = io::simulate_dataset(k, n, lam, sigma, seed).map_err(to_py)?;
    let rankings = data.rankings().iter().map(Permutation::to_vec).collect();
    Ok((rankings, truth.lambda.into_vec(), truth.sigma.to_vec()))
}

/// Reads a rankings CSV. Returns `(rankings, names)`; `names` is `None` without a header.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn load_rankings(path: PathBuf) -> PyResult<(Vec<Vec<usize>>, Option<Vec<String>>)> {
    let data = io::load_rankings(&path).map_err(to_py)?;
    let rankings = data.rankings().iter().map(Permutation::to_vec).collect();
    Ok((rankings, data.entity_names().map(<[String]>::to_vec)))
}

/// Observed proportion of rankings placing each entity at each position.
#[pyfunction]
fn empirical_rank_matrix(rankings: Vec<Vec<usize>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(matrix_rows(
        &predictive::empirical_rank_matrix(&dataset(rankings)?).map_err(to_py)?,
    ))
}

/// Prior over (σ, λ): σ from a Plackett-Luce prior with weights `q` or an explicit
/// support table, and λ given σ from independent gammas with shapes `a`.
#[pyclass(name = "Prior", module = "eplrank", frozen)]
struct PyPrior {
    inner: PriorSpec,
}

#[pymethods]
impl PyPrior {
    #[new]
    #[pyo3(signature = (k=None, q=None, a=None, support=None))]
    fn new(
        k: Option<usize>,
        q: Option<Vec<f64>>,
        a: Option<Vec<f64>>,
        support: Option<Vec<(Vec<usize>, f64)>>,
    ) -> PyResult<Self> {
        let k = k
            .or(q.as_ref().map(Vec::len))
            .or(a.as_ref().map(Vec::len))
            .or(support.as_ref().and_then(|s| s.first()).map(|s| s.0.len()))
            .ok_or_else(|| PyValueError::new_err("give k or at least one of q, a, support"))?;
        let mut inner =
            PriorSpec::new(q.unwrap_or_else(|| vec![1.0; k]), a.unwrap_or_else(|| vec![1.0; k])).map_err(to_py)?;
        if let Some(entries) = support {
            let entries = entries
                .into_iter()
                .map(|(s, w)| Ok((perm(s)?, w)))
                .collect::<PyResult<Vec<_>>>()?;
            inner = inner
                .with_support(SigmaSupport::new(entries).map_err(to_py)?)
                .map_err(to_py)?;
        }
        if inner.k() != k {
            return Err(to_py(EplError::DimensionMismatch {
                expected: k,
                found: inner.k(),
            }));
        }
        Ok(PyPrior { inner })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q().to_vec()
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        self.inner.a().to_vec()
    }

    fn sigma_log_prior(&self, sigma: Vec<usize>) -> PyResult<f64> {
        self.inner.sigma_log_prior(&perm(sigma)?).map_err(to_py)
    }

    fn lambda_log_prior(&self, lam: Vec<f64>, sigma: Vec<usize>) -> PyResult<f64> {
        self.inner.lambda_log_prior(&lambda(lam)?, &perm(sigma)?).map_err(to_py)
    }

    /// `n` independent `(sigma, lambda)` draws.
    #[pyo3(signature = (n, seed=1))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<(Vec<usize>, Vec<f64>)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s = self.inner.sample_sigma(&mut rng);
                let l = self.inner.sample_lambda(&s, &mut rng).map_err(to_py)?;
                Ok((s.to_vec(), l.into_vec()))
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Prior(k={}, q={:?}, a={:?})",
            self.inner.k(),
            self.inner.q(),
            self.inner.a()
        )
    }
}

/// Posterior draws of (σ, λ) from the cold chain.
#[pyclass(name = "Posterior", module = "eplrank", frozen)]
struct PyPosterior {
    inner: PosteriorDraws,
}

#[pymethods]
impl PyPosterior {
    /// Reads a draws file written by `fit` or the command-line tool.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyPosterior {
            inner: io::read_draws(&path).map_err(to_py)?,
        })
    }

    /// Builds a posterior from explicit `(lambda, sigma)` pairs.
    #[staticmethod]
    fn from_draws(k: usize, draws: Vec<(Vec<f64>, Vec<usize>)>) -> PyResult<Self> {
        let pairs = draws
            .into_iter()
            .map(|(l, s)| Ok((lambda(l)?, perm(s)?)))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyPosterior {
            inner: PosteriorDraws::from_pairs(k, pairs).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_draws(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.meta().seed
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.meta().config_hash.clone()
    }

    #[getter]
    fn entity_names(&self) -> Option<Vec<String>> {
        self.inner.meta().entity_names.clone()
    }

    #[getter]
    fn sigmas(&self) -> Vec<Vec<usize>> {
        self.inner.draws().iter().map(|d| d.sigma.to_vec()).collect()
    }

    #[getter]
    fn lambdas(&self) -> Vec<Vec<f64>> {
        self.inner
            .draws()
            .iter()
            .map(|d| d.lambda.as_slice().to_vec())
            .collect()
    }

    #[getter]
    fn logliks(&self) -> Vec<f64> {
        self.inner.draws().iter().map(|d| d.loglik).collect()
    }

    /// `(sigma, count)` pairs, most frequent first.
    fn sigma_counts(&self) -> Vec<(Vec<usize>, usize)> {
        self.inner
            .sigma_counts()
            .into_iter()
            .map(|(s, c)| (s.to_vec(), c))
            .collect()
    }

    /// Most frequent σ and its posterior probability.
    fn modal_sigma(&self) -> Option<(Vec<usize>, f64)> {
        self.inner.modal_sigma().map(|(s, p)| (s.to_vec(), p))
    }

    fn sigma_probability(&self, sigma: Vec<usize>) -> PyResult<f64> {
        Ok(self.inner.sigma_probability(&perm(sigma)?))
    }

    /// Rows are stages, columns entities: share of draws with σ at that stage equal to the entity.
    fn sigma_marginal(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix_rows(
            &predictive::sigma_marginal_matrix(&self.inner).map_err(to_py)?,
        ))
    }

    /// Exact posterior predictive over all K! rankings, most probable first.
    #[pyo3(signature = (max_k=predictive::DEFAULT_ENUMERATE_MAX_K))]
    fn predictive(&self, py: Python<'_>, max_k: usize) -> PyResult<Vec<(Vec<usize>, f64)>> {
        let dist = py
            .detach(|| predictive::enumerate_predictive(&self.inner, max_k))
            .map_err(to_py)?;
        Ok(dist
            .top(dist.entries().len())
            .into_iter()
            .map(|(x, p)| (x.to_vec(), p))
            .collect())
    }

    /// `per_draw` predictive rankings for each posterior draw.
    #[pyo3(signature = (per_draw=predictive::DEFAULT_DRAWS_PER_ITERATION, seed=1))]
    fn sample_predictive(&self, py: Python<'_>, per_draw: usize, seed: u64) -> PyResult<Vec<Vec<usize>>> {
        let sample = py
            .detach(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                predictive::sample_predictive(&self.inner, per_draw, &mut rng)
            })
            .map_err(to_py)?;
        Ok(sample
            .iter_zero_based()
            .map(|x| x.iter().map(|e| e + 1).collect())
            .collect())
    }

    /// Predictive probability of each entity at each position; exact up to
    /// `max_k` entities, simulated above.
    #[pyo3(signature = (max_k=predictive::DEFAULT_ENUMERATE_MAX_K, per_draw=predictive::DEFAULT_DRAWS_PER_ITERATION, seed=1))]
    fn rank_matrix(&self, py: Python<'_>, max_k: usize, per_draw: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let m = py
            .detach(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                io::report::predictive_marginals(&self.inner, max_k, per_draw, &mut rng)
            })
            .map_err(to_py)?;
        Ok(matrix_rows(&m))
    }

    /// Expected number of `n` new rankings placing each entity in the top `p`.
    #[pyo3(signature = (p, n, max_k=predictive::DEFAULT_ENUMERATE_MAX_K, per_draw=predictive::DEFAULT_DRAWS_PER_ITERATION, seed=1))]
    fn expected_top_p(
        &self,
        py: Python<'_>,
        p: usize,
        n: usize,
        max_k: usize,
        per_draw: usize,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        py.detach(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = io::report::predictive_marginals(&self.inner, max_k, per_draw, &mut rng)?;
            predictive::expected_top_p_counts(&m, p, n)
        })
        .map_err(to_py)
    }

    /// Most probable predictive ranking by coordinate ascent.
    ///
    /// Returns `(ranking, probability, std_error)`.
    #[pyo3(signature = (restarts=predictive::DEFAULT_RESTARTS, seed=1))]
    fn aggregate(&self, py: Python<'_>, restarts: usize, seed: u64) -> PyResult<(Vec<usize>, f64, f64)> {
        let agg = py
            .detach(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                predictive::aggregate_mode(&self.inner, restarts, &mut rng)
            })
            .map_err(to_py)?;
        Ok((agg.ranking.to_vec(), agg.probability, agg.std_error))
    }

    fn __repr__(&self) -> String {
        format!("Posterior(k={}, draws={})", self.inner.k(), self.inner.len())
    }
}

/// Result of `fit`: the posterior plus sampler diagnostics.
#[pyclass(name = "Fit", module = "eplrank", frozen)]
struct PyFit {
    #[pyo3(get)]
    posterior: Py<PyPosterior>,
    #[pyo3(get)]
    temperatures: Vec<f64>,
    #[pyo3(get)]
    swap_rates: Vec<f64>,
    #[pyo3(get)]
    overall_swap_rate: f64,
    #[pyo3(get)]
    lambda_acceptance: Vec<Vec<f64>>,
    #[pyo3(get)]
    sigma_acceptance: Vec<f64>,
    #[pyo3(get)]
    pilot_ratio: Option<f64>,
    #[pyo3(get)]
    trace: Vec<(u64, f64)>,
}

fn config_value(v: &Bound<'_, PyAny>) -> PyResult<String> {
    if v.is_instance_of::<PyList>() || v.is_instance_of::<PyTuple>() {
        let parts = v
            .try_iter()?
            .map(|x| Ok(x?.str()?.to_string()))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(parts.join(","))
    } else {
        Ok(v.str()?.to_string())
    }
}

/// Runs the sampler on `rankings`.
///
/// `config` maps configuration keys (as in the config file, e.g.
/// `"sampler.iterations"`) to values; lists are joined with commas.
#[pyfunction]
#[pyo3(signature = (rankings, config=None, names=None))]
fn fit(
    py: Python<'_>,
    rankings: Vec<Vec<usize>>,
    config: Option<&Bound<'_, PyDict>>,
    names: Option<Vec<String>>,
) -> PyResult<PyFit> {
    let mut data = dataset(rankings)?;
    if let Some(names) = names {
        data = data.with_names(names).map_err(to_py)?;
    }
    let mut cfg = RunConfig::default();
    if let Some(config) = config {
        for (key, value) in config.iter() {
            let key: String = key.extract()?;
            cfg.set(&key, &config_value(&value)?).map_err(to_py)?;
        }
    }
    cfg.validate().map_err(to_py)?;
    let outcome = py.detach(|| io::fit(&data, &cfg)).map_err(to_py)?;
    let diag = &outcome.output.diagnostics;
    let cold = &diag.chains[0];
    let sigma_acceptance = (0..5)
        .map(|m| {
            let n = cold.sigma_proposed[m];
            if n == 0 {
                f64::NAN
            } else {
                cold.sigma_accepted[m] as f64 / n as f64
            }
        })
        .collect();
    Ok(PyFit {
        temperatures: diag.temps.clone(),
        swap_rates: diag.swap_rates(),
        overall_swap_rate: diag.overall_swap_rate(),
        lambda_acceptance: diag.chains.iter().map(|c| c.lambda_rates()).collect(),
        sigma_acceptance,
        pilot_ratio: outcome.ratio,
        trace: diag.trace.clone(),
        posterior: Py::new(
            py,
            PyPosterior {
                inner: outcome.output.draws,
            },
        )?,
    })
}

#[pymodule]
fn eplrank(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPrior>()?;
    m.add_class::<PyPosterior>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(epl_log_prob, m)?)?;
    m.add_function(wrap_pyfunction!(pl_log_prob, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(modal_ordering, m)?)?;
    m.add_function(wrap_pyfunction!(sample_epl, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(load_rankings, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_rank_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    Ok(())
}
