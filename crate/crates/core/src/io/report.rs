//! Fit orchestration and the text reports written next to the draws.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::io::config::{ResolvedRun, RunConfig, PILOT_RATIOS};
use crate::io::formats::{fmt_f64, write, write_draws, write_matrix};
use crate::model::Dataset;
use crate::permutation::Permutation;
use crate::predictive::{
    aggregate_mode, enumerate_predictive, marginal_rank_matrix, sample_predictive, sigma_marginal_matrix,
    AggregateRanking, RankMatrix,
};
use crate::sampler::{
    pilot_swap_rates, run_mc3, select_ratio, Diagnostics, Mc3Output, PilotResult, PosteriorDraws, SigmaMove,
    TemperatureLadder,
};
use crate::stats::total_variation;

pub struct FitOutcome {
    pub output: Mc3Output,
    pub pilot: Vec<PilotResult>,
    /// Geometric ratio chosen by the pilot, when one ran.
    pub ratio: Option<f64>,
}

/// Resolves the configuration for `data`, runs any pilot, then the full sampler.
pub fn fit(data: &Dataset, cfg: &RunConfig) -> Result<FitOutcome> {
    let ResolvedRun {
        spec,
        mut mc3,
        needs_pilot,
    } = cfg.resolve(data.k())?;
    let mut pilot = Vec::new();
    let mut ratio = None;
    if needs_pilot {
        pilot = pilot_swap_rates(data, &spec, &mc3, cfg.chains, &PILOT_RATIOS, cfg.pilot_iterations)?;
        let r = select_ratio(&pilot).unwrap_or(PILOT_RATIOS[0]);
        mc3.ladder = TemperatureLadder::geometric(cfg.chains, r)?;
        ratio = Some(r);
    }
    let output = run_mc3(data, &spec, &mc3)?;
    Ok(FitOutcome { output, pilot, ratio })
}

/// Runs `replicates` independent fits with seeds `seed, seed + 1, ...`.
pub fn fit_replicates(data: &Dataset, cfg: &RunConfig, replicates: usize) -> Result<Vec<FitOutcome>> {
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(r);
            c.progress_interval = None;
            fit(data, &c)
        })
        .collect()
}

/// Total variation between the σ-frequency tables of two runs.
pub fn sigma_total_variation(a: &PosteriorDraws, b: &PosteriorDraws) -> f64 {
    let table = |d: &PosteriorDraws| -> HashMap<Permutation, f64> {
        let n = d.len() as f64;
        d.sigma_counts().into_iter().map(|(s, c)| (s, c as f64 / n)).collect()
    };
    let (ta, tb) = (table(a), table(b));
    let keys: Vec<&Permutation> = ta.keys().chain(tb.keys().filter(|s| !ta.contains_key(*s))).collect();
    let pa: Vec<f64> = keys.iter().map(|s| ta.get(*s).copied().unwrap_or(0.0)).collect();
    let pb: Vec<f64> = keys.iter().map(|s| tb.get(*s).copied().unwrap_or(0.0)).collect();
    total_variation(&pa, &pb)
}

pub fn max_pairwise_sigma_tv(runs: &[&PosteriorDraws]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            worst = worst.max(sigma_total_variation(runs[i], runs[j]));
        }
    }
    worst
}

fn join(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(fmt_rate).collect::<Vec<_>>().join(",")
}

fn fmt_rate(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.6}")
    }
}

pub fn diagnostics_to_string(d: &Diagnostics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "chains={}", d.temps.len());
    for (c, (t, s)) in d.temps.iter().zip(&d.chains).enumerate() {
        let c = c + 1;
        let _ = writeln!(out, "chain_{c}.temperature={t}");
        let _ = writeln!(out, "chain_{c}.lambda_acceptance={}", join(s.lambda_rates()));
        for m in SigmaMove::ALL {
            let i = m.number() - 1;
            let _ = writeln!(
                out,
                "chain_{c}.sigma_acceptance.{}={} ({}/{})",
                m.name(),
                fmt_rate(s.sigma_rate(m)),
                s.sigma_accepted[i],
                s.sigma_proposed[i]
            );
        }
        let _ = writeln!(
            out,
            "chain_{c}.sigma_acceptance.overall={}",
            fmt_rate(s.sigma_overall_rate())
        );
    }
    for (p, (n, a)) in d.swap_attempts.iter().zip(&d.swap_accepts).enumerate() {
        let rate = if *n == 0 { f64::NAN } else { *a as f64 / *n as f64 };
        let _ = writeln!(out, "swap_{}_{}.rate={} ({a}/{n})", p + 1, p + 2, fmt_rate(rate));
    }
    if !d.swap_attempts.is_empty() {
        let _ = writeln!(out, "swap_overall_rate={}", fmt_rate(d.overall_swap_rate()));
    }
    out
}

pub fn trace_to_string(d: &Diagnostics) -> String {
    let mut out = String::from("iteration,loglik\n");
    for (t, l) in &d.trace {
        let _ = writeln!(out, "{t},{}", fmt_f64(*l));
    }
    out
}

/// Labels for matrix columns: entity names, or `1..K`.
pub fn entity_labels(k: usize, names: Option<&[String]>) -> Vec<String> {
    match names {
        Some(n) => n.to_vec(),
        None => (1..=k).map(|e| e.to_string()).collect(),
    }
}

/// Exact predictive marginals when `K` is small enough, otherwise simulated ones.
pub fn predictive_marginals(
    draws: &PosteriorDraws,
    enumerate_max_k: usize,
    per_draw: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RankMatrix> {
    if draws.k() <= enumerate_max_k {
        Ok(marginal_rank_matrix(&enumerate_predictive(draws, enumerate_max_k)?))
    } else {
        Ok(marginal_rank_matrix(&sample_predictive(draws, per_draw, rng)?))
    }
}

pub struct FitSummary<'a> {
    pub data: &'a Dataset,
    pub outcome: &'a FitOutcome,
    pub aggregate: &'a AggregateRanking,
}

pub fn summary_to_string(s: &FitSummary) -> String {
    let draws = &s.outcome.output.draws;
    let diag = &s.outcome.output.diagnostics;
    let labels = entity_labels(s.data.k(), s.data.entity_names());
    let mut out = String::new();
    let _ = writeln!(out, "n={}", s.data.len());
    let _ = writeln!(out, "k={}", s.data.k());
    let _ = writeln!(out, "draws={}", draws.len());
    let _ = writeln!(out, "seed={}", draws.meta().seed);
    let _ = writeln!(out, "config_hash={}", draws.meta().config_hash);
    let _ = writeln!(
        out,
        "temperatures={}",
        diag.temps.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
    );
    if let Some(r) = s.outcome.ratio {
        let _ = writeln!(out, "pilot_selected_ratio={r}");
        for p in &s.outcome.pilot {
            let _ = writeln!(out, "pilot_ratio_{}.swap_rate={}", p.ratio, fmt_rate(p.overall_rate));
        }
    }
    if let Some((sigma, p)) = draws.modal_sigma() {
        let _ = writeln!(out, "modal_sigma={}", sigma.to_dashed());
        let _ = writeln!(out, "modal_sigma_probability={p:.6}");
    }
    for (i, (sigma, c)) in draws.sigma_counts().into_iter().take(10).enumerate() {
        let _ = writeln!(
            out,
            "top_sigma_{}={} {:.6}",
            i + 1,
            sigma.to_dashed(),
            c as f64 / draws.len() as f64
        );
    }
    let named: Vec<&str> = s.aggregate.ranking.iter().map(|e| labels[e - 1].as_str()).collect();
    let _ = writeln!(out, "aggregate_ranking={}", s.aggregate.ranking.to_dashed());
    let _ = writeln!(out, "aggregate_ranking_names={}", named.join(" > "));
    let _ = writeln!(out, "aggregate_probability={:.6e}", s.aggregate.probability);
    let _ = writeln!(out, "aggregate_std_error={:.6e}", s.aggregate.std_error);
    let cold = &diag.chains[0];
    let _ = writeln!(out, "cold_lambda_acceptance={}", join(cold.lambda_rates()));
    let _ = writeln!(out, "cold_sigma_acceptance={}", fmt_rate(cold.sigma_overall_rate()));
    if !diag.swap_attempts.is_empty() {
        let _ = writeln!(out, "swap_rates={}", join(diag.swap_rates()));
        let _ = writeln!(out, "swap_overall_rate={}", fmt_rate(diag.overall_swap_rate()));
    }
    out
}

/// Writes draws, diagnostics, trace, σ and predictive marginal matrices, and the summary.
pub fn write_fit_outputs(
    dir: &Path,
    data: &Dataset,
    outcome: &FitOutcome,
    cfg: &RunConfig,
) -> Result<AggregateRanking> {
    let draws = &outcome.output.draws;
    let diag = &outcome.output.diagnostics;
    write_draws(&dir.join("draws.csv"), draws)?;
    write(&dir.join("diagnostics.txt"), &diagnostics_to_string(diag))?;
    write(&dir.join("trace.csv"), &trace_to_string(diag))?;

    let k = data.k();
    let ranks: Vec<String> = (1..=k).map(|r| r.to_string()).collect();
    write_matrix(
        &dir.join("sigma_marginal.csv"),
        "stage",
        &ranks,
        &sigma_marginal_matrix(draws)?,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = entity_labels(k, data.entity_names());
    let marg = predictive_marginals(draws, cfg.enumerate_max_k, cfg.draws_per_iteration, &mut rng)?;
    write_matrix(&dir.join("predictive_marginal.csv"), "position", &labels, &marg)?;
    let aggregate = aggregate_mode(draws, cfg.restarts, &mut rng)?;
    let summary = FitSummary {
        data,
        outcome,
        aggregate: &aggregate,
    };
    write(&dir.join("summary.txt"), &summary_to_string(&summary))?;
    Ok(aggregate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LambdaVector;

    #[test]
    fn tv_between_runs() {
        let l = LambdaVector::uniform(2);
        let id = Permutation::identity(2);
        let rev = Permutation::reversed_identity(2);
        let a = PosteriorDraws::from_pairs(2, vec![(l.clone(), id.clone()); 4]).unwrap();
        let b = PosteriorDraws::from_pairs(
            2,
            vec![
                (l.clone(), id.clone()),
                (l.clone(), rev.clone()),
                (l.clone(), rev.clone()),
                (l.clone(), id),
            ],
        )
        .unwrap();
        let c = PosteriorDraws::from_pairs(2, vec![(l, rev); 2]).unwrap();
        assert_eq!(sigma_total_variation(&a, &a), 0.0);
        assert!((sigma_total_variation(&a, &b) - 0.5).abs() < 1e-15);
        assert_eq!(sigma_total_variation(&a, &c), 1.0);
        assert_eq!(max_pairwise_sigma_tv(&[&a, &b, &c]), 1.0);
    }

    #[test]
    fn degenerate_run_summary_is_consistent() {
        let data = Dataset::new(3, vec![Permutation::identity(3); 20]).unwrap();
        let mut cfg = RunConfig::default();
        for (k, v) in [
            ("prior.sigma_support", "2-3-1:1"),
            ("sampler.chains", "1"),
            ("sampler.iterations", "300"),
            ("sampler.burn_in", "100"),
            ("sampler.thin", "2"),
        ] {
            cfg.set(k, v).unwrap();
        }
        let outcome = fit(&data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_fit_outputs(dir.path(), &data, &outcome, &cfg).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.contains("modal_sigma=2-3-1\n"));
        assert!(summary.contains("modal_sigma_probability=1.000000"));
        let m = crate::io::formats::read_matrix(&dir.path().join("sigma_marginal.csv")).unwrap();
        for (j, r) in [2usize, 3, 1].iter().enumerate() {
            assert_eq!(m.matrix.get(j, r - 1), 1.0);
        }
        assert!(std::fs::read_to_string(dir.path().join("diagnostics.txt"))
            .unwrap()
            .contains("chain_1.temperature=1"));
    }
}
