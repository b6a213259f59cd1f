use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eplrank_core::io::formats::{fmt_f64, write_matrix};
use eplrank_core::io::report::{entity_labels, predictive_marginals};
use eplrank_core::io::{
    fit, fit_replicates, load_rankings, max_pairwise_sigma_tv, read_draws, read_truth, score_against_truth,
    simulate_dataset, write_fit_outputs, write_predictive, write_rankings, write_truth, RunConfig,
};
use eplrank_core::predictive::{
    aggregate_mode, discrepancy_matrix, empirical_rank_matrix, enumerate_predictive, expected_top_p_counts,
    marginal_rank_matrix, sample_predictive, sigma_marginal_matrix,
};
use eplrank_core::sampler::PosteriorDraws;
use eplrank_core::{EplError, LambdaVector, Permutation, Result};

#[derive(Parser)]
#[command(
    name = "eplrank",
    version,
    about = "Bayesian analysis of complete rankings under the Extended Plackett-Luce model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (flat key = value)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set sampler.chains=3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| EplError::config(format!("--set expects KEY=VALUE, got '{o}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Enumerate,
    Sample,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate rankings from known parameters
    Simulate {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        /// File of K positive values (comma or newline separated)
        #[arg(long)]
        lambda: Option<PathBuf>,
        /// Choice order, e.g. "2,3,1"
        #[arg(long)]
        sigma: Option<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the posterior and write draws, diagnostics and summaries
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Independent runs with consecutive seeds, compared by σ total variation
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Posterior predictive distribution and marginal rank probabilities
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        draws: PathBuf,
        #[arg(long, value_enum, default_value = "enumerate")]
        mode: Mode,
        /// Predictive draws per posterior draw
        #[arg(long = "L")]
        per_draw: Option<usize>,
        /// Expected counts of finishing in the top p positions, e.g. 1,3,10
        #[arg(long, value_delimiter = ',')]
        top_p: Vec<usize>,
        /// Number of future rankings the top-p counts refer to
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Consensus ranking: the mode of the posterior predictive
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predictive, empirical and discrepancy matrices
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare draws with the parameters that generated the data
    Score {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new("."))).map_err(|e| EplError::io(path, e))?;
    std::fs::write(path, text).map_err(|e| EplError::io(path, e))
}

fn read_lambda(path: &Path) -> Result<LambdaVector> {
    let text = std::fs::read_to_string(path).map_err(|e| EplError::io(path, e))?;
    let values = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split(','))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| EplError::invalid(format!("{}: bad value '{s}'", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    LambdaVector::new(values)
}

fn labels_for(draws: &PosteriorDraws) -> Vec<String> {
    entity_labels(draws.k(), draws.meta().entity_names.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            k,
            n,
            lambda,
            sigma,
            seed,
            out,
        } => {
            let lambda = lambda.as_deref().map(read_lambda).transpose()?;
            let sigma = sigma.map(|s| s.parse::<Permutation>()).transpose()?;
            let (data, truth) = simulate_dataset(k, n, lambda, sigma, seed)?;
            write_rankings(&out.join("rankings.csv"), &data)?;
            write_truth(&out.join("truth.csv"), &truth)?;
            println!("wrote {} rankings of {k} entities to {}", n, out.display());
        }
        Command::Fit {
            common,
            data,
            out,
            replicates,
            threads,
        } => {
            let mut cfg = common.load()?;
            if let Some(t) = threads {
                cfg.threads = t;
            }
            let data_path = data
                .or_else(|| cfg.data_path.clone())
                .ok_or_else(|| EplError::config("no data file: pass --data or set paths.data"))?;
            let out = out
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| EplError::config("no output directory: pass --out or set paths.out"))?;
            let data = load_rankings(&data_path)?;
            cfg.resolve(data.k())?;
            if replicates == 0 {
                return Err(EplError::config("--replicates must be at least 1"));
            }
            if replicates == 1 {
                let outcome = fit(&data, &cfg)?;
                let agg = write_fit_outputs(&out, &data, &outcome, &cfg)?;
                let draws = &outcome.output.draws;
                if let Some((s, p)) = draws.modal_sigma() {
                    println!("modal sigma {} with probability {p:.4}", s.to_dashed());
                }
                println!(
                    "aggregate ranking {} with predictive probability {:.4e}",
                    agg.ranking.to_dashed(),
                    agg.probability
                );
                println!("wrote {} draws to {}", draws.len(), out.display());
            } else {
                let runs = fit_replicates(&data, &cfg, replicates)?;
                let mut report = String::new();
                for (r, outcome) in runs.iter().enumerate() {
                    let mut c = cfg.clone();
                    c.seed = cfg.seed.wrapping_add(r as u64);
                    write_fit_outputs(&out.join(format!("replicate_{}", r + 1)), &data, outcome, &c)?;
                    let modal = outcome.output.draws.modal_sigma();
                    let _ = writeln!(
                        report,
                        "replicate_{}.seed={}\nreplicate_{}.modal_sigma={}",
                        r + 1,
                        c.seed,
                        r + 1,
                        modal
                            .map(|(s, p)| format!("{} {p:.6}", s.to_dashed()))
                            .unwrap_or_default()
                    );
                }
                let tv = max_pairwise_sigma_tv(&runs.iter().map(|o| &o.output.draws).collect::<Vec<_>>());
                let _ = writeln!(report, "max_sigma_total_variation={tv:.6}");
                write_text(&out.join("replicates.txt"), &report)?;
                print!("{report}");
            }
        }
        Command::Predict {
            common,
            draws,
            mode,
            per_draw,
            top_p,
            n,
            out,
        } => {
            let cfg = common.load()?;
            let draws = read_draws(&draws)?;
            let labels = labels_for(&draws);
            let marg = match mode {
                Mode::Enumerate => {
                    let dist = enumerate_predictive(&draws, cfg.enumerate_max_k)?;
                    write_predictive(&out.join("predictive.csv"), dist.entries())?;
                    marginal_rank_matrix(&dist)
                }
                Mode::Sample => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    let sample = sample_predictive(&draws, per_draw.unwrap_or(cfg.draws_per_iteration), &mut rng)?;
                    write_predictive(&out.join("predictive_sample.csv"), &sample.frequencies())?;
                    marginal_rank_matrix(&sample)
                }
            };
            write_matrix(&out.join("predictive_marginal.csv"), "position", &labels, &marg)?;
            if !top_p.is_empty() {
                let mut text = String::from("entity");
                for p in &top_p {
                    let _ = write!(text, ",top_{p}");
                }
                text.push('\n');
                let cols = top_p
                    .iter()
                    .map(|&p| expected_top_p_counts(&marg, p, n))
                    .collect::<Result<Vec<_>>>()?;
                for (e, label) in labels.iter().enumerate() {
                    text.push_str(label);
                    for c in &cols {
                        let _ = write!(text, ",{}", fmt_f64(c[e]));
                    }
                    text.push('\n');
                }
                write_text(&out.join("expected_top_p.csv"), &text)?;
            }
            println!("wrote predictive outputs to {}", out.display());
        }
        Command::Aggregate {
            common,
            draws,
            restarts,
            out,
        } => {
            let cfg = common.load()?;
            let draws = read_draws(&draws)?;
            let labels = labels_for(&draws);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let agg = aggregate_mode(&draws, restarts.unwrap_or(cfg.restarts), &mut rng)?;
            let names: Vec<&str> = agg.ranking.iter().map(|e| labels[e - 1].as_str()).collect();
            let text = format!(
                "ranking={}\nranking_names={}\nprobability={:.6e}\nstd_error={:.6e}\n",
                agg.ranking.to_dashed(),
                names.join(" > "),
                agg.probability,
                agg.std_error
            );
            write_text(&out.join("aggregate.txt"), &text)?;
            print!("{text}");
        }
        Command::Diagnose {
            common,
            draws,
            data,
            out,
        } => {
            let cfg = common.load()?;
            let draws = read_draws(&draws)?;
            let data = load_rankings(&data)?;
            if data.k() != draws.k() {
                return Err(EplError::DimensionMismatch {
                    expected: draws.k(),
                    found: data.k(),
                });
            }
            let labels = entity_labels(data.k(), data.entity_names().or(draws.meta().entity_names.as_deref()));
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let pred = predictive_marginals(&draws, cfg.enumerate_max_k, cfg.draws_per_iteration, &mut rng)?;
            let emp = empirical_rank_matrix(&data)?;
            let disc = discrepancy_matrix(&pred, &emp)?;
            let ranks: Vec<String> = (1..=data.k()).map(|r| r.to_string()).collect();
            write_matrix(&out.join("predictive_marginal.csv"), "position", &labels, &pred)?;
            write_matrix(&out.join("empirical.csv"), "position", &labels, &emp)?;
            write_matrix(&out.join("discrepancy.csv"), "position", &labels, &disc)?;
            write_matrix(
                &out.join("sigma_marginal.csv"),
                "stage",
                &ranks,
                &sigma_marginal_matrix(&draws)?,
            )?;
            let worst = disc.rows().flatten().fold(0.0f64, |a, &b| a.max(b));
            println!("max discrepancy {worst:.4}; matrices written to {}", out.display());
        }
        Command::Score { draws, truth } => {
            let draws = read_draws(&draws)?;
            let truth = read_truth(&truth)?;
            let r = score_against_truth(&draws, &truth)?;
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "unavailable".into());
            println!("sigma_true={}", truth.sigma.to_dashed());
            println!("sigma_true_probability={:.6}", r.sigma_probability);
            println!("sigma_true_is_modal={}", r.sigma_is_modal);
            println!("log_lambda_mse={}", opt(r.log_lambda_mse));
            println!("centred_log_lambda_mse={}", opt(r.centred_log_lambda_mse));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
