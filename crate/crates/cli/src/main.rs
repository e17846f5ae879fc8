//! `penflow`: run, solve, sweep and validate experiment configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use penflow::experiment::{generate_example, Example, ExperimentConfig, Overrides};
use penflow::harness::{exit, exit_code, run_experiment, run_oracle, Outcome};
use penflow::{Error, Result};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "penflow", version, about = "Exact-penalty distributed optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the agent dynamics and write trajectory, summary and oracle artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        tuning: Tuning,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the centralized problem of a config and write oracle.json.
    Oracle {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment per seed, in parallel, into `<out>/seed-<k>`.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        tuning: Tuning,
        /// Seeds as a list and/or ranges, e.g. `1-5` or `1,4,9`.
        #[arg(long, default_value = "1-5")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse and resolve a config without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Source {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "example")]
    config: Option<PathBuf>,
    /// Built-in instance family.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    example: Option<u8>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct Tuning {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Safety factor `γ > 1` in `K = γ·n·c`.
    #[arg(long)]
    gamma: Option<f64>,
}

impl Source {
    fn resolve(&self, seed: Option<u64>, tuning: Option<&Tuning>, out: Option<&Path>) -> Result<ExperimentConfig> {
        let seed = seed.or(self.seed);
        let mut overrides = Overrides {
            output: out.map(Path::to_path_buf),
            ..Overrides::default()
        };
        if let Some(t) = tuning {
            overrides.alpha = t.alpha;
            overrides.max_steps = t.max_steps;
            overrides.gamma = t.gamma;
        }
        let mut cfg = match (&self.config, self.example) {
            (Some(path), _) => {
                overrides.seed = seed;
                ExperimentConfig::load(path)?
            }
            (None, Some(k)) => generate_example(Example::from_number(k)?, seed.unwrap_or(1))?,
            (None, None) => return Err(Error::Config("give either --config or --example".into())),
        };
        cfg.apply(&overrides)?;
        Ok(cfg)
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seed list `{text}`"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn report(outcome: &Outcome) {
    let s = &outcome.summary;
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"));
    println!(
        "seed {} converged={} steps={} K={:.4e} consensus={:.3e} residual={:.3e} slope={} r2={} dir={}",
        s.seed,
        s.converged,
        s.steps_taken,
        s.k,
        s.final_consensus,
        s.final_residual,
        fmt(s.slope),
        fmt(s.r_squared),
        outcome.output.as_deref().map_or_else(String::new, |p| p.display().to_string()),
    );
}

fn fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { source, tuning, out } => {
            let outcome = source
                .resolve(None, Some(&tuning), out.as_deref())
                .and_then(|cfg| run_experiment(&cfg, None));
            match outcome {
                Ok(o) => {
                    report(&o);
                    if o.exit_code() != exit::OK {
                        eprintln!("run stopped after {} steps without meeting the stopping rule", o.summary.steps_taken);
                    }
                    o.exit_code()
                }
                Err(e) => fail(&e),
            }
        }
        Command::Oracle { source, out } => match source.resolve(None, None, None).and_then(|cfg| run_oracle(&cfg, &out)) {
            Ok(sol) => {
                println!("f* = {:.12e}, achieved tolerance {:.3e}", sol.f_star, sol.achieved_tolerance);
                exit::OK
            }
            Err(e) => fail(&e),
        },
        Command::Sweep { source, tuning, seeds, out, jobs } => {
            let seeds = match parse_seeds(&seeds) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let configs: Result<Vec<ExperimentConfig>> = seeds
                .iter()
                .map(|&seed| source.resolve(Some(seed), Some(&tuning), Some(&out.join(format!("seed-{seed}")))))
                .collect();
            let configs = match configs {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build() {
                Ok(p) => p,
                Err(e) => return fail(&Error::Config(format!("cannot start worker pool: {e}"))),
            };
            let results: Vec<Result<Outcome>> =
                pool.install(|| configs.par_iter().map(|cfg| run_experiment(cfg, None)).collect());
            let mut code = exit::OK;
            for (seed, result) in seeds.iter().zip(&results) {
                let c = match result {
                    Ok(o) => {
                        report(o);
                        o.exit_code()
                    }
                    Err(e) => {
                        eprintln!("seed {seed}: error: {e}");
                        exit_code(e)
                    }
                };
                code = code.max(c);
            }
            code
        }
        Command::ValidateConfig { config } => {
            match ExperimentConfig::load(&config).and_then(|cfg| cfg.validate().map(|_| cfg)) {
                Ok(cfg) => {
                    let inst = cfg.build().expect("validated config builds");
                    println!(
                        "ok: n={} m={} K={:.6e} certified={}",
                        inst.problem.n(),
                        inst.problem.dim(),
                        inst.problem.penalty(),
                        inst.problem.is_certified()
                    );
                    exit::OK
                }
                Err(e) => fail(&e),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = dispatch(Cli::parse());
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
