use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use sparse_imager::collector::certify_coherence_sampled;
use sparse_imager::experiment::{
    compare_runs, gamma_settings, prepare, run_scenario_file, GammaSpec, RunManifest, RunOptions,
    Scenario, BUNDLED,
};
use sparse_imager::resolution::{estimate_gamma_with, CanonicalDirections, GammaProtocol};
use sparse_imager::rng::{stage, stage_seed};
use sparse_imager::{certify_coherence, configure_threads, CMatrix, Gelma};

#[derive(Parser)]
#[command(name = "sparse-imager", version, about = "Sparse array imaging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts and manifest.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the metrics of two run manifests.
    Compare { manifest_a: PathBuf, manifest_b: PathBuf },
    /// Check collector coherence against an imaging matrix (binary cache files).
    /// Exits with status 2 when the certificate fails.
    Certify {
        collector: PathBuf,
        matrix: PathBuf,
        #[arg(long)]
        m: usize,
        /// Check this many random pairs instead of all of them.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo lower estimate of gamma for a scenario's operator.
    Gamma {
        scenario: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Iteration cap per trial.
        #[arg(long, default_value_t = 150)]
        max_iters: usize,
        /// Absolute sparsity weight for the unit-norm probes.
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        /// Also probe every canonical basis direction.
        #[arg(long)]
        canonical: bool,
    },
    /// List the bundled scenarios, or write them to a directory.
    Scenarios {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    configure_threads()?;
    match cli.command {
        Command::Run { scenario, out, seed } => {
            let report = run_scenario_file(&scenario, &RunOptions { out_dir: out, seed })
                .with_context(|| format!("running {}", scenario.display()))?;
            let d = &report.manifest.diagnostics;
            print_json(&json!({
                "manifest": report.manifest_path,
                "iterations": d.iterations,
                "converged": d.converged,
                "coherent_misfit": d.coherent_misfit,
                "incoherent_remainder": d.incoherent_remainder,
                "exact_recovery": d.exact_recovery,
                "recovered_fraction": d.recovered_fraction,
            }))?;
        }
        Command::Compare { manifest_a, manifest_b } => {
            let a = RunManifest::load(&manifest_a).with_context(|| format!("reading {}", manifest_a.display()))?;
            let b = RunManifest::load(&manifest_b).with_context(|| format!("reading {}", manifest_b.display()))?;
            print_json(&compare_runs(&a, &b)?)?;
        }
        Command::Certify {
            collector,
            matrix,
            m,
            sample,
            seed,
        } => {
            let c = CMatrix::read_binary(&collector)?;
            let a = CMatrix::read_binary(&matrix)?;
            let cert = match sample {
                Some(n) => certify_coherence_sampled(&a, &c, m, n, seed)?,
                None => certify_coherence(&a, &c, m)?,
            };
            print_json(&cert)?;
            if !cert.ok {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Gamma {
            scenario,
            trials,
            seed,
            max_iters,
            tau,
            canonical,
        } => {
            let (s, _) = Scenario::load(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let p = prepare(&s, seed)?;
            let op = p.operator()?;
            let gelma = Gelma::new(&op);
            let spec = GammaSpec { trials, max_iters, tau };
            let protocol = GammaProtocol {
                canonical: if canonical {
                    CanonicalDirections::All
                } else {
                    CanonicalDirections::None
                },
                ..GammaProtocol::gaussian(trials)
            };
            let est = estimate_gamma_with(
                &gelma,
                &protocol,
                stage_seed(p.master_seed, stage::GAMMA),
                &gamma_settings(gelma.op_norm(), &spec),
            )?;
            print_json(&json!({
                "scenario": s.name,
                "rows": op.rows(),
                "cols": op.cols(),
                "gamma": est.value,
                "trials": est.trials.len(),
                "converged_trials": est.trials.iter().filter(|t| t.converged).count(),
            }))?;
        }
        Command::Scenarios { write } => match write {
            None => BUNDLED.iter().for_each(|(name, _)| println!("{name}")),
            Some(dir) => {
                std::fs::create_dir_all(&dir)?;
                for (name, text) in BUNDLED {
                    let path = dir.join(format!("{name}.json"));
                    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                    println!("{}", path.display());
                }
            }
        },
    }
    Ok(ExitCode::SUCCESS)
}
