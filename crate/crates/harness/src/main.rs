use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use clusternorm::Loss;
use clusternorm_harness::commands;
use clusternorm_harness::{ExperimentSpec, Method};

#[derive(Parser)]
#[command(name = "clusternorm", version, about = "Clustered multi-task learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct HyperArgs {
    /// Spec file providing defaults for the options below
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eps_m: Option<f64>,
    #[arg(long)]
    eps_b: Option<f64>,
    #[arg(long)]
    eps_w: Option<f64>,
    #[arg(long)]
    clusters: Option<usize>,
    /// square or logistic
    #[arg(long)]
    loss: Option<Loss>,
}

impl HyperArgs {
    fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.spec {
            Some(path) => ExperimentSpec::parse(
                &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
            )
            .with_context(|| format!("parsing {}", path.display()))?,
            None => ExperimentSpec::default(),
        };
        let h = &mut spec.hyper;
        if let Some(v) = self.lambda {
            h.lambda = v;
            h.lambda_overrides.clear();
        }
        if let Some(v) = self.eps_m {
            h.eps_m = v;
        }
        if let Some(v) = self.eps_b {
            h.eps_b = v;
        }
        if let Some(v) = self.eps_w {
            h.eps_w = v;
        }
        if let Some(v) = self.clusters {
            h.clusters = v;
        }
        if let Some(v) = self.loss {
            h.loss = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Squared cluster norm of a matrix CSV
    Norm {
        matrix: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Fit one method on a dataset CSV and save W with a metadata sidecar
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Task labels for true_metric, e.g. "0 0 1 1"
        #[arg(long)]
        partition: Option<String>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Run the synthetic benchmark grid
    BenchSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// Run only this seed
        #[arg(long)]
        seed: Option<u64>,
        /// Run only this method
        #[arg(long)]
        method: Option<Method>,
        /// Run cells one after another
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Write the task metric of a saved model, or of a partition
    ExportSigma {
        #[arg(long, conflicts_with = "partition")]
        model: Option<PathBuf>,
        #[arg(long)]
        partition: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Write one synthetic dataset
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Norm {
            matrix,
            alpha,
            beta,
            gamma,
            hyper,
        } => {
            let (alpha, beta, gamma) = match (alpha, beta, gamma) {
                (Some(a), Some(b), Some(g)) => (a, b, g),
                (None, None, None) => {
                    let m = clusternorm::io::read_matrix::<f64>(&matrix)?.ncols();
                    commands::box_from_hyper(&hyper.resolve()?.hyper, m)?
                }
                _ => bail!("give all of --alpha, --beta, --gamma or none of them"),
            };
            print!("{}", commands::norm(&matrix, alpha, beta, gamma)?);
        }
        Command::Fit {
            data,
            method,
            out,
            seed,
            partition,
            hyper,
        } => {
            let spec = hyper.resolve()?;
            let partition = partition.as_deref().map(commands::parse_partition).transpose()?;
            let meta = commands::fit_dataset(&data, method, &spec.hyper, partition.as_ref(), seed, &out)?;
            eprintln!(
                "{method}: objective {} after {} iterations{}",
                meta.objective,
                meta.iterations,
                if meta.converged { "" } else { " (not converged)" }
            );
        }
        Command::BenchSynthetic {
            out,
            seed,
            method,
            sequential,
            hyper,
        } => {
            let mut spec = hyper.resolve()?;
            if let Some(s) = seed {
                spec.seeds = vec![s];
            }
            if let Some(m) = method {
                spec.methods = vec![m];
            }
            let summary = commands::bench_synthetic(&spec, &out, !sequential)?;
            println!("method,n_train,metric,count,mean,std");
            for s in summary {
                println!("{},{},{},{},{:.4},{:.4}", s.method, s.n_train, s.metric, s.count, s.mean, s.std);
            }
        }
        Command::ExportSigma {
            model,
            partition,
            out,
            hyper,
        } => match (model, partition) {
            (Some(model), None) => {
                commands::export_sigma(&model, &out)?;
            }
            (None, Some(p)) => {
                let spec = hyper.resolve()?;
                commands::export_partition_sigma(&commands::parse_partition(&p)?, &spec.hyper, &out)?;
            }
            _ => bail!("give either --model or --partition"),
        },
        Command::Generate { seed, out, hyper } => {
            let spec = hyper.resolve()?;
            let p = commands::generate_dataset(&spec, seed, &out)?;
            eprintln!("wrote {} (partition {p})", display(&out));
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
