use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dgd_core::experiment::{
    run_experiment, summarize, sweep_spectra, ExperimentConfig, GroupKey, Metric, SlopeAxis,
};
use dgd_core::topology::spectral_gap;
use dgd_core::tuning::theorem1_tune;

#[derive(Parser)]
#[command(
    name = "dgd",
    version,
    about = "Distributed gradient descent experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point and replicate of a config and write a CSV.
    Run {
        config: PathBuf,
        /// Directory for the output file; overrides the directory part of
        /// `run.output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Mean and spread of final iterates across replicates.
    Summarize {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Comma-separated keys among topology, weight_scheme, n, m.
        #[arg(long, value_delimiter = ',')]
        group_by: Vec<String>,
        /// Fit a log-log slope of group means against nm, m or n.
        #[arg(long)]
        slope_axis: Option<String>,
        #[arg(long, default_value = "risk_mean")]
        metric: String,
    },
    /// Print the tuned stopping time and step size as JSON.
    Tune {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        kappa_sq: f64,
    },
    /// Print the gossip spectrum for each network size in a config.
    Spectrum {
        config: PathBuf,
        /// Write the gossip matrix as CSV; `{n}` in the path is replaced by
        /// the network size.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            out,
            threads,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let path = match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    dir.join(
                        cfg.run
                            .output
                            .file_name()
                            .ok_or("run.output has no file name")?,
                    )
                }
                None => cfg.run.output.clone(),
            };
            let output = run_experiment(&cfg, threads)?;
            let diverged = output
                .runs
                .iter()
                .filter(|r| r.divergence.is_some())
                .count();
            output.write_csv(BufWriter::new(File::create(&path)?))?;
            eprintln!(
                "{} runs written to {} ({diverged} diverged)",
                output.runs.len(),
                path.display()
            );
        }
        Command::Summarize {
            csv,
            group_by,
            slope_axis,
            metric,
        } => {
            let keys = group_by
                .iter()
                .map(|k| k.parse::<GroupKey>())
                .collect::<Result<Vec<_>, _>>()?;
            let axis = slope_axis.map(|a| a.parse::<SlopeAxis>()).transpose()?;
            let summary = summarize(&csv, &keys, axis, metric.parse::<Metric>()?)?;
            print!("{summary}");
        }
        Command::Tune {
            n,
            m,
            r,
            gamma,
            sigma2,
            kappa_sq,
        } => {
            let plan = theorem1_tune(n, m, r, gamma, sigma2, kappa_sq)?;
            println!("{}", serde_json::to_string_pretty(&plan)?);
        }
        Command::Spectrum { config, matrix_out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for (n, p) in sweep_spectra(&cfg)? {
                writeln!(out, "n = {n}")?;
                let eig: Vec<String> = p.eigenvalues().iter().map(|v| v.to_string()).collect();
                writeln!(out, "eigenvalues = [{}]", eig.join(", "))?;
                writeln!(out, "sigma2 = {}", p.sigma2())?;
                writeln!(out, "gap = {}", spectral_gap(&p))?;
                writeln!(out, "inverse_gap = {}", 1.0 / spectral_gap(&p))?;
                if let Some(template) = &matrix_out {
                    let path =
                        PathBuf::from(template.to_string_lossy().replace("{n}", &n.to_string()));
                    p.write_csv(BufWriter::new(File::create(path)?))?;
                }
            }
        }
    }
    Ok(())
}
