use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use tenfac::io::{read_series, write_matrix_csv, write_series};
use tenfac::{
    estimated_signal, generate, method_preset, population_signal, preset, run, run_experiment,
    summarize, write_records_csv, write_summary_csv, DMatrix, ExperimentConfig, Flavor,
    Normalization, Setting, DEFAULT_EPSILON,
};

/// Tensor factor model estimation for tensor time series.
#[derive(Parser)]
#[command(name = "tenfac", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a study setting and write it to a directory.
    Simulate {
        #[arg(long)]
        setting: Setting,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long = "T", default_value_t = 1024)]
        t_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise standard deviation; 0 gives a noiseless series.
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Estimate loadings, factors and residuals of a series file.
    Estimate {
        /// Method name, e.g. TOPUP, 1TIPUP, iTOPUP, TIPUP-iTOPUP.
        #[arg(long)]
        method: String,
        /// Factor ranks, one per mode.
        #[arg(long, value_delimiter = ',', required = true)]
        ranks: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        h0: usize,
        /// Series file (time as the last mode); `.csv` selects the text format.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Sweep cap; defaults to max(10, ceil(ln d)).
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, default_value_t = Normalization::Figure)]
        normalization: Normalization,
    },
    /// Run a Monte Carlo experiment described by a config file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Records CSV; `-` writes to stdout.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Overrides the config's replication count.
        #[arg(long)]
        nrep: Option<usize>,
    },
    /// Print population and estimated signal strengths across lag counts.
    Signal {
        #[arg(long)]
        setting: Setting,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        h0: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Series length of the estimated values.
        #[arg(long = "T", default_value_t = 1024)]
        t_len: usize,
        /// Replications of the estimated values; 0 prints population values only.
        #[arg(long, default_value_t = 0)]
        nrep: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = Normalization::Figure)]
        normalization: Normalization,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> tenfac::Result<()> {
    match command {
        Command::Simulate {
            setting,
            lambda,
            t_len,
            seed,
            noise_scale,
            out_dir,
        } => {
            let mut spec = preset(setting, lambda, seed);
            spec.noise_scale = noise_scale;
            let truth = generate(&spec, t_len)?;
            fs::create_dir_all(&out_dir)?;
            write_series(out_dir.join("observed.bin"), &truth.observed_series)?;
            write_series(out_dir.join("signal.bin"), &truth.signal_series)?;
            write_series(out_dir.join("noise.bin"), &truth.noise_series)?;
            write_series(out_dir.join("factors.bin"), &truth.factor_series)?;
            write_loadings(&out_dir, truth.loadings.iter().map(|b| b.matrix()))?;
            println!(
                "wrote setting {setting} (T = {t_len}, lambda = {lambda}, seed = {seed}) to {}",
                out_dir.display()
            );
        }
        Command::Estimate {
            method,
            ranks,
            h0,
            input,
            out_dir,
            epsilon,
            max_iter,
            normalization,
        } => {
            let series = read_series(&input)?;
            let cap = max_iter.unwrap_or_else(|| tenfac::default_max_iter(series.shape()));
            let mut cfg = method_preset(&method)?.config(ranks, h0, epsilon, cap);
            cfg.record_trajectory = false;
            cfg.normalization = normalization;
            let fit = run(&series, &cfg)?;

            fs::create_dir_all(&out_dir)?;
            write_loadings(&out_dir, fit.loadings.iter().map(|b| b.matrix()))?;
            write_series(out_dir.join("factors.bin"), &fit.factors)?;
            write_series(out_dir.join("residuals.bin"), &fit.residuals)?;
            let mut diag = BufWriter::new(fs::File::create(out_dir.join("diagnostics.csv"))?);
            writeln!(diag, "mode,lambda_hat_sq,lambda_star_hat_sq")?;
            for k in 0..fit.diagnostics.lambda_sq.len() {
                writeln!(
                    diag,
                    "{},{},{}",
                    k + 1,
                    fit.diagnostics.lambda_sq[k],
                    fit.diagnostics.lambda_star_sq[k]
                )?;
            }
            diag.flush()?;
            println!(
                "{method}: {} sweep(s), converged = {}",
                fit.iterations_used, fit.converged
            );
        }
        Command::Bench {
            config,
            out,
            summary,
            nrep,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(n) = nrep {
                cfg.nrep = n;
            }
            let records = run_experiment(&cfg)?;
            if out == Path::new("-") {
                write_records_csv(&mut io::stdout().lock(), &records)?;
            } else {
                let mut f = BufWriter::new(fs::File::create(&out)?);
                write_records_csv(&mut f, &records)?;
                f.flush()?;
            }
            if let Some(path) = summary {
                let mut f = BufWriter::new(fs::File::create(path)?);
                write_summary_csv(&mut f, &summarize(&records)?)?;
                f.flush()?;
            }
        }
        Command::Signal {
            setting,
            h0,
            lambda,
            t_len,
            nrep,
            seed,
            normalization,
        } => {
            let spec = preset(setting, lambda, seed);
            let mut out = io::stdout().lock();
            write!(out, "h0,mode,lambda_sq,lambda_star_sq")?;
            if nrep > 0 {
                write!(out, ",lambda_hat_sq,lambda_star_hat_sq")?;
            }
            writeln!(out)?;
            for &h in &h0 {
                let top = population_signal(&spec, h, Flavor::Topup, normalization)?;
                let tip = population_signal(&spec, h, Flavor::Tipup, normalization)?;
                let est = if nrep > 0 {
                    Some(estimated_signal(&spec, t_len, h, nrep, normalization)?)
                } else {
                    None
                };
                for k in 0..top.len() {
                    write!(out, "{h},{},{},{}", k + 1, top[k], tip[k])?;
                    if let Some((lam, lam_star)) = &est {
                        write!(out, ",{},{}", lam[k], lam_star[k])?;
                    }
                    writeln!(out)?;
                }
            }
        }
    }
    Ok(())
}

fn write_loadings<'a>(
    dir: &Path,
    mats: impl Iterator<Item = &'a DMatrix<f64>>,
) -> tenfac::Result<()> {
    for (k, m) in mats.enumerate() {
        write_matrix_csv(dir.join(format!("loadings_mode{}.csv", k + 1)), m)?;
    }
    Ok(())
}
