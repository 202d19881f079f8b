use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::experiment::{build_problem, Experiment, Multipliers};
use super::reproduce::{self, ReproduceOptions};
use super::sweep::sweep;
use super::HarnessError;
use crate::compressors::{verify_unbiased, Compressor, CompressorKind};
use crate::diagnostics::{write_csv, RunRecord};
use crate::stepsizes::grids;

#[derive(Debug, Parser)]
#[command(name = "rr-compress", version, about = "Compressed distributed optimization with random reshuffling")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (run, sweep) or directory (reproduce).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs one configured experiment and writes per-epoch records as CSV.
    Run { config: PathBuf },
    /// Tunes the stepsize multiplier of a configured experiment.
    Sweep {
        config: PathBuf,
        /// Comma-separated multipliers; defaults to the reduced grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Prints curvature constants of a configured problem or a benchmark file.
    Constants {
        config: Option<PathBuf>,
        /// LibSVM file of a benchmark dataset (uses its standard λ and 20 clients).
        #[arg(long, conflicts_with = "config")]
        data: Option<PathBuf>,
        #[arg(long, default_value = "mushrooms")]
        dataset: String,
    },
    /// Checks unbiasedness and the variance bound of a compressor.
    CertifyCompressor {
        #[arg(long, value_enum, default_value = "rand-k")]
        kind: KindArg,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        levels: u32,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Exact enumeration where supported.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Reruns a method comparison on a benchmark dataset.
    Reproduce {
        #[arg(value_enum)]
        experiment: ExpArg,
        /// LibSVM file of the dataset.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "mushrooms")]
        dataset: String,
        /// 5000 epochs and the full multiplier grids.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seeds: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Identity,
    RandK,
    Dithering,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExpArg {
    Exp1,
    Exp2,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write_records(path: Option<&Path>, records: &[RunRecord]) -> Result<(), HarnessError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| io_err(p, e))?;
            write_csv(records, BufWriter::new(f)).map_err(|e| io_err(p, e))
        }
        None => write_csv(records, std::io::stdout().lock()).map_err(|e| HarnessError::Io(e.to_string())),
    }
}

/// `out.csv` becomes `out-seed7.csv`.
fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-seed{seed}.{ext}"),
        None => format!("{stem}-seed{seed}"),
    };
    path.with_file_name(name)
}

fn load(config: &Path, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, cli.seed)?;
            let exp = Experiment::from_config(&cfg)?;
            let spec = exp.spec(Multipliers::uniform(1.0));
            let out = cli.out.or(cfg.output.clone());
            let runs = exp.run_seeds(&spec, cfg.epochs, cfg.seed, cfg.seeds)?;
            for (s, recs) in (cfg.seed..).zip(&runs) {
                let path = match (&out, cfg.seeds) {
                    (Some(p), 1) => Some(p.clone()),
                    (Some(p), _) => Some(seeded_path(p, s)),
                    (None, _) => None,
                };
                write_records(path.as_deref(), recs)?;
            }
            Ok(())
        }
        Command::Sweep { config, grid } => {
            let cfg = load(&config, cli.seed)?;
            let exp = Experiment::from_config(&cfg)?;
            let grid: Vec<Multipliers> = grid
                .unwrap_or_else(|| grids::REDUCED.to_vec())
                .into_iter()
                .map(Multipliers::uniform)
                .collect();
            let report = sweep(&exp, &grid, cfg.epochs, cfg.seed)?;
            println!("multiplier,final_f_gap,diverged_at");
            for e in &report.entries {
                let f = e.final_f_gap.map(|v| format!("{v:.16e}")).unwrap_or_default();
                let d = e.diverged_at.map(|r| r.to_string()).unwrap_or_default();
                println!("{},{f},{d}", e.multipliers.gamma);
            }
            println!("best multiplier: {}", report.best.gamma);
            if let Some(p) = cli.out.or(cfg.output) {
                write_records(Some(&p), &report.records)?;
            }
            Ok(())
        }
        Command::Constants { config, data, dataset } => {
            let problem = match (config, data) {
                (Some(c), _) => build_problem(&load(&c, cli.seed)?)?,
                (None, Some(d)) => reproduce::load_benchmark(&d, reproduce::dataset_settings(&dataset)?)?,
                (None, None) => return Err(HarnessError::Config("constants needs a config file or --data".into())),
            };
            let c = problem.constants();
            println!("clients  {}", problem.num_clients());
            println!("samples  {}", problem.total_samples());
            println!("dim      {}", problem.dim());
            println!("lambda   {:.6e}", problem.lambda());
            println!("L        {:.6e}", c.l);
            println!("L_max    {:.6e}", c.l_max);
            println!("L_tilde  {:.6e}", c.l_tilde);
            println!("mu       {:.6e}", c.mu);
            println!("mu_tilde {:.6e}", c.mu_tilde);
            println!("kappa    {:.6e}", c.condition_number());
            Ok(())
        }
        Command::CertifyCompressor { kind, dim, k, levels, trials, exhaustive } => {
            let kind = match kind {
                KindArg::Identity => CompressorKind::Identity,
                KindArg::RandK => CompressorKind::RandK { k },
                KindArg::Dithering => CompressorKind::Dithering { levels },
            };
            let c = Compressor::new(kind, dim)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
            let r = verify_unbiased(&c, trials, exhaustive, &mut rng);
            println!("omega            {:.6e}", c.omega());
            println!("bits per message {}", c.bits_sent());
            println!("exhaustive       {}", r.exhaustive);
            println!("max bias         {:.3e} ({})", r.max_bias, if r.bias_ok { "ok" } else { "FAIL" });
            println!("E|Q(x)-x|^2      {:.6e} ({})", r.empirical_omega, if r.omega_ok { "ok" } else { "FAIL" });
            if r.bias_ok && r.omega_ok {
                Ok(())
            } else {
                Err(HarnessError::Config("compressor failed certification".into()))
            }
        }
        Command::Reproduce { experiment, data, dataset, full, epochs, seeds } => {
            let mut opts = if full {
                ReproduceOptions::full(data, &dataset)
            } else {
                ReproduceOptions::reduced(data, &dataset)
            };
            opts.epochs = epochs.unwrap_or(opts.epochs);
            opts.seeds = seeds.unwrap_or(opts.seeds);
            opts.seed = cli.seed.unwrap_or(0);
            let results = match experiment {
                ExpArg::Exp1 => reproduce::exp1(&opts)?,
                ExpArg::Exp2 => reproduce::exp2(&opts)?,
            };
            let dir = cli.out.unwrap_or_else(|| PathBuf::from("reproduce-out"));
            std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            let summary = dir.join("summary.csv");
            let mut w = BufWriter::new(File::create(&summary).map_err(|e| io_err(&summary, e))?);
            let mut lines = vec!["method,gamma_multiplier,eta_multiplier,final_f_gap".to_string()];
            for r in &results {
                let eta = r.best.eta.map(|e| e.to_string()).unwrap_or_default();
                lines.push(format!("{},{},{eta},{:.16e}", r.label, r.best.gamma, r.final_f_gap));
                write_records(Some(&dir.join(format!("{}.csv", r.label))), &r.records)?;
            }
            for l in &lines {
                println!("{l}");
                writeln!(w, "{l}").map_err(|e| io_err(&summary, e))?;
            }
            w.flush().map_err(|e| io_err(&summary, e))
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
