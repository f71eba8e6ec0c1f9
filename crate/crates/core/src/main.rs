use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedpoison::harness::{resolve_output_dir, run_experiment, sweep, write_bundle, write_sweep_csv, ExperimentConfig};
use fedpoison::mcd::{detect_period, McdConfig, ModelTraceStore};
use fedpoison::{nn, Error, Result};

/// Federated-learning poisoning simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config or a bundle's manifest.json.
    Run {
        config: PathBuf,
        /// Bundle directory (overrides `output_dir` and FEDPOISON_OUTPUT_ROOT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attack-only trade-off sweep over suppression factor, GAN epochs and seeds.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        kappa: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        epochs: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        seeds: Vec<u64>,
        /// Output CSV (default: sweep.csv in the config's output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the consistency detector on a recorded trace CSV; prints JSON reports.
    Detect { trace: PathBuf, mcd_config: PathBuf },
    /// Finite-difference gradient check on seeded random MLPs.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        models: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::config("input", format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = resolve_output_dir(&cfg, out.as_deref());
            let result = run_experiment(&cfg)?;
            write_bundle(&result, &dir)?;
            println!("{}", serde_json::to_string_pretty(&result.summary)?);
            eprintln!("bundle written to {}", dir.display());
        }
        Command::Sweep {
            config,
            kappa,
            epochs,
            seeds,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let path = out.unwrap_or_else(|| resolve_output_dir(&cfg, None).join("sweep.csv"));
            let rows = sweep(&cfg, &kappa, &epochs, &seeds)?;
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let file = std::fs::File::create(&path).map_err(|e| Error::io(path, e))?;
            write_sweep_csv(&rows, file)?;
            write_sweep_csv(&rows, std::io::stdout())?;
        }
        Command::Detect { trace, mcd_config } => {
            let cfg: McdConfig = toml::from_str(&read(&mcd_config)?).map_err(|e| Error::Config {
                key: "mcd".into(),
                message: e.message().to_string(),
            })?;
            cfg.validate()?;
            let file = std::fs::File::open(&trace)
                .map_err(|e| Error::config("input", format!("{}: {e}", trace.display())))?;
            let store = ModelTraceStore::read_csv(file, cfg.period)?;
            let reports = store
                .periods()
                .into_iter()
                .map(|p| detect_period(&store, p, &cfg, None))
                .collect::<Result<Vec<_>>>()?;
            println!("{}", serde_json::to_string_pretty(&reports)?);
        }
        Command::Gradcheck {
            models,
            seed,
            eps,
            tolerance,
        } => {
            let errors = nn::random_suite(models, seed, eps)?;
            let worst = errors.iter().copied().fold(0.0, f64::max);
            println!("models={models} eps={eps:e} max_relative_error={worst:e}");
            if !(worst < tolerance) {
                return Err(Error::GradCheck { worst, tolerance });
            }
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
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
