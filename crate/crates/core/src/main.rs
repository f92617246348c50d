use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qrflab::config::{parse_bytes, ConfigFile};
use qrflab::data::{fetch_fashion_mnist, FASHION_MNIST_URL};
use qrflab::harness::{
    run_accuracy_sweep, run_shot_study, run_spectral_study, selftest, write_selftest_csv, write_shot_csv,
    write_spectral_csv, write_sweep_csv,
};
use qrflab::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "qrflab", version, about = "Quantum random feature experiments on a classical simulator")]
struct Cli {
    /// Worker threads for feature extraction and Monte-Carlo trials
    /// (default: all cores). Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the seed of every study in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Feature matrices above this size spill to a temporary file
    /// (e.g. 512M, 8G).
    #[arg(long, global = true, value_parser = parse_budget)]
    memory_budget: Option<u64>,

    /// CSV destination; stdout when omitted.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Accuracy sweep over every [experiment] block.
    Sweep {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Exact versus finite-shot readout accuracy from the [shots] block.
    Shots {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Row-correlation ratio study from the [spectral] block.
    Spectral {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Download Fashion-MNIST and verify MD5 digests.
    FetchData {
        #[arg(long, default_value = "data/fashion-mnist")]
        dir: PathBuf,
        #[arg(long, default_value = FASHION_MNIST_URL)]
        url: String,
        /// Keep files whose digest does not match.
        #[arg(long)]
        no_verify: bool,
    },
    /// Quick numerical checks and a synthetic end-to-end run.
    Selftest,
}

fn parse_budget(s: &str) -> std::result::Result<u64, String> {
    parse_bytes(s).map_err(|e| e.to_string())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load_config(path: &Path, cli: &Cli) -> Result<ConfigFile> {
    let mut cfg = ConfigFile::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(b) = cli.memory_budget {
        cfg.run.memory_budget = b;
    }
    Ok(cfg)
}

fn missing(section: &str) -> Error {
    Error::Config {
        line: 0,
        message: format!("config has no [{section}] section"),
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
    }
    let out = cli.output.as_deref();
    match &cli.command {
        Command::Sweep { config } => {
            let cfg = load_config(config, cli)?;
            if cfg.experiments.is_empty() {
                return Err(missing("experiment"));
            }
            let rows = run_accuracy_sweep(&cfg.experiments, &cfg.run);
            write_sweep_csv(open_output(out)?, &rows)?;
        }
        Command::Shots { config } => {
            let cfg = load_config(config, cli)?;
            let shots = cfg.shots.as_ref().ok_or_else(|| missing("shots"))?;
            let rows = run_shot_study(shots, cfg.run.memory_budget)?;
            write_shot_csv(open_output(out)?, &rows)?;
        }
        Command::Spectral { config } => {
            let cfg = load_config(config, cli)?;
            let spectral = cfg.spectral.as_ref().ok_or_else(|| missing("spectral"))?;
            let rows = run_spectral_study(spectral);
            write_spectral_csv(open_output(out)?, &rows)?;
        }
        Command::FetchData { dir, url, no_verify } => {
            for p in fetch_fashion_mnist(url, dir, !no_verify)? {
                eprintln!("{}", p.display());
            }
        }
        Command::Selftest => {
            let rows = selftest(cli.seed.unwrap_or(0))?;
            write_selftest_csv(open_output(out)?, &rows)?;
            if let Some(bad) = rows.iter().find(|r| !r.passed()) {
                return Err(Error::Numerical(format!(
                    "selftest check {} failed: {} vs threshold {}",
                    bad.check, bad.value, bad.threshold
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.class());
            ExitCode::from(e.code() as u8)
        }
    }
}
