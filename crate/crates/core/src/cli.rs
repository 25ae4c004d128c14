//! Command-line front end. Every subcommand reads an optional TOML config
//! and applies flag overrides on top of it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;

use crate::data::io::{append_metrics, load_triplets, read_metrics, write_roc_csv, write_triplets};
use crate::error::{Error, Result};
use crate::experiment::{
    attack_row, prepare, pretrain, run_augmentation, run_dp_sweep, tradeoff_rows, write_gate_log, write_tradeoff,
    Datasets, Method, RunConfig,
};
use crate::metrics::AttackReport;
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::synth::{binned_missingness, generate};

#[derive(Parser, Debug)]
#[command(name = "tsf-mia", version, about = "Membership-inference audit and private augmentation for sparse time-series forecasters")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Triplet CSV.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Baseline checkpoint to start from.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic triplet dataset.
    GenData {
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train the embedding and baseline forecaster.
    Pretrain {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Attack the baseline checkpoint (train vs test).
    Attack,
    /// Augmentation rounds with the update gate.
    Augment {
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        pca_ratio: Option<f64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        samples_per_round: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// DP-SGD from scratch over a grid of noise multipliers.
    DpTrain {
        #[arg(long, value_delimiter = ',')]
        sigma: Option<Vec<f64>>,
        #[arg(long)]
        clip: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Collect final-attack rows into tradeoff.csv.
    Report,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

/// Run the CLI and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(Error::MissingFile(p)) => {
            eprintln!("error: config file not found: {}", p.display());
            return 2;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match execute(cli.command, cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.generator.seed = s;
    }
    if let Some(d) = &cli.data {
        cfg.data = d.clone();
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(r) = &cli.run_id {
        cfg.run_id = Some(r.clone());
    }
    if let Some(c) = &cli.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    Ok(cfg)
}

fn execute(cmd: Command, mut cfg: RunConfig) -> Result<()> {
    match cmd {
        Command::GenData { episodes } => {
            if let Some(n) = episodes {
                cfg.generator.n_episodes = n;
            }
            let eps = generate(&cfg.generator)?;
            if let Some(dir) = cfg.data.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_triplets(&eps, &cfg.data)?;
            info!(
                "wrote {} episodes to {} (binned missingness {:.3})",
                eps.len(),
                cfg.data.display(),
                binned_missingness(&eps, cfg.generator.n_vars)
            );
            Ok(())
        }
        Command::Pretrain { epochs } => {
            if let Some(e) = epochs {
                cfg.train.max_epochs = e;
            }
            cfg.validate()?;
            let episodes = load_triplets(&cfg.data, cfg.n_vars)?;
            let prep = prepare(&episodes, &cfg, None)?;
            info!("{} train / {} heldout / {} test windows", prep.train.len(), prep.heldout.len(), prep.test.len());
            let ck = pretrain(&prep, &cfg)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.checkpoint_path();
            save_checkpoint(&ck, &path)?;
            info!("saved {}", path.display());
            Ok(())
        }
        Command::Attack => {
            cfg.method = Method::Baseline;
            cfg.validate()?;
            let (ck, data) = load_run(&cfg)?;
            let run_id = cfg.run_id();
            let (row, report) = attack_row(&run_id, Method::Baseline, 0.0, &ck.params, &data)?;
            append_metrics(std::slice::from_ref(&row), &metrics_path(&cfg))?;
            write_roc(&report, &cfg.out_dir.join(format!("roc_{run_id}.csv")))?;
            info!("priv {} auroc {:.4} mse_test {:.5}", row.priv_ratio, row.auroc, row.mse_test);
            Ok(())
        }
        Command::Augment { method, alpha, beta, pca_ratio, rounds, samples_per_round, lambda, mu, steps } => {
            if let Some(m) = method {
                cfg.method = m;
            }
            if cfg.method == Method::Baseline {
                cfg.method = Method::ZooPca;
            }
            if let Some(a) = alpha {
                cfg.zoo.alpha = a;
            }
            if let Some(b) = beta {
                cfg.mixup.beta = b;
            }
            if let Some(r) = pca_ratio {
                cfg.pca_ratio = r;
            }
            if let Some(r) = rounds {
                cfg.rounds = r;
            }
            if let Some(s) = samples_per_round {
                cfg.samples_per_round = Some(s);
            }
            if let Some(l) = lambda {
                cfg.zoo.lambda = l;
            }
            if let Some(m) = mu {
                cfg.zoo.mu = m;
            }
            if let Some(s) = steps {
                cfg.zoo.steps = s;
            }
            cfg.validate()?;
            let (ck, data) = load_run(&cfg)?;
            let run_id = cfg.run_id();
            let metrics = metrics_path(&cfg);
            let mut sink = |row: &crate::data::io::MetricsRow| append_metrics(std::slice::from_ref(row), &metrics);
            let out = run_augmentation(&cfg, &data, &ck.params, &mut sink)?;
            write_gate_log(&out.gate_log, &cfg.out_dir.join(format!("gate_{run_id}.csv")))?;
            write_roc(&out.attack, &cfg.out_dir.join(format!("roc_{run_id}.csv")))?;
            let final_ck = Checkpoint { params: out.params, ..ck };
            save_checkpoint(&final_ck, &cfg.out_dir.join(format!("checkpoint_{run_id}")))?;
            info!("{} of {} rounds accepted; final priv {}", out.accepted_rounds, cfg.rounds, out.attack.priv_ratio);
            Ok(())
        }
        Command::DpTrain { sigma, clip, epochs } => {
            cfg.method = Method::DpSgd;
            if let Some(s) = sigma {
                cfg.dp_sigmas = s;
            }
            if let Some(c) = clip {
                cfg.dp.clip_norm = c;
            }
            if let Some(e) = epochs {
                cfg.dp_epochs = Some(e);
            }
            cfg.validate()?;
            let (_, data) = load_run(&cfg)?;
            let run_id = cfg.run_id();
            let metrics = metrics_path(&cfg);
            let mut sink = |row: &crate::data::io::MetricsRow| append_metrics(std::slice::from_ref(row), &metrics);
            for (sigma, _, report) in run_dp_sweep(&cfg, &data, &mut sink)? {
                write_roc(&report, &cfg.out_dir.join(format!("roc_{run_id}_s{sigma}.csv")))?;
            }
            Ok(())
        }
        Command::Report => {
            let rows = read_metrics(&metrics_path(&cfg))?;
            let t = tradeoff_rows(&rows);
            let path = cfg.out_dir.join("tradeoff.csv");
            write_tradeoff(&t, &path)?;
            info!("wrote {} points to {}", t.len(), path.display());
            Ok(())
        }
    }
}

fn metrics_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("metrics.csv")
}

/// Checkpoint plus the splits embedded with its frozen map.
fn load_run(cfg: &RunConfig) -> Result<(Checkpoint, Datasets)> {
    let ck = load_checkpoint(&cfg.checkpoint_path())?;
    let episodes = load_triplets(&cfg.data, cfg.n_vars)?;
    let prep = prepare(&episodes, cfg, ck.standardizer.clone())?;
    let data = Datasets::embed(&prep, &ck.embedding)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok((ck, data))
}

fn write_roc(report: &AttackReport, path: &Path) -> Result<()> {
    let pts: Vec<(f64, f64, f64)> = report.roc.iter().map(|p| (p.threshold, p.fpr, p.tpr)).collect();
    write_roc_csv(&pts, path)
}
