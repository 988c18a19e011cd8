//! Command-line front end: generate data, run experiments, sweep domains,
//! re-render reports.

use clap::{Parser, Subcommand};
use fedpad::config::{DataSource, ExperimentConfig, Mode};
use fedpad::datagen::save_dataset;
use fedpad::harness;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fedpad", about = "Federated presentation-attack-detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's mode (single|fused|all|fedpad|fedgpad)
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic domain family and save it to disk
    GenData(CommonArgs),
    /// Train and evaluate one experiment
    Run(CommonArgs),
    /// Run once per domain playing the user role; write a summary CSV
    Sweep(CommonArgs),
    /// Re-render CSVs from stored run records
    Report(CommonArgs),
}

fn parse_mode(text: &str) -> Result<Mode, String> {
    match text {
        "single" => Ok(Mode::Single),
        "fused" => Ok(Mode::Fused),
        "all" => Ok(Mode::All),
        "fedpad" => Ok(Mode::FedPad),
        "fedgpad" => Ok(Mode::FedGpad),
        other => Err(format!("unknown mode {other:?}")),
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::from_path(&args.config).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(mode) = &args.mode {
        cfg.mode = parse_mode(mode)?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn gen_data(cfg: &ExperimentConfig) -> Result<(), String> {
    if !matches!(cfg.data, DataSource::Synthetic { .. }) {
        return Err("gen-data needs a synthetic data source".into());
    }
    let pool = harness::load_pool(cfg).map_err(|e| e.to_string())?;
    let base = cfg.out_dir.join("data");
    for ds in pool.train.iter().chain(std::iter::once(&pool.user)) {
        let dir = base.join(format!("domain_{}", ds.domain_id));
        save_dataset(ds, &dir).map_err(|e| e.to_string())?;
        println!("wrote {} samples to {}", ds.len(), dir.display());
    }
    Ok(())
}

fn run_one(cfg: &ExperimentConfig) -> Result<(), String> {
    let record = harness::run(cfg).map_err(|e| e.to_string())?;
    let dir = harness::write_artifacts(cfg, &record).map_err(|e| e.to_string())?;
    println!(
        "{} user_domain={} hter={:.4} eer={:.4} auc={:.4} ({:.1}s) -> {}",
        record.mode,
        record.user_domain,
        record.report.hter,
        record.report.eer,
        record.report.auc,
        record.wall_secs,
        dir.display()
    );
    Ok(())
}

fn sweep(cfg: &ExperimentConfig) -> Result<(), String> {
    let records = harness::sweep_leave_one_out(cfg).map_err(|e| e.to_string())?;
    print!("{}", harness::summary_csv(&records));
    println!("summary: {}", cfg.out_dir.join("sweep_summary.csv").display());
    Ok(())
}

fn report(cfg: &ExperimentConfig) -> Result<(), String> {
    let dirs = harness::report(cfg).map_err(|e| e.to_string())?;
    for d in dirs {
        println!("re-rendered {}", d.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(args) => load_config(args).and_then(|cfg| gen_data(&cfg)),
        Command::Run(args) => load_config(args).and_then(|cfg| run_one(&cfg)),
        Command::Sweep(args) => load_config(args).and_then(|cfg| sweep(&cfg)),
        Command::Report(args) => load_config(args).and_then(|cfg| report(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
