use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use flowcast::bench::{cmd_evaluate, cmd_predict, cmd_synth, cmd_train, cmd_train_all, RunConfig, RunManifest};
use flowcast::models::Architecture;
use flowcast::par::Exec;
use flowcast::Result;

#[derive(Parser)]
#[command(name = "flowcast", version, about = "Multi-station 120-hour streamflow forecasting benchmark")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic station files.
    Synth,
    /// Train one model, or every configured model with --all.
    Train(ModelChoice),
    /// Forecast the test water year and write prediction archives.
    Predict(ModelChoice),
    /// Score stored archives and write every report file.
    Evaluate(ModelList),
    /// Re-emit the report files from stored archives.
    Report(ModelList),
}

#[derive(Args)]
struct ModelChoice {
    /// Model tag: persistence, seq2seq, gru, lstm or transformer.
    #[arg(long, conflicts_with = "all", required_unless_present = "all")]
    model: Option<String>,
    /// Every model listed in the config.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct ModelList {
    /// Comma-separated model tags; defaults to the config's model list.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::with_seed(cli.seed.unwrap_or_default()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn models(cfg: &RunConfig, list: &[String]) -> Result<Vec<Architecture>> {
    if list.is_empty() {
        return cfg.architectures();
    }
    let mut archs = list.iter().map(|t| Architecture::parse(t)).collect::<Result<Vec<_>>>()?;
    archs.sort();
    archs.dedup();
    Ok(archs)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let mut manifest = RunManifest::open(&cfg);
    let clock = Instant::now();
    let stage = match &cli.command {
        Command::Synth => {
            let paths = cmd_synth(&cfg)?;
            println!("wrote {} files under {}", paths.len(), cfg.data_dir().display());
            manifest.data_files = paths;
            "synth".to_owned()
        }
        Command::Train(choice) => {
            let records = match &choice.model {
                Some(tag) => vec![cmd_train(&cfg, Architecture::parse(tag)?, exec)?],
                None => cmd_train_all(&cfg, exec)?,
            };
            for r in &records {
                println!(
                    "{}: {} epochs, best val MAE {:.5} at epoch {}, {:.1}s -> {}",
                    r.model,
                    r.epochs,
                    r.best_val_mae,
                    r.best_epoch,
                    r.seconds,
                    r.checkpoint.display()
                );
                manifest.record_train(r);
            }
            format!("train {}", choice.model.as_deref().unwrap_or("--all"))
        }
        Command::Predict(choice) => {
            let archs = match &choice.model {
                Some(tag) => vec![Architecture::parse(tag)?],
                None => cfg.architectures()?,
            };
            for arch in archs {
                let r = cmd_predict(&cfg, arch, exec)?;
                println!(
                    "{}: {} anchors over {} stations -> {}",
                    r.model,
                    r.anchors,
                    r.stations,
                    r.dir.display()
                );
                manifest.record_predict(&r);
            }
            format!("predict {}", choice.model.as_deref().unwrap_or("--all"))
        }
        Command::Evaluate(list) | Command::Report(list) => {
            let archs = models(&cfg, &list.models)?;
            let (report, paths) = cmd_evaluate(&cfg, &archs, exec)?;
            for m in &report.models {
                println!(
                    "{:<12} NSE {:.4}  KGE {:.4}  R {:.4}  NRMSE {:.4}",
                    m.model.label(),
                    m.unified.nse,
                    m.unified.kge,
                    m.unified.r,
                    m.unified.nrmse
                );
            }
            println!("wrote {} report files under {}", paths.len(), cfg.report_dir().display());
            if matches!(cli.command, Command::Report(_)) {
                return Ok(());
            }
            manifest.record_report(&report, paths);
            "evaluate".to_owned()
        }
    };
    manifest.record_time(stage, clock.elapsed().as_secs_f64());
    manifest.save(&cfg.manifest_path())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("E_USAGE: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
