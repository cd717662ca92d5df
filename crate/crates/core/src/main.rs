use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use desire_core::checkpoint::Checkpoint;
use desire_core::config::{parse_arch, ArchValue, ConfigOverrides, Preset, RunConfig};
use desire_core::dataset::{Dataset, DatasetKind};
use desire_core::metrics::MetricsRecord;
use desire_core::profiler::{complexity_report, write_report};
use desire_core::trainer::{evaluate, train};
use desire_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "desire",
    version,
    about = "Train spiking networks with desire backpropagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and evaluate it after every epoch.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test set.
    Eval(EvalArgs),
    /// Count arithmetic operations per neuron and write complexity.csv.
    Profile(ProfileArgs),
    /// Re-export metrics CSVs (and optionally SVG plots) from a run directory.
    Export(ExportArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hyperparameter preset: mnist or fashion.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<u32>,
    /// Layer widths, e.g. 784,400,200,10.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    metrics_dir: Option<PathBuf>,
    /// Also render SVG plots into the metrics directory.
    #[arg(long)]
    svg: bool,
    /// Continue from --checkpoint if it exists.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    /// Record per-class firing rates at every evaluation.
    #[arg(long)]
    record_activity: bool,
    /// Record input contributions for this many samples of the first epoch.
    #[arg(long)]
    contribution_samples: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long)]
    test_limit: Option<usize>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long, default_value = "784,800,400,10")]
    arch: String,
    #[arg(long, default_value_t = 20)]
    time_steps: usize,
    /// Fraction of input spike bits set.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Membrane decay used for the forward count (1.0 means no decay multiply).
    #[arg(long, default_value_t = 0.9)]
    beta_p: f32,
    #[arg(long, default_value = "complexity.csv")]
    output: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// Directory holding accuracy.csv and friends.
    #[arg(long)]
    metrics_dir: PathBuf,
    /// Destination directory (defaults to --metrics-dir).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
}

fn load_split(dir: &std::path::Path, kind: DatasetKind, limit: Option<usize>) -> Result<Dataset> {
    let mut data = Dataset::load(dir, kind)?;
    if let Some(n) = limit {
        data.truncate(n);
    }
    info!(
        "loaded {} {:?} samples from {}",
        data.len(),
        kind,
        dir.display()
    );
    Ok(data)
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cli = ConfigOverrides {
        arch: args
            .arch
            .as_deref()
            .map(parse_arch)
            .transpose()?
            .map(ArchValue::List),
        epochs: args.epochs,
        seed: args.seed,
        dataset_dir: args.dataset_dir,
        checkpoint: args.checkpoint,
        metrics_dir: args.metrics_dir,
        svg: args.svg.then_some(true),
        resume: args.resume.then_some(true),
        train_limit: args.train_limit,
        test_limit: args.test_limit,
        record_activity: args.record_activity.then_some(true),
        contribution_samples: args.contribution_samples,
        ..ConfigOverrides::default()
    };
    let config = RunConfig::resolve(args.config.as_deref(), args.preset, cli)?;
    config.validate_for_images()?;
    let train_set = load_split(&config.dataset_dir, DatasetKind::Train, config.train_limit)?;
    let test_set = load_split(&config.dataset_dir, DatasetKind::Test, config.test_limit)?;
    let out = train(&config, &train_set, &test_set, |r| {
        println!(
            "epoch {:>3}  eta {:.3e}  train {:.4}  test {:.4}  loss {}  {:.1}s",
            r.epoch,
            r.eta,
            r.train_accuracy,
            r.evaluation.accuracy(),
            r.evaluation
                .layer_losses
                .iter()
                .map(|l| format!("{l:.5}"))
                .collect::<Vec<_>>()
                .join("/"),
            r.seconds
        );
    })?;
    if let Some(last) = out.metrics.accuracy.last() {
        println!(
            "final test accuracy {:.4} after epoch {}",
            last.accuracy, last.epoch
        );
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let net = Checkpoint::load(&args.checkpoint)?.to_network()?;
    let test_set = load_split(&args.dataset_dir, DatasetKind::Test, args.test_limit)?;
    let ev = evaluate(&net, &test_set, false)?;
    println!(
        "accuracy {:.4} ({}/{})",
        ev.accuracy(),
        ev.correct,
        ev.total
    );
    for (ell, loss) in ev.layer_losses.iter().enumerate() {
        println!("layer {} mean local loss {loss:.6}", ell + 1);
    }
    Ok(())
}

fn run_profile(args: ProfileArgs) -> Result<()> {
    let arch = parse_arch(&args.arch)?;
    let rows = complexity_report(&arch, args.time_steps, args.density, args.beta_p)?;
    write_report(
        &rows,
        &arch,
        args.time_steps,
        args.density,
        args.beta_p,
        &args.output,
    )?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    for r in &rows {
        println!(
            "{:<9} {:<22} {:>12} {:>12} {}",
            r.phase,
            r.metric,
            r.measured,
            r.formula,
            if r.pass { "ok" } else { "FAIL" }
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} cells differ from the expected counts",
            failed.len()
        )))
    }
}

fn run_export(args: ExportArgs) -> Result<()> {
    let metrics = MetricsRecord::read_csv(&args.metrics_dir)?;
    let out = args.output.unwrap_or(args.metrics_dir);
    metrics.write_csv(&out)?;
    if args.svg {
        metrics.write_svg(&out)?;
    }
    println!("wrote metrics to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Profile(a) => run_profile(a),
        Command::Export(a) => run_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
