use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use varadam::OptimizerKind;
use varadam_harness::{
    aggregate, emit_plot_svg, fetch, load_data, metrics, read_metrics_csv, run_experiment,
    run_identity_suite, write_metrics_csv, ExperimentConfig, Metric, Overrides, Series,
};

#[derive(Parser)]
#[command(
    name = "varadam",
    version,
    about = "Train and compare variance-aware Adam variants",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one optimizer on the configured dataset and write a metrics CSV
    Run(RunArgs),
    /// Aggregate metrics CSVs across seeds and draw a comparison SVG
    Plot(PlotArgs),
    /// Check every optimizer identity numerically and print one line each
    Verify,
    /// Download the four digit-dataset files and verify their checksums
    FetchMnist(FetchArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment description; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// sgdm | adam | adam-ucb | adam-cb | adam-s
    #[arg(long)]
    optimizer: Option<String>,
    /// Confidence hyperparameter override
    #[arg(long)]
    eta: Option<f64>,
    /// Replaces the seed list; repeat for several seeds
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// train_loss | val_loss | val_acc
    #[arg(long, default_value = "val_acc")]
    metric: String,
    /// Output SVG path
    #[arg(long, default_value = "plot.svg")]
    output: PathBuf,
    /// Series as label=metrics.csv, one per optimizer
    #[arg(required = true, value_name = "LABEL=CSV")]
    series: Vec<String>,
}

#[derive(Args)]
struct FetchArgs {
    /// Target directory for the four files
    #[arg(long, default_value = "data/mnist")]
    out: PathBuf,
    /// Mirror to download from
    #[arg(long, default_value = fetch::DEFAULT_BASE_URL)]
    base_url: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Verify => cmd_verify(),
        Command::FetchMnist(args) => fetch::fetch_mnist(&args.out, &args.base_url)
            .map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), String> {
    let optimizer = match &args.optimizer {
        Some(name) => Some(name.parse::<OptimizerKind>()?),
        None => None,
    };
    let overrides = Overrides {
        optimizer,
        eta: args.eta,
        seeds: if args.seeds.is_empty() {
            None
        } else {
            Some(args.seeds.clone())
        },
        epochs: args.epochs,
        batch_size: args.batch_size,
        output_dir: args.output_dir.clone(),
        data_dir: args.data_dir.clone(),
    };
    let cfg = ExperimentConfig::resolve(args.config.as_deref(), &overrides)
        .map_err(|e| e.to_string())?;

    eprintln!(
        "running {} on {} / {} for {} epochs (batch {}, eta {}, seeds {:?})",
        cfg.optimizer, cfg.dataset, cfg.model, cfg.epochs, cfg.batch_size, cfg.hp.eta, cfg.seeds
    );
    let data = load_data(&cfg).map_err(|e| e.to_string())?;
    let output = run_experiment(&cfg, &data).map_err(|e| e.to_string())?;
    for divergence in &output.divergences {
        eprintln!("warning: {divergence}");
    }

    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| format!("{}: {e}", cfg.output_dir.display()))?;
    let path = metrics::metrics_path(&cfg.output_dir, cfg.optimizer.name());
    write_metrics_csv(&output.records, &path).map_err(|e| e.to_string())?;
    eprintln!("wrote {}", path.display());

    if !output.records.is_empty() {
        let final_epoch = output.records.iter().map(|r| r.epoch).max().unwrap();
        for metric in [Metric::TrainLoss, Metric::ValLoss, Metric::ValAcc] {
            if let Ok(agg) = aggregate(&output.records, metric) {
                if let Some(point) = agg.iter().find(|a| a.epoch == final_epoch) {
                    println!(
                        "epoch {final_epoch} {}: {} +/- {}",
                        metric.label(),
                        metrics::fmt_sig(point.mean, 6),
                        metrics::fmt_sig(point.std, 3),
                    );
                }
            }
        }
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), String> {
    let metric: Metric = args.metric.parse()?;
    let mut series = Vec::new();
    for spec in &args.series {
        let (label, path) = spec
            .split_once('=')
            .ok_or_else(|| format!("series {spec:?} is not label=path"))?;
        let records = read_metrics_csv(std::path::Path::new(path)).map_err(|e| e.to_string())?;
        let points = aggregate(&records, metric).map_err(|e| e.to_string())?;
        series.push(Series {
            label: label.to_string(),
            points,
        });
    }
    emit_plot_svg(&series, metric.label(), &args.output).map_err(|e| e.to_string())?;
    eprintln!("wrote {}", args.output.display());
    Ok(())
}

fn cmd_verify() -> Result<(), String> {
    let results = run_identity_suite();
    let mut failed = 0;
    for r in &results {
        let status = if r.passed { "ok " } else { "FAIL" };
        println!("[{status}] {}: {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        Err(format!("{failed} identity check(s) failed"))
    } else {
        Ok(())
    }
}
