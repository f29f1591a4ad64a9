use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellflow::batch::{
    apply_override, parse_config, read_config_value, rerender, rerender_aggregate, run_batch, run_workflow,
    AnalyzeConfig, BatchConfig,
};
use cellflow::synthdata::{simulate, SimScenario};
use cellflow::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "cellflow", version, about = "Single-cell time-lapse analysis")]
struct Cli {
    /// Log level for messages on stderr.
    #[arg(long, value_enum, default_value = "warn", global = true)]
    log: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

#[derive(Subcommand)]
enum Command {
    /// Run the workflow on one replicate.
    Analyze(RunArgs),
    /// Run the workflow on every replicate and aggregate growth rates.
    Batch(RunArgs),
    /// Write a synthetic colony with ground truth and a matching analyze config.
    Simulate(SimArgs),
    /// Re-render plots from a replicate or batch output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; relative input paths are resolved against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config value, e.g. workflow.tracking.area_weight=0.5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SimArgs {
    /// Scenario JSON; a single founder growing at 0.6 1/h when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "sim")]
    out: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Replicate or batch output directories.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidMetadata(_) => 2,
        _ => 1,
    }
}

fn load_config(path: &Path, overrides: &[String]) -> Result<Value, Error> {
    let mut value = read_config_value(path).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    apply_overrides(&mut value, overrides)?;
    Ok(value)
}

fn apply_overrides(value: &mut Value, overrides: &[String]) -> Result<(), Error> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override {o:?} is not KEY=VALUE")))?;
        apply_override(value, k, v)?;
    }
    Ok(())
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Error> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn analyze(args: RunArgs) -> Result<(), Error> {
    let mut cfg: AnalyzeConfig = parse_config(load_config(&args.config, &args.overrides)?)?;
    cfg.replicate.resolve_paths(&config_dir(&args.config));
    cfg.validate()?;
    let out = args.out.unwrap_or_else(|| PathBuf::from("out"));
    let report = pool(args.jobs)?.install(|| run_workflow(&cfg.replicate, &cfg.workflow, &out))?;
    for w in &report.warnings {
        warn!("{w}");
    }
    if report.succeeded() {
        info!("wrote {}", out.display());
        Ok(())
    } else {
        let stage = report.failed_stage().unwrap_or("unknown");
        Err(Error::InvalidInput(format!(
            "stage {stage} failed ({}): {}",
            report.status,
            report.error.clone().unwrap_or_default()
        )))
    }
}

fn batch(args: RunArgs) -> Result<(), Error> {
    let mut cfg: BatchConfig = parse_config(load_config(&args.config, &args.overrides)?)?;
    let base = config_dir(&args.config);
    cfg.replicates.iter_mut().for_each(|r| r.resolve_paths(&base));
    if let Some(out) = args.out {
        cfg.output = out;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    let agg = run_batch(&cfg)?;
    for r in agg.replicates.iter().filter(|r| !r.succeeded()) {
        warn!("{}: {} {}", r.origin_id, r.status, r.error.as_deref().unwrap_or(""));
    }
    for (k, s) in &agg.measures {
        info!("{k}: mean {:.4} 1/h, std {:.4}, n {}", s.mean, s.std, s.n());
    }
    Ok(())
}

fn simulate_cmd(args: SimArgs) -> Result<(), Error> {
    let mut value = match &args.config {
        Some(p) => read_config_value(p).map_err(|e| Error::InvalidConfig(e.to_string()))?,
        None => serde_json::to_value(SimScenario::basic(0, 0.6, 40)).map_err(|e| Error::InvalidConfig(e.to_string()))?,
    };
    apply_overrides(&mut value, &args.overrides)?;
    let sc: SimScenario = parse_config(value)?;
    sc.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let sim = simulate(&sc)?;
    sim.write(&args.out)?;
    let cfg = AnalyzeConfig::for_simulation(&sim);
    let path = args.out.join("analyze.json");
    let text = serde_json::to_string_pretty(&cfg).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    info!("{} cells written to {}", sim.truth.cells.len(), args.out.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Error> {
    for dir in &args.dirs {
        if dir.join("aggregate").join("aggregate.json").exists() {
            for origin in rerender_aggregate(dir)? {
                rerender(&dir.join(origin))?;
            }
        } else {
            rerender(dir)?;
        }
        info!("re-rendered {}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.log {
        LogLevel::Error => log::LevelFilter::Error,
        LogLevel::Warn => log::LevelFilter::Warn,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Batch(a) => batch(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cellflow: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
