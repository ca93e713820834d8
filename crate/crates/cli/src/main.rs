//! `riccati`: runs the Riccati-relation solvers from a JSON configuration.

mod config;
mod error;
mod output;
mod run;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{build, ModelKind, RunConfig};
use error::CliError;
use output::write_all;

const DEFAULT_OUT_DIR: &str = "riccati_out";

#[derive(Parser)]
#[command(name = "riccati", version, about = "Linearised solvers for matrix and nonlocal Riccati equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its fields and report.
    Run(Common),
    /// Run a configuration across values of one parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; the model preset is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also run the direct solver and report the discrepancy.
    #[arg(long)]
    oracle: bool,
    /// Integrate the linear flow numerically instead of in closed form.
    #[arg(long)]
    general_path: bool,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Final (and only query) time.
    #[arg(long)]
    t: Option<f64>,
    /// Seed for random matrix blocks.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// One of dt, t, n, half_width, det2_stride, seed.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, allow_hyphen_values = true)]
    values: String,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match (&common.config, common.model) {
        (Some(path), model) => {
            let mut c = RunConfig::from_path(path)?;
            if let Some(m) = model {
                c.model = m;
            }
            c
        }
        (None, Some(m)) => RunConfig::for_model(m),
        (None, None) => return Err(CliError::Config("either --config or --model is required".into())),
    };
    cfg.oracle |= common.oracle;
    cfg.general_path |= common.general_path;
    let mut cfg = cfg.resolve();
    if let Some(t) = common.t {
        let times = cfg.times.as_mut().expect("resolved config");
        times.t_final = t;
        times.query = None;
    }
    if let Some(seed) = common.seed {
        match cfg.matrix.as_mut() {
            Some(m) => m.seed = seed,
            None => return Err(CliError::Config("--seed applies to the matrix model".into())),
        }
    }
    if cfg.general_path && matches!(cfg.model, ModelKind::Matrix | ModelKind::Burgers) {
        return Err(CliError::Config(format!(
            "--general-path is not available for the {:?} model",
            cfg.model
        )));
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    common
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable report");
    s.push('\n');
    s
}

fn write_run(dir: &Path, exec: run::Execution) -> Result<(), CliError> {
    let mut files = exec.files;
    files.push(("report.json".into(), json(&exec.report)));
    files.push(("timings.json".into(), json(&exec.timings)));
    write_all(dir, &files)
}

fn cmd_run(common: &Common) -> Result<i32, CliError> {
    let cfg = load(common)?;
    let built = build(&cfg)?;
    let exec = run::execute(&cfg, &built);
    let code = exec.exit_code();
    if let Some(e) = &exec.error {
        if code == 2 {
            return Err(CliError::Config(e.to_string()));
        }
        eprintln!("error: {e}");
    }
    write_run(&out_dir(common, &cfg), exec)?;
    Ok(code)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let values = sweep::parse_values(&args.values)?;
    let cfg = load(&args.common)?;
    let summary = sweep::sweep(&cfg, &args.param, &values)?;
    let files = vec![
        ("sweep.csv".to_string(), sweep::sweep_csv(&summary)),
        ("sweep.json".to_string(), json(&summary)),
    ];
    write_all(&out_dir(&args.common, &cfg), &files)?;
    Ok(0)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("RICCATI_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("RICCATI_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Run(common) => cmd_run(common),
        Command::Sweep(args) => cmd_sweep(args),
    });
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
