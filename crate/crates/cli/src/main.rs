use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gqc::control::{optimize_control, OptimizerSettings};
use gqc::experiment::{figure_config, qfi_curve, to_csv_string, ExperimentConfig, Figure, Panel};
use gqc::qfi::{angle_family, qfi_rate, reduced_rate_angle, reduced_rate_strength, strength_family_from_y};
use gqc::verify::{check_curve_oracle, run_suite, Suite};
use gqc::{FamilyKind, ThermalChannel};

const ORACLE_POINTS: usize = 8;

#[derive(Parser)]
#[command(name = "gqc", version, about = "QFI of single-mode Gaussian states under thermal loss")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form QFI curves for a list of control times, as CSV.
    QfiCurve(CurveArgs),
    /// Numerically optimal control at a single instant.
    Optimize(OptimizeArgs),
    /// Run a seeded verification suite.
    Verify(VerifyArgs),
    /// Curve bundle of one figure panel.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Angle,
    Strength,
}

impl From<FamilyArg> for FamilyKind {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Angle => FamilyKind::Angle,
            FamilyArg::Strength => FamilyKind::Strength,
        }
    }
}

#[derive(Args)]
struct CurveArgs {
    /// JSON experiment description; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long)]
    y: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    theta_bar: Option<f64>,
    /// Thermal noise N = 2 n̄ + 1.
    #[arg(long)]
    big_n: Option<f64>,
    /// Control times, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    tc: Option<Vec<f64>>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_steps: Option<usize>,
    /// Cross-check a few points per curve against the Fock-space oracle.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    oracle_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    y: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    big_n: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    samples: usize,
}

#[derive(Args)]
struct ReproduceArgs {
    /// fig2 (squeezing angle) or fig3 (squeezing strength).
    figure: String,
    /// upper (y = 3, N = 1) or lower (y = 10, N = 2).
    panel: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error that maps to a specific exit status.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Verification(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn build_config(args: &CurveArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
            let mut value: serde_json::Value = serde_json::from_str(&text).map_err(usage)?;
            // flags fill in required fields before validation
            if let Some(obj) = value.as_object_mut() {
                if let Some(f) = args.family {
                    obj.insert("family".into(), serde_json::to_value(FamilyKind::from(f)).expect("enum"));
                }
                if let Some(y) = args.y {
                    obj.insert("y".into(), y.into());
                }
                if let Some(n) = args.big_n {
                    obj.insert("N".into(), n.into());
                }
            }
            ExperimentConfig::from_json(&value.to_string()).map_err(usage)?
        }
        None => {
            let family = args.family.ok_or_else(|| usage(anyhow::anyhow!("--family is required without --config")))?;
            let y = args.y.ok_or_else(|| usage(anyhow::anyhow!("--y is required without --config")))?;
            ExperimentConfig::new(family.into(), y, args.big_n.unwrap_or(1.0))
        }
    };
    if let Some(v) = args.theta_bar {
        cfg.theta_bar = v;
    }
    if let Some(v) = &args.tc {
        cfg.t_c_list = v.clone();
    }
    if let Some(v) = args.t_max {
        cfg.t_max = v;
    }
    if let Some(v) = args.t_steps {
        cfg.t_steps = v;
    }
    if args.oracle {
        cfg.oracle = true;
    }
    if let Some(v) = args.oracle_dim {
        cfg.oracle_dim = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().lock().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn cmd_qfi_curve(args: &CurveArgs) -> Result<(), Failure> {
    let cfg = build_config(args)?;
    let rows = qfi_curve(&cfg).map_err(|e| Failure::Runtime(e.into()))?;
    emit(&to_csv_string(&rows), args.out.as_deref())?;
    if cfg.oracle {
        let (outcome, skipped) = check_curve_oracle(&cfg, ORACLE_POINTS).map_err(|e| Failure::Runtime(e.into()))?;
        eprintln!("{outcome}");
        if skipped > 0 {
            eprintln!("oracle: skipped {skipped} points (outside the oracle range, or pure at t > 0 with mixed neighbours)");
        }
        if !outcome.ok() {
            return Err(Failure::Verification("oracle cross-check failed".into()));
        }
    }
    Ok(())
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<(), Failure> {
    let ch = ThermalChannel::new(args.big_n).map_err(usage)?;
    let family = match args.family {
        FamilyArg::Angle => angle_family(args.y, args.nu, args.theta_bar),
        FamilyArg::Strength => strength_family_from_y(args.y, args.nu),
    }
    .map_err(usage)?;
    let opt = optimize_control(&family, &ch, &OptimizerSettings::default()).map_err(|e| Failure::Runtime(e.into()))?;
    let analytic = match args.family {
        FamilyArg::Angle => reduced_rate_angle(args.y, args.nu, args.big_n, 2.0 / args.nu),
        FamilyArg::Strength => reduced_rate_strength(args.nu, args.big_n, 2.0 / args.nu),
    };
    let uncontrolled = qfi_rate(&family, &ch).map_err(|e| Failure::Runtime(e.into()))?;
    let report = format!(
        "phi = {:.12}\nz = {:.12}\nchi = {:.1}\nrate = {:.16e}\nanalytic_rate = {:.16e}\ngap = {:.3e}\nuncontrolled_rate = {:.16e}\n",
        opt.control.phi,
        opt.control.z,
        opt.control.chi,
        opt.rate,
        analytic,
        (opt.rate - analytic).abs(),
        uncontrolled
    );
    emit(&report, None)?;
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let suite: Suite = args.suite.parse().map_err(usage)?;
    if args.samples == 0 {
        return Err(usage(anyhow::anyhow!("--samples must be positive")));
    }
    let outcomes = run_suite(suite, args.seed, args.samples);
    let mut text = String::new();
    for o in &outcomes {
        text.push_str(&format!("{o}\n"));
    }
    let failed = outcomes.iter().filter(|o| !o.ok()).count();
    text.push_str(&format!("{} checks, {failed} failed\n", outcomes.len()));
    emit(&text, None)?;
    if failed > 0 {
        return Err(Failure::Verification(format!("{failed} checks failed")));
    }
    Ok(())
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<(), Failure> {
    let figure: Figure = args.figure.parse().map_err(usage)?;
    let panel: Panel = args.panel.parse().map_err(usage)?;
    let rows = qfi_curve(&figure_config(figure, panel)).map_err(|e| Failure::Runtime(e.into()))?;
    emit(&to_csv_string(&rows), args.out.as_deref())?;
    log::info!("{figure} {panel}: {} rows", rows.len());
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("GQC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::QfiCurve(a) => cmd_qfi_curve(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
