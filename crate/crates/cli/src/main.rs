use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ctdrl_core::envlib::EnvConfig;
use ctdrl_core::experiments::{self, ExperimentConfig, ExperimentKind, ExperimentReport};
use ctdrl_core::sdesim::{mc_return_distribution, SimConfig};

/// Convergence experiments for distributional HJB losses.
#[derive(Parser)]
#[command(name = "ctdrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kolmogorov distance of the midpoint-quantile imputation vs 1/(2N).
    QuantileBound(ExpArgs),
    /// Weak distance against the bump family vs M/(2N).
    WeakNorm(ExpArgs),
    /// Weak SHJB loss of Monte Carlo fitted quantile statistics along N.
    ShjbDecay {
        #[command(flatten)]
        exp: ExpArgs,
        /// Imputation strategy; only `quantile` is supported.
        #[arg(long)]
        imputation: Option<String>,
    },
    /// Mean of the fitted imputation vs the closed-form value function.
    HjbConsistency(ExpArgs),
    /// Sample discounted returns from one state and write samples.csv.
    Simulate(SimArgs),
}

#[derive(Args)]
struct ExpArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Environment JSON, inline or as a file path.
    #[arg(long)]
    env: String,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    x0: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Defaults to the discounted-tail rule.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(kind: ExperimentKind, path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let obj = value.as_object_mut().context("config must be a JSON object")?;
    match obj.get("experiment").and_then(|v| v.as_str()) {
        None => {
            obj.insert("experiment".into(), kind.name().into());
        }
        Some(name) if name != kind.name() => {
            bail!("config is for `{name}` but `{}` was requested", kind.name())
        }
        Some(_) => {}
    }
    let cfg: ExperimentConfig = serde_json::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run_experiment(kind: ExperimentKind, args: &ExpArgs, imputation: Option<&str>) -> Result<bool> {
    let mut cfg = load_config(kind, &args.config)?;
    if let Some(imp) = imputation {
        cfg.imputation = imp.to_string();
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    let out = cfg
        .out_dir
        .clone()
        .context("no output directory: pass --out or set `out_dir`")?;
    let report = experiments::run(&cfg)?;
    report.write_to(&out)?;
    print_summary(&report, &out);
    Ok(report.passed())
}

fn print_summary(report: &ExperimentReport, out: &Path) {
    println!("{}", report.metrics_csv().trim_end());
    for v in &report.verdicts {
        println!("[{}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    println!("wrote {}", out.display());
}

fn simulate(args: &SimArgs) -> Result<()> {
    let text = if args.env.trim_start().starts_with('{') {
        args.env.clone()
    } else {
        fs::read_to_string(&args.env).with_context(|| format!("reading {}", args.env))?
    };
    let (env, _) = EnvConfig::from_json(&text)?.build()?;
    let sim = match args.horizon {
        Some(h) => SimConfig::new(args.dt, h, args.paths, args.seed)?,
        None => SimConfig::for_env(&env, args.dt, args.paths, args.seed)?,
    };
    let dist = mc_return_distribution(&env, &args.x0, &sim)?;
    fs::create_dir_all(&args.out)?;
    let mut csv = String::from("return\n");
    for s in dist.samples() {
        csv.push_str(&format!("{s}\n"));
    }
    let path = args.out.join("samples.csv");
    fs::write(&path, csv)?;
    println!(
        "{} paths, mean {:.6}, std {:.6}; wrote {}",
        dist.len(),
        dist.mean(),
        dist.std(),
        path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::QuantileBound(a) => run_experiment(ExperimentKind::QuantileBound, a, None),
        Command::WeakNorm(a) => run_experiment(ExperimentKind::WeakNorm, a, None),
        Command::ShjbDecay { exp, imputation } => {
            run_experiment(ExperimentKind::ShjbDecay, exp, imputation.as_deref())
        }
        Command::HjbConsistency(a) => run_experiment(ExperimentKind::HjbConsistency, a, None),
        Command::Simulate(a) => simulate(a).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
