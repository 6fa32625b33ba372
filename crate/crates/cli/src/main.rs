#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use erprior::estimation::solve_mple;
use erprior::harness::{
    run_invariance_experiment, run_restriction_experiment, run_selection_invariance,
    run_two_point_demo, Change, TargetGrid, TransformKind,
};
use erprior::information::jeffreys_prior;
use erprior::models::sample_dataset;
use erprior::selection::loo_cross_validate;
use erprior::{io, InvarianceConfig, PenaltyKind, PenaltySpec, RestrictionConfig, Termination};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

/// Empirical reference priors: invariant penalized estimation of prior
/// densities from indirect measurements.
#[derive(Debug, Parser)]
#[command(name = "erprior", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a data set from the configured truth and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate the prior for a data set; writes prior.csv and trace.csv.
    Estimate(EstimateArgs),
    /// Choose gamma by leave-one-out cross-validation; writes cv.csv.
    Crossval(CrossvalArgs),
    /// Compare estimates in the original and exp-transformed spaces.
    InvarianceCheck(InvarianceArgs),
    /// Compare a restricted [0,2] estimate with a direct [0,1] estimate.
    RestrictionCheck(RestrictionArgs),
    /// Mutual information curve of the two-point model.
    TwoPointDemo(TwoPointArgs),
    /// Jeffreys prior of the configured model on the configured grid.
    Jeffreys(JeffreysArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Measurements, one `x` column.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_penalty)]
    penalty: Option<PenaltyKind>,
    #[arg(long, allow_negative_numbers = true, value_parser = non_negative)]
    gamma: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CrossvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_penalty)]
    penalty: Option<PenaltyKind>,
    /// Comma-separated candidates.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_parser = non_negative)]
    gammas: Option<Vec<f64>>,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InvarianceArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    j: Option<usize>,
    #[arg(long, allow_negative_numbers = true, value_parser = positive)]
    gamma: Option<f64>,
    #[arg(long, value_enum, default_value_t = TransformArg::Exp)]
    transform: TransformArg,
    #[arg(long, value_enum, default_value_t = TargetGridArg::Image)]
    target_grid: TargetGridArg,
    /// Pick gamma by cross-validation in both spaces instead of using --gamma.
    #[arg(long)]
    select_gamma: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RestrictionArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, allow_negative_numbers = true, value_parser = positive)]
    gamma: Option<f64>,
    /// Keep only measurements below this value.
    #[arg(long, allow_negative_numbers = true)]
    data_below: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TwoPointArgs {
    #[arg(long, default_value_t = 201)]
    resolution: usize,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct JeffreysArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum TransformArg {
    Identity,
    Exp,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum TargetGridArg {
    Image,
    Equidistant,
}

fn parse_penalty(s: &str) -> std::result::Result<PenaltyKind, String> {
    s.parse().map_err(|e: erprior::Error| e.to_string())
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err("must be a finite number >= 0".into()),
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err("must be a finite number > 0".into()),
    }
}

/// A failure of the numerics rather than of the input; exit code 3.
#[derive(Debug)]
struct NumericalFailure(String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<NumericalFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<erprior::Error>() {
            if e.is_numerical() {
                return 3;
            }
        }
    }
    2
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig> {
    RunConfig::load(arg.config.as_deref())
}

fn meta_path_for_file(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.meta.json"))
}

fn write_meta(
    path: &Path,
    command: &str,
    config: &impl Serialize,
    extra: serde_json::Value,
) -> Result<()> {
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "inputs": extra,
    });
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    cfg.m = args.m.unwrap_or(cfg.m);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let model = cfg.model.build()?;
    let truth = cfg.truth_density()?;
    let data = sample_dataset(model.as_ref(), &truth, cfg.m, cfg.seed)?;
    ensure_parent(&args.out)?;
    io::save_dataset(&args.out, &data)?;
    write_meta(&meta_path_for_file(&args.out), "simulate", &cfg, json!({}))?;
    println!(
        "wrote {} measurements to {}",
        data.len(),
        args.out.display()
    );
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    cfg.penalty = args.penalty.unwrap_or(cfg.penalty);
    cfg.gamma = args.gamma.unwrap_or(cfg.gamma);
    cfg.validate()?;
    let data = io::load_dataset(&args.data)
        .with_context(|| format!("cannot read data {}", args.data.display()))?;
    let model = cfg.model.build()?;
    let grid = cfg.grid()?;
    let penalty = PenaltySpec::for_kind(cfg.penalty, model.as_ref(), grid.clone())?;
    let result = solve_mple(
        model.as_ref(),
        &data,
        grid,
        &penalty,
        cfg.gamma,
        &cfg.solver,
    )?;
    match result.termination {
        Termination::NoProgress => {
            return Err(NumericalFailure(format!(
                "solver made no progress after {} iterations",
                result.iterations
            ))
            .into())
        }
        Termination::MaxIterations => eprintln!(
            "warning: iteration budget of {} exhausted before convergence",
            cfg.solver.max_iters
        ),
        Termination::Converged => {}
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    io::save_estimate(&args.out, &result)?;
    write_meta(
        &args.out.join("meta.json"),
        "estimate",
        &cfg,
        json!({ "data": args.data, "iterations": result.iterations, "termination": result.termination }),
    )?;
    println!(
        "objective {:.10} after {} iterations ({:?}); wrote {}",
        result.objective(),
        result.iterations,
        result.termination,
        args.out.display()
    );
    Ok(())
}

fn crossval(args: CrossvalArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    cfg.penalty = args.penalty.unwrap_or(cfg.penalty);
    if let Some(g) = args.gammas {
        cfg.gammas = g;
    }
    cfg.validate()?;
    let data = io::load_dataset(&args.data)
        .with_context(|| format!("cannot read data {}", args.data.display()))?;
    let model = cfg.model.build()?;
    let grid = cfg.grid()?;
    let penalty = PenaltySpec::for_kind(cfg.penalty, model.as_ref(), grid.clone())?;
    let report = loo_cross_validate(
        model.as_ref(),
        &data,
        grid,
        &penalty,
        &cfg.gammas,
        &cfg.solver,
    )?;
    ensure_parent(&args.out)?;
    io::save_crossval(&args.out, &report)?;
    write_meta(
        &meta_path_for_file(&args.out),
        "crossval",
        &cfg,
        json!({ "data": args.data }),
    )?;
    println!("chosen gamma {}", report.chosen);
    Ok(())
}

fn invariance_check(args: InvarianceArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    cfg.validate()?;
    let transform = match args.transform {
        TransformArg::Identity => TransformKind::Identity,
        TransformArg::Exp => TransformKind::Exp,
    };
    let mut exp = InvarianceConfig {
        seed: args.seed.unwrap_or(cfg.seed),
        m: args.m.unwrap_or(cfg.m),
        j: args.j.unwrap_or(cfg.grid.j),
        gamma: args.gamma.unwrap_or(cfg.gamma),
        transform,
        target_grid: match args.target_grid {
            TargetGridArg::Image => TargetGrid::Image,
            TargetGridArg::Equidistant => TargetGrid::Equidistant,
        },
        solver: cfg.solver,
    };
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut selection = serde_json::Value::Null;
    if args.select_gamma {
        let positive: Vec<f64> = cfg.gammas.iter().copied().filter(|&g| g > 0.0).collect();
        let sel = run_selection_invariance(
            exp.seed,
            exp.m,
            exp.j,
            &positive,
            &Change::Parameter(transform.map()),
            &exp.solver,
        )?;
        let rows: Vec<Vec<f64>> = (0..sel.gammas.len())
            .map(|k| {
                vec![
                    sel.gammas[k],
                    sel.scores_original[k],
                    sel.scores_transformed[k],
                ]
            })
            .collect();
        io::save_table(
            &args.out.join("cv.csv"),
            &["gamma", "loo_score_original", "loo_score_transformed"],
            &rows,
        )?;
        println!(
            "chosen gamma: original {}, transformed {}",
            sel.chosen_original, sel.chosen_transformed
        );
        exp.gamma = sel.chosen_original;
        selection = json!({
            "gammas": sel.gammas,
            "chosen_original": sel.chosen_original,
            "chosen_transformed": sel.chosen_transformed,
        });
    }
    let report = run_invariance_experiment(&exp)?;
    report.write_dir(&args.out)?;
    write_meta(
        &args.out.join("meta.json"),
        "invariance-check",
        &exp,
        json!({ "selection": selection }),
    )?;
    println!(
        "tv_er {:.6e}  tv_l2 {:.6e}  gamma {}",
        report.tv_er, report.tv_l2, report.gamma_used
    );
    Ok(())
}

fn restriction_check(args: RestrictionArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    cfg.validate()?;
    let defaults = RestrictionConfig::default();
    let exp = RestrictionConfig {
        seed: args.seed.unwrap_or(cfg.seed),
        m: args.m.unwrap_or(defaults.m),
        gamma: args.gamma.unwrap_or(defaults.gamma),
        data_below: args.data_below,
        solver: cfg.solver,
        ..defaults
    };
    let report = run_restriction_experiment(&exp)?;
    report.write_dir(&args.out)?;
    write_meta(
        &args.out.join("meta.json"),
        "restriction-check",
        &exp,
        json!({}),
    )?;
    println!(
        "tv {:.4}  mass in [0.8,1]: direct {:.4}, restricted {:.4}",
        report.tv, report.mass_direct, report.mass_restricted
    );
    Ok(())
}

fn two_point_demo(args: TwoPointArgs) -> Result<()> {
    let demo = run_two_point_demo(args.resolution)?;
    ensure_parent(&args.out)?;
    demo.save(&args.out)?;
    write_meta(
        &meta_path_for_file(&args.out),
        "two-point-demo",
        &json!({ "resolution": args.resolution, "gamma": demo.gamma, "means": [2.0, 4.0], "sds": [1.0, 1.0] }),
        json!({}),
    )?;
    println!("wrote {} rows to {}", demo.pi1.len(), args.out.display());
    Ok(())
}

fn jeffreys(args: JeffreysArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    cfg.validate()?;
    let model = cfg.model.build()?;
    let prior = jeffreys_prior(model.as_ref(), cfg.grid()?)?;
    ensure_parent(&args.out)?;
    io::save_density(&args.out, &prior)?;
    write_meta(&meta_path_for_file(&args.out), "jeffreys", &cfg, json!({}))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Crossval(a) => crossval(a),
        Command::InvarianceCheck(a) => invariance_check(a),
        Command::RestrictionCheck(a) => restriction_check(a),
        Command::TwoPointDemo(a) => two_point_demo(a),
        Command::Jeffreys(a) => jeffreys(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
