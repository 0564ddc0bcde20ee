//! `spme <subcommand> --config path [--out dir] [--seed n]`

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_config, RunConfig};
use crate::constitutive::validate_law;
use crate::error::{Error, Result};
use crate::experiments::{accretivity_threshold_scan, bound_table, eps_convergence, gravity_compare, lambda_sweep};
use crate::io::{create_run_dir, Manifest, RunWriter};
use crate::porous_operator::{accretivity_probe, lipschitz_probe, mu_accretive_min};
use crate::robin_laplace::eigen_growth_study;
use crate::sde_solver::simulate;

#[derive(Debug, Parser)]
#[command(name = "spme", version, about = "Stochastic porous-media flow with gravity: simulations and studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured simulation and write snapshots and energies.
    Simulate(RunArgs),
    /// Robin-Laplace eigenpairs and the multiplier growth table.
    Eigen(RunArgs),
    /// Pairwise distances along the ε ladder and the integrated drift.
    ConvergeEps(RunArgs),
    /// Pairwise distances along the λ ladder and the budget terms.
    ConvergeLambda(RunArgs),
    /// Compare the configuration across K values (centre of mass in depth).
    GravityDemo(RunArgs),
    /// Sample the structural inequalities of the configured law.
    ValidateLaw(RunArgs),
    /// Accretivity probe on random pairs plus a threshold scan in μ.
    ProbeAccretivity(RunArgs),
    /// Empirical Lipschitz ratios of the resolvent.
    ProbeLipschitz(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Parent directory for the run directory (default: config `output`, else `runs`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Eigen(_) => "eigen",
            Command::ConvergeEps(_) => "converge-eps",
            Command::ConvergeLambda(_) => "converge-lambda",
            Command::GravityDemo(_) => "gravity-demo",
            Command::ValidateLaw(_) => "validate-law",
            Command::ProbeAccretivity(_) => "probe-accretivity",
            Command::ProbeLipschitz(_) => "probe-lipschitz",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Eigen(a)
            | Command::ConvergeEps(a)
            | Command::ConvergeLambda(a)
            | Command::GravityDemo(a)
            | Command::ValidateLaw(a)
            | Command::ProbeAccretivity(a)
            | Command::ProbeLipschitz(a) => a,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    status: &'a str,
    command: &'a str,
    kind: &'a str,
    message: String,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Parse { .. } => "parse",
        Error::Config(_) | Error::Assumption(_) => "config",
        Error::Io(_) => "io",
        Error::Step { .. } => "step",
        Error::Stability(_) => "stability",
        Error::HilbertSchmidt(_) => "noise",
        _ => "solver",
    }
}

/// Exit status: 0 on success, 1 on error, 2 when a check failed.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok((dir, manifest)) => {
            println!("{}", dir.display());
            if manifest.passed {
                0
            } else {
                for a in manifest.assertions.iter().filter(|a| !a.passed) {
                    eprintln!("assertion failed: {}: {}", a.name, a.detail);
                }
                2
            }
        }
        Err(e) => {
            let rec = ErrorRecord { status: "error", command: cli.command.name(), kind: error_kind(&e), message: e.to_string() };
            eprintln!("{}", serde_json::to_string(&rec).unwrap_or_else(|_| e.to_string()));
            1
        }
    }
}

pub fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.noise.seed = seed;
    }
    Ok(cfg)
}

/// Runs one subcommand and returns its directory and manifest.
pub fn run(cmd: &Command) -> Result<(PathBuf, Manifest)> {
    let args = cmd.args();
    let cfg = load_config(args)?;
    let base = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    execute(cmd.name(), &cfg, &base)
}

/// Runs the named experiment on a parsed configuration under `base`.
pub fn execute(name: &str, cfg: &RunConfig, base: &Path) -> Result<(PathBuf, Manifest)> {
    let op = cfg.robin()?;
    let grid_hash = op.domain().grid_hash();
    let (dir, created) = create_run_dir(base, name, cfg.noise.seed)?;
    let mut w = RunWriter::new(dir.clone());
    let finished = fill(name, cfg, &op, &mut w).and_then(|()| w.finish(name, created, cfg, grid_hash));
    match finished {
        Ok(manifest) => Ok((dir, manifest)),
        Err(e) => {
            // a run directory always carries a manifest, so drop partial output
            let _ = std::fs::remove_dir_all(&dir);
            Err(e)
        }
    }
}

fn fill(name: &str, cfg: &RunConfig, op: &std::sync::Arc<crate::robin_laplace::RobinOperator>, w: &mut RunWriter) -> Result<()> {
    let ex = &cfg.experiment;
    let seed = cfg.noise.seed;
    match name {
        "simulate" => {
            let sim = cfg.sim_config_with(op.clone(), cfg.basis(op, 0)?)?;
            let out = simulate(&sim)?;
            for tr in &out.trajectories {
                w.csv(&format!("trajectory-{:04}.csv", tr.replica), &tr.to_csv())?;
            }
            w.csv("energy.csv", &out.energy.to_csv())?;
            let finite = out.trajectories.iter().all(|t| t.snapshots.iter().all(|s| s.is_finite()));
            w.assert("finite snapshots", finite, format!("{} replicas, {} steps", sim.replicas, sim.steps));
        }
        "eigen" => {
            let basis = cfg.basis(op, ex.eigen_count)?;
            let mut csv = String::from("j,lambda_j,residual\n");
            for j in 1..=basis.len() {
                csv.push_str(&format!("{j},{:e},{:e}\n", basis.eigenvalue(j), basis.residuals()[j - 1]));
            }
            w.csv("eigen.csv", &csv)?;
            let x = cfg.initial(&basis)?;
            let growth = eigen_growth_study(op, &basis, &x)?;
            w.csv("growth.csv", &growth.to_csv())?;
            w.note(format!("lambda_1 = {:.6}", basis.eigenvalue(1)));
            w.note(format!("sup|e_j| growth exponent = {:.3}", growth.sup_growth_exponent));
        }
        "converge-eps" => {
            let sim = cfg.sim_config_with(op.clone(), cfg.basis(op, 0)?)?;
            let r = eps_convergence(&sim, &ex.eps_ladder)?;
            let table = bound_table(&r.ladder, r.bound_a.clone(), ex.bound_factor);
            w.csv("convergence.csv", &r.to_csv())?;
            w.csv("bound_a.csv", &table.to_csv())?;
            w.note(format!("{} replicas, {} steps per rung; sup over t taken at T and {} interior checkpoints (a lower bound)", r.replicas, r.steps, sim.checkpoints.max(crate::experiments::SUP_CHECKPOINTS)));
            w.assert("slope", r.slope >= ex.slope_min, format!("{:.4} (min {})", r.slope, ex.slope_min));
            w.assert("trend", r.trend_significant, format!("drop {:e} +- {:e}", r.trend.mean, r.trend.stderr));
            w.assert("bound (A)", table.passed, format!("max/min = {:.4} (factor {})", table.ratio, ex.bound_factor));
        }
        "converge-lambda" => {
            let sim = cfg.sim_config_with(op.clone(), cfg.basis(op, 0)?)?;
            let r = lambda_sweep(&sim, &ex.lambda_ladder)?;
            w.csv("convergence.csv", &r.to_csv())?;
            w.csv("budget.csv", &r.budget_csv())?;
            w.note(format!("slope = {:.4}", r.slope));
            w.assert("trend", r.trend_significant, format!("drop {:e} +- {:e}", r.trend.mean, r.trend.stderr));
        }
        "gravity-demo" => {
            let sim = cfg.sim_config_with(op.clone(), cfg.basis(op, 0)?)?;
            let out = gravity_compare(&sim, &ex.k_values)?;
            for (i, tr) in out.trajectories.iter().enumerate() {
                w.csv(&format!("trajectory-k{i}.csv"), &tr.to_csv())?;
            }
            w.csv("gravity.csv", &out.report.to_csv())?;
            let d = out.report.difference;
            w.note(format!("K values {:?}", ex.k_values));
            w.assert(
                "deeper with gravity",
                d.mean > 0.0 && out.report.significant,
                format!("zbar difference {:e} +- {:e}", d.mean, d.stderr),
            );
        }
        "validate-law" => {
            let report = validate_law(&cfg.law()?, ex.law_samples, ex.law_range)?;
            w.csv("validation.csv", &report.to_csv())?;
            for f in report.failures() {
                w.note(format!("{} violated, worst margin {:e}", f.inequality.as_str(), f.worst_margin));
            }
            w.assert("law inequalities", report.passed(), format!("{} samples on [-{}, {}]", ex.law_samples, ex.law_range, ex.law_range));
        }
        "probe-accretivity" => {
            let basis = cfg.basis(op, ex.eigen_count)?;
            let ocfg = cfg.operator(op.clone())?;
            let report = accretivity_probe(&ocfg, &basis, ex.trials, seed)?;
            w.csv("accretivity.csv", &report.to_csv())?;
            for n in &report.notes {
                w.note(n.clone());
            }
            w.assert("min Q", report.min_lhs >= -1e-12, format!("{:e}", report.min_lhs));
            if ocfg.k != 0.0 {
                let th = mu_accretive_min(ocfg.k, ocfg.law.constants.c0);
                let grid = ex.mu_grid.clone().unwrap_or_else(|| vec![0.0, th / 4.0, th / 2.0, th, 2.0 * th]);
                let scan = accretivity_threshold_scan(&ocfg, &basis, &grid, ex.trials.min(200), seed)?;
                w.csv("threshold.csv", &scan.to_csv())?;
                w.note(format!(
                    "empirical threshold {:e}, K^2/(4 C0) = {:e}",
                    scan.empirical_threshold, scan.theoretical_threshold
                ));
            }
        }
        "probe-lipschitz" => {
            let basis = cfg.basis(op, ex.eigen_count)?;
            let ocfg = cfg.operator(op.clone())?;
            let report = lipschitz_probe(&ocfg, &basis, ex.trials, seed)?;
            w.csv("lipschitz.csv", &report.to_csv())?;
            for n in &report.notes {
                w.note(n.clone());
            }
            w.assert("L2 ratio <= L", report.min_margin >= 0.0, format!("max ratio {:e}", report.max_lhs));
            let v = report.max_aux.unwrap_or(0.0);
            w.assert("V' ratio <= 1", v <= 1.0 + 1e-9, format!("max {v:e}"));
        }
        other => return Err(Error::Config(format!("unknown subcommand '{other}'"))),
    }
    Ok(())
}
