//! Command-line runner: ground-state solves, evolutions, and the scripted
//! stability/blow-up/identity experiments, all driven by one TOML config.
//!
//! Exit codes: 0 pass/success, 1 fail, 2 inconclusive (tail violation), 3
//! usage or configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Print to stdout, tolerating a closed pipe: the run (and its artifacts)
/// must not die because a pager stopped reading.
macro_rules! emit {
    ($($arg:tt)*) => {
        let _ = writeln!(std::io::stdout(), $($arg)*);
    };
}

use clap::{Args, Parser, Subcommand};
use mnls_core::config::RunConfig;
use mnls_core::dynamics::evolve;
use mnls_core::experiments::{self, ExperimentKind, Verdict};
use mnls_core::groundstate::{minimize, minimize_action_nehari, rescale_to_bound_state};
use mnls_core::model::Regime;
use mnls_core::resample::dilate_mass_preserving;
use mnls_core::snapshot;
use num_complex::Complex64;

#[derive(Parser)]
#[command(
    name = "mnls",
    about = "Ground states, split-step evolution and stability experiments for coupled NLS systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory for artifacts (JSON, CSV, snapshots).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the constrained minimization / bound-state problem.
    Groundstate(CommonArgs),
    /// Integrate the time-dependent system and record a trace.
    Evolve(CommonArgs),
    /// Orbital-stability experiment (plain or per-component).
    Stability(CommonArgs),
    /// Blow-up experiment (supercritical dilation or critical amplitude).
    Blowup(CommonArgs),
    /// Functional-identity suite on computed states and random fields.
    Identities(CommonArgs),
    /// Sharp interpolation constant and random-field quotient check.
    GnCheck(CommonArgs),
    /// Run several experiment configs concurrently.
    Sweep(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap help/version are not usage errors
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    if let Some(core) = e.downcast_ref::<mnls_core::Error>() {
        use mnls_core::Error as E;
        match core {
            E::Config(_)
            | E::Io(_)
            | E::InvalidGrid(_)
            | E::InvalidParams(_)
            | E::InvalidConstraint(_)
            | E::BadExperiment(_)
            | E::WrongRegime { .. } => 3,
            _ => 1,
        }
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        3
    } else {
        1
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Groundstate(args) => cmd_groundstate(&args),
        Command::Evolve(args) => cmd_evolve(&args),
        Command::Stability(args) => {
            cmd_experiment(&args, |k| {
                matches!(
                    k,
                    ExperimentKind::Stability { .. } | ExperimentKind::PerComponentStability { .. }
                )
            })
        }
        Command::Blowup(args) => cmd_experiment(&args, |k| {
            matches!(
                k,
                ExperimentKind::SupercriticalBlowup { .. } | ExperimentKind::CriticalBlowup { .. }
            )
        }),
        Command::Identities(args) => {
            cmd_experiment(&args, |k| matches!(k, ExperimentKind::IdentitySuite { .. }))
        }
        Command::GnCheck(args) => {
            cmd_experiment(&args, |k| matches!(k, ExperimentKind::GnSuite { .. }))
        }
        Command::Sweep(args) => cmd_sweep(&args),
    }
}

fn ensure_out(dir: &Option<PathBuf>) -> anyhow::Result<Option<&Path>> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        Ok(Some(d.as_path()))
    } else {
        Ok(None)
    }
}

fn cmd_groundstate(args: &CommonArgs) -> anyhow::Result<u8> {
    let cfg = RunConfig::from_path(&args.config)?;
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let mut flow = cfg.flow()?;
    if let Some(seed) = args.seed {
        flow.seed = seed;
    }
    let result = if params.regime() == Regime::Subcritical {
        let constraint = cfg.constraint()?;
        minimize(&grid, &constraint, &params, &flow)?
    } else {
        minimize_action_nehari(&grid, &params, &flow)?
    };
    let bound = rescale_to_bound_state(&result, &params)?;

    emit!(
        "converged in {} iterations: E = {:.12e}, S = {:.12e}, residual = {:.3e}",
        result.iterations,
        result.report.energy,
        result.report.action,
        result.max_residual()
    );
    emit!(
        "multipliers: {:?}; bound state: {}",
        result.multipliers, bound.bound_state_candidate
    );
    if let Some(dir) = ensure_out(&args.out)? {
        std::fs::write(
            dir.join("result.json"),
            serde_json::to_string_pretty(&serde_json::json!({
                "minimizer": &result,
                "bound_state": &bound,
            }))?,
        )?;
        std::fs::write(dir.join("convergence.csv"), result.history_csv())?;
        snapshot::write_snapshot(&dir.join("minimizer.mnls"), &result.profile)?;
        if bound.bound_state_candidate {
            snapshot::write_snapshot(&dir.join("boundstate.mnls"), &bound.profile)?;
        }
        emit!("artifacts written to {}", dir.display());
    }
    Ok(if result.converged { 0 } else { 1 })
}

fn cmd_evolve(args: &CommonArgs) -> anyhow::Result<u8> {
    let cfg = RunConfig::from_path(&args.config)?;
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let stepper = cfg.stepper();
    let section = cfg.evolve.clone().unwrap_or_default();

    let base = match section.initial.as_str() {
        "snapshot" => {
            let path = section.snapshot.as_ref().ok_or_else(|| {
                mnls_core::Error::BadExperiment("evolve.initial = \"snapshot\" needs evolve.snapshot".into())
            })?;
            let field = snapshot::read_snapshot(Path::new(path))?;
            params.check_field(&field)?;
            field
        }
        "groundstate" => {
            let mut flow = cfg.flow()?;
            if let Some(seed) = args.seed {
                flow.seed = seed;
            }
            mnls_core::groundstate::ground_state(&grid, &params, &flow)?.profile
        }
        other => {
            return Err(mnls_core::Error::BadExperiment(format!(
                "unknown evolve.initial '{other}'"
            ))
            .into())
        }
    };
    let mut v0 = base;
    if section.dilation != 1.0 {
        v0 = dilate_mass_preserving(&v0, section.dilation)?;
    }
    if section.amplitude != 1.0 {
        v0 = v0.scaled(Complex64::new(section.amplitude, 0.0));
    }

    let out = evolve(&v0, &params, &stepper, None)?;
    let summary = out.trace.summary_json();
    emit!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(dir) = ensure_out(&args.out)? {
        std::fs::write(dir.join("trace.csv"), out.trace.csv())?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        snapshot::write_snapshot(&dir.join("initial.mnls"), &v0)?;
        snapshot::write_snapshot(&dir.join("final.mnls"), &out.final_state)?;
        emit!("artifacts written to {}", dir.display());
    }
    Ok(0)
}

fn cmd_experiment(
    args: &CommonArgs,
    accepts: impl Fn(&ExperimentKind) -> bool,
) -> anyhow::Result<u8> {
    let cfg = RunConfig::from_path(&args.config)?;
    let spec = cfg.experiment(args.seed)?;
    if !accepts(&spec.kind) {
        return Err(mnls_core::Error::BadExperiment(format!(
            "experiment kind '{}' does not belong to this subcommand",
            spec.kind.name()
        ))
        .into());
    }
    let out_dir = ensure_out(&args.out)?;
    let outcome = experiments::run(&spec, out_dir)?;
    emit!(
        "{}: {} {}",
        outcome.kind,
        outcome.verdict,
        serde_json::to_string(&outcome.measurements)?
    );
    Ok(outcome.verdict.exit_code() as u8)
}

#[derive(serde::Deserialize)]
struct SweepConfig {
    jobs: Vec<SweepJob>,
}

#[derive(serde::Deserialize)]
struct SweepJob {
    name: String,
    config: String,
}

fn cmd_sweep(args: &CommonArgs) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(&args.config)?;
    let sweep: SweepConfig = toml::from_str(&text).map_err(mnls_core::Error::Config)?;
    if sweep.jobs.is_empty() {
        return Err(mnls_core::Error::BadExperiment("sweep has no jobs".into()).into());
    }
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut jobs = Vec::new();
    for job in &sweep.jobs {
        let path = base.join(&job.config);
        let cfg = RunConfig::from_path(&path)?;
        jobs.push((job.name.clone(), cfg.experiment(args.seed)?));
    }
    let out_root = ensure_out(&args.out)?;
    let results = experiments::run_sweep(&jobs, out_root);
    let mut worst = 0u8;
    for (name, result) in results {
        match result {
            Ok(outcome) => {
                emit!("{name}: {} ({})", outcome.verdict, outcome.kind);
                worst = worst.max(match outcome.verdict {
                    Verdict::Pass => 0,
                    Verdict::Inconclusive => 2,
                    Verdict::Fail => 1,
                });
            }
            Err(e) => {
                emit!("{name}: error: {e}");
                worst = worst.max(1);
            }
        }
    }
    // fail dominates inconclusive in the aggregate
    Ok(if worst == 1 { 1 } else { worst })
}
