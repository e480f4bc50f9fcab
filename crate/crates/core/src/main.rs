//! Command-line driver: `pv check|solve|classify` and `hv desingularize|continue|diagnose|export`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use vortexforge::cli_io::{
    boundary_csv, branch_csv, load_state, pv_input, pv_report, pv_solve, resume_continue, run_continue,
    run_desingularize, run_diagnose, write_json, BranchFile, RunConfig, ScenarioRef,
};
use vortexforge::diagnostics::DiagnosticsOptions;
use vortexforge::VortexError;

#[derive(Parser)]
#[command(name = "vortexforge", version, about = "Point vortices, hollow-vortex desingularization and branch continuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady point-vortex configurations.
    #[command(subcommand)]
    Pv(PvCommand),
    /// Hollow-vortex solves, branches and exports.
    #[command(subcommand)]
    Hv(HvCommand),
}

#[derive(Args)]
struct PvSource {
    /// Built-in configuration: rotating-pair, translating-pair, tripole.
    #[arg(long, conflicts_with = "config")]
    builtin: Option<String>,
    /// JSON file with a configuration, optionally `{"config": ..., "varying": [...]}`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Varying coordinates, e.g. `re_zeta1,re_zeta2,im_zeta2`.
    #[arg(long, value_delimiter = ',')]
    split: Vec<String>,
}

#[derive(Subcommand)]
enum PvCommand {
    /// Residuals and identities; exit 0 iff steady and nondegenerate.
    Check(PvSource),
    /// Newton solve for a nearby steady configuration.
    Solve {
        #[command(flatten)]
        source: PvSource,
        /// Write the solution here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kind, codimension and Jacobian rank.
    Classify(PvSource),
}

#[derive(Args)]
struct RunSource {
    /// Built-in scenario: rotating-pair, translating-pair, tripole.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Run configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Truncation order (overrides the configuration).
    #[arg(long)]
    n: Option<usize>,
}

impl RunSource {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match (&self.scenario, &self.config) {
            (Some(name), None) => RunConfig::for_scenario(ScenarioRef::Named(name.clone())),
            (None, Some(path)) => RunConfig::load(path)?,
            _ => bail!(VortexError::Input("give exactly one of --scenario or --config".into())),
        };
        if let Some(n) = self.n {
            cfg.n = n;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum HvCommand {
    /// Leading guess plus Newton at one radius; writes a single branch point.
    Desingularize {
        #[command(flatten)]
        source: RunSource,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continuation in the radius, streamed to a JSON-lines branch file.
    Continue {
        #[command(flatten)]
        source: RunSource,
        /// Branch file to write (or to resume with --resume).
        #[arg(long)]
        out: PathBuf,
        /// Continue an existing branch file.
        #[arg(long)]
        resume: bool,
        /// Attempt budget (overrides the configuration).
        #[arg(long)]
        max_steps: Option<usize>,
        /// Upper end of the radius range.
        #[arg(long)]
        rho_max: Option<f64>,
    },
    /// Diagnostics of a state, branch point or the last point of a branch file.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        /// Include the excess angular momentum and the momentum identity.
        #[arg(long)]
        full: bool,
    },
    /// Boundary curves to CSV; optionally branch scalars to a second CSV.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Branch-scalar CSV (requires a branch file as input).
        #[arg(long)]
        branch: Option<PathBuf>,
    },
}

fn pv(cmd: PvCommand) -> anyhow::Result<ExitCode> {
    match cmd {
        PvCommand::Check(src) | PvCommand::Classify(src) => {
            let (cfg, split) = pv_input(src.builtin.as_deref(), src.config.as_deref(), Some(&src.split))?;
            let report = pv_report(&cfg, &split)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            let ok = report.steady && report.class.as_ref().is_some_and(|c| c.nondegenerate);
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(4) })
        }
        PvCommand::Solve { source, out } => {
            let (cfg, split) = pv_input(source.builtin.as_deref(), source.config.as_deref(), Some(&source.split))?;
            let sol = pv_solve(&cfg, &split)?;
            match out {
                Some(path) => write_json(&path, &sol)?,
                None => println!("{}", serde_json::to_string_pretty(&sol)?),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn hv(cmd: HvCommand) -> anyhow::Result<ExitCode> {
    match cmd {
        HvCommand::Desingularize { source, rho, out } => {
            let cfg = source.load()?;
            let point = run_desingularize(&cfg, rho)?;
            write_json(&out, &point)?;
            eprintln!(
                "converged in {} iterations, residual {:e}, lambda {:?}",
                point.newton_iterations, point.diagnostics.residual_sup, point.state.lambda
            );
            Ok(ExitCode::SUCCESS)
        }
        HvCommand::Continue { source, out, resume, max_steps, rho_max } => {
            let summary = if resume {
                if rho_max.is_some() {
                    bail!(VortexError::Input("--rho-max cannot change on resume".into()));
                }
                resume_continue(&out, max_steps)?
            } else {
                let mut cfg = source.load()?;
                if let Some(m) = max_steps {
                    cfg.max_steps = m;
                }
                if let Some(r) = rho_max {
                    cfg.rho_max = r;
                }
                run_continue(&cfg, &out)?
            };
            eprintln!(
                "{} points, terminated: {:?} ({})",
                summary.points, summary.termination.reason, summary.termination.note
            );
            Ok(ExitCode::SUCCESS)
        }
        HvCommand::Diagnose { input, full } => {
            let state = load_state(&input)?;
            let opts = if full { DiagnosticsOptions::full() } else { DiagnosticsOptions::default() };
            let report = run_diagnose(&state, opts)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        HvCommand::Export { input, out, branch } => {
            let state = load_state(&input)?;
            std::fs::write(&out, boundary_csv(&state)?).with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = branch {
                let file = BranchFile::read(&input)?;
                std::fs::write(&path, branch_csv(&file.points))?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<VortexError>() {
        Some(e) => e.exit_code() as u8,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None if err.downcast_ref::<serde_json::Error>().is_some() => 2,
        None => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pv(cmd) => pv(cmd),
        Command::Hv(cmd) => hv(cmd),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
