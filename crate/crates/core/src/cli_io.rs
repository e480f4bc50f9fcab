//! Run configuration, branch persistence and exports behind the command-line driver.
//!
//! A branch file is JSON lines: a header record with the run configuration
//! and code version, one record per accepted point, and a final termination
//! record. Floats are written in shortest round-trip form, so parsing a record
//! reproduces every value bit for bit. Resume reads the accepted points, drops
//! a trailing partial line and any termination record, and restarts the driver
//! from the step-control state stored with the last point.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::desingularize::{
    leading_guess, newton_solve_report, BranchPoint, Continuation, DriverState, NewtonSettings, Scenario, StepControl,
    TerminationReason, Thresholds,
};
use crate::diagnostics::{diagnose_fields, DiagnosticsOptions, DiagnosticsReport};
use crate::hollowvortex::{FlowFields, HollowState};
use crate::pointvortex::{
    builtin, check_pv_identities, classify_nondegeneracy, eval_pv_residual, solve_steady_pv, ParameterSplit,
    SteadyClass, VortexConfiguration,
};
use crate::{Result, VortexError, C64};

/// Code version written into branch-file headers.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A scenario given by name, as a general configuration with a split, or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    General { base: VortexConfiguration, varying: Vec<String> },
    Inline(Scenario),
}

impl ScenarioRef {
    pub fn resolve(&self) -> Result<Scenario> {
        match self {
            ScenarioRef::Named(name) => {
                Scenario::by_name(name).ok_or_else(|| VortexError::Input(format!("unknown scenario '{name}'")))
            }
            ScenarioRef::General { base, varying } => {
                let names: Vec<&str> = varying.iter().map(String::as_str).collect();
                let split = ParameterSplit::from_names(base.m(), &names)?;
                Scenario::general(base.clone(), split)
            }
            ScenarioRef::Inline(s) => Ok(s.clone()),
        }
    }
}

fn default_initial_step() -> f64 {
    StepControl::default().initial_step
}
fn default_min_step() -> f64 {
    StepControl::default().min_step
}
fn default_max_steps() -> usize {
    StepControl::default().max_steps
}
fn default_n_max() -> usize {
    StepControl::default().n_max
}
fn default_palc_condition() -> f64 {
    StepControl::default().palc_condition
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioRef,
    #[serde(rename = "N")]
    pub n: usize,
    pub rho_start: f64,
    pub rho_max: f64,
    #[serde(default = "default_initial_step")]
    pub initial_step: f64,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_palc_condition")]
    pub palc_condition: f64,
    #[serde(default)]
    pub newton: NewtonSettings,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Defaults for a scenario: `N = 64`, `ρ` from 0.02 to 0.9.
    pub fn for_scenario(scenario: ScenarioRef) -> Self {
        let c = StepControl::default();
        Self {
            scenario,
            n: 64,
            rho_start: c.rho_start,
            rho_max: c.rho_max,
            initial_step: c.initial_step,
            min_step: c.min_step,
            max_steps: c.max_steps,
            n_max: c.n_max,
            palc_condition: c.palc_condition,
            newton: NewtonSettings::default(),
            thresholds: Thresholds::default(),
            output_dir: PathBuf::from("."),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_start < self.rho_max) {
            return Err(VortexError::Input("rho_start must be below rho_max".into()));
        }
        if self.n < 16 {
            return Err(VortexError::Input("N must be at least 16".into()));
        }
        if self.n_max < self.n {
            return Err(VortexError::Input("n_max must be at least N".into()));
        }
        let positive = [
            self.initial_step,
            self.min_step,
            self.palc_condition,
            self.newton.residual_tol,
            self.newton.fd_step,
            self.thresholds.conf_factor,
            self.thresholds.vel_factor,
            self.thresholds.lambda_max,
            self.thresholds.angular_momentum_max,
            self.thresholds.min_fz,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.newton.max_iter == 0 {
            return Err(VortexError::Input("tolerances, steps and thresholds must be positive".into()));
        }
        Ok(())
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            rho_start: self.rho_start,
            rho_max: self.rho_max,
            initial_step: self.initial_step,
            min_step: self.min_step,
            max_steps: self.max_steps,
            n_max: self.n_max,
            palc_condition: self.palc_condition,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// First line of a branch file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchHeader {
    pub config: RunConfig,
    pub version: String,
}

/// Final line of a branch file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub reason: TerminationReason,
    pub note: String,
    pub points: usize,
}

/// One line of a branch file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchRecord {
    Header(Box<BranchHeader>),
    Point(Box<BranchPoint>),
    Termination(Termination),
}

/// Parsed contents of a branch file.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchFile {
    pub header: BranchHeader,
    pub points: Vec<BranchPoint>,
    pub termination: Option<Termination>,
    /// A trailing line that did not parse (an interrupted write).
    pub truncated_tail: bool,
}

impl BranchFile {
    /// Reads a branch file; a malformed line other than the last is an input error.
    pub fn read(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        let mut header = None;
        let mut points: Vec<BranchPoint> = Vec::new();
        let mut termination = None;
        let mut truncated_tail = false;
        let last = lines.len().saturating_sub(1);
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: BranchRecord = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(_) if i == last && i > 0 => {
                    truncated_tail = true;
                    continue;
                }
                Err(e) => return Err(VortexError::Input(format!("line {}: {e}", i + 1))),
            };
            match (rec, i) {
                (BranchRecord::Header(h), 0) => header = Some(*h),
                (BranchRecord::Header(_), _) => return Err(VortexError::Input("header after the first line".into())),
                (_, 0) => return Err(VortexError::Input("branch file lacks a header".into())),
                (BranchRecord::Point(p), _) => {
                    if termination.is_some() {
                        return Err(VortexError::Input("point after the termination record".into()));
                    }
                    if let Some(prev) = points.last() {
                        if p.arclength < prev.arclength {
                            return Err(VortexError::Input("arclength is not monotone".into()));
                        }
                    }
                    points.push(*p);
                }
                (BranchRecord::Termination(t), _) => termination = Some(t),
            }
        }
        let header = header.ok_or_else(|| VortexError::Input("empty branch file".into()))?;
        Ok(Self { header, points, termination, truncated_tail })
    }
}

/// Append-only writer for branch records.
pub struct BranchWriter {
    out: BufWriter<File>,
}

impl BranchWriter {
    /// Creates a file and writes the header.
    pub fn create(path: &Path, header: &BranchHeader) -> Result<Self> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut w = Self { out: BufWriter::new(File::create(path)?) };
        w.write(&BranchRecord::Header(Box::new(header.clone())))?;
        Ok(w)
    }

    /// Rewrites a file with the header and the given points, for resuming.
    pub fn rewrite(path: &Path, header: &BranchHeader, points: &[BranchPoint]) -> Result<Self> {
        let tmp = path.with_extension("resume.tmp");
        {
            let mut w = Self::create(&tmp, header)?;
            for p in points {
                w.write(&BranchRecord::Point(Box::new(p.clone())))?;
            }
        }
        std::fs::rename(&tmp, path)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { out: BufWriter::new(file) })
    }

    /// Writes one record and flushes, so a crash loses at most the line being written.
    pub fn write(&mut self, rec: &BranchRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Outcome of a `continue` command.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinueSummary {
    pub points: usize,
    pub termination: Termination,
    pub path: PathBuf,
}

fn continuation<'a>(cfg: &RunConfig, scenario: &'a Scenario) -> Continuation<'a> {
    Continuation {
        scenario,
        control: cfg.step_control(),
        newton: cfg.newton,
        thresholds: cfg.thresholds.clone(),
    }
}

/// Runs a branch from its start point and streams it to `path`.
pub fn run_continue(cfg: &RunConfig, path: &Path) -> Result<ContinueSummary> {
    cfg.validate()?;
    let scenario = cfg.scenario.resolve()?;
    let header = BranchHeader { config: cfg.clone(), version: CODE_VERSION.to_string() };
    let mut w = BranchWriter::create(path, &header)?;
    let cont = continuation(cfg, &scenario);
    let run = cont.run(cfg.n, |p| w.write(&BranchRecord::Point(Box::new(p.clone()))))?;
    let termination = Termination { reason: run.termination, note: run.note, points: run.points.len() };
    w.write(&BranchRecord::Termination(termination.clone()))?;
    Ok(ContinueSummary { points: run.points.len(), termination, path: path.to_path_buf() })
}

/// Resumes a branch file; `max_steps` optionally raises the attempt budget.
pub fn resume_continue(path: &Path, max_steps: Option<usize>) -> Result<ContinueSummary> {
    let file = BranchFile::read(path)?;
    let mut cfg = file.header.config.clone();
    if let Some(m) = max_steps {
        cfg.max_steps = m;
    }
    cfg.validate()?;
    if file.points.is_empty() {
        return run_continue(&cfg, path);
    }
    let scenario = cfg.scenario.resolve()?;
    let header = BranchHeader { config: cfg.clone(), version: CODE_VERSION.to_string() };
    let mut w = BranchWriter::rewrite(path, &header, &file.points)?;
    let cont = continuation(&cfg, &scenario);
    let run = cont.run_from(file.points, |p| w.write(&BranchRecord::Point(Box::new(p.clone()))))?;
    let termination = Termination { reason: run.termination, note: run.note, points: run.points.len() };
    w.write(&BranchRecord::Termination(termination.clone()))?;
    Ok(ContinueSummary { points: run.points.len(), termination, path: path.to_path_buf() })
}

/// Solves at one `ρ` from the leading guess; the point is returned only when all gates pass.
pub fn run_desingularize(cfg: &RunConfig, rho: f64) -> Result<BranchPoint> {
    cfg.validate()?;
    let scenario = cfg.scenario.resolve()?;
    let guess = leading_guess(&scenario, rho, cfg.n)?;
    let rep = newton_solve_report(&guess, &scenario, &cfg.newton)?;
    let fields = FlowFields::new(&rep.state)?;
    let diagnostics = diagnose_fields(&fields, DiagnosticsOptions::default())?;
    let gates = crate::desingularize::gate_failures(&diagnostics, &cfg.thresholds, cfg.newton.residual_tol);
    if !gates.is_empty() {
        return Err(VortexError::Domain(format!("converged state fails gates: {}", gates.join(", "))));
    }
    Ok(BranchPoint {
        state: rep.state,
        diagnostics,
        arclength: 0.0,
        accepted: true,
        newton_iterations: rep.iterations,
        driver: DriverState {
            step: cfg.initial_step,
            successes: 0,
            attempts: 0,
            n: cfg.n,
            palc: false,
        },
    })
}

/// Full diagnostics of a state.
pub fn run_diagnose(u: &HollowState, opts: DiagnosticsOptions) -> Result<DiagnosticsReport> {
    let fields = FlowFields::new(u)?;
    diagnose_fields(&fields, opts)
}

/// Reads a state from a JSON file holding either a state or a branch point.
pub fn load_state(path: &Path) -> Result<HollowState> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum StateOrPoint {
        Point(Box<BranchPoint>),
        Record(BranchRecord),
        State(HollowState),
    }
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or("");
    // A branch file: take its last point.
    if let Ok(BranchRecord::Header(_)) = serde_json::from_str::<BranchRecord>(first) {
        let file = BranchFile::read(path)?;
        return file
            .points
            .last()
            .map(|p| p.state.clone())
            .ok_or_else(|| VortexError::Input("branch file holds no points".into()));
    }
    match serde_json::from_str::<StateOrPoint>(&text)? {
        StateOrPoint::Point(p) => Ok(p.state),
        StateOrPoint::Record(BranchRecord::Point(p)) => Ok(p.state),
        StateOrPoint::Record(_) => Err(VortexError::Input("record holds no state".into())),
        StateOrPoint::State(s) => Ok(s),
    }
}

/// Writes a JSON value with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// One row of a boundary export.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryRow {
    pub vortex_index: usize,
    pub theta: f64,
    pub z: C64,
    pub speed: f64,
}

/// Physical boundary points `f(ζ_k + ρe^{iθ})` and speeds `|U|` at the quadrature nodes.
pub fn boundary_rows(u: &HollowState) -> Result<Vec<BoundaryRow>> {
    let fields = FlowFields::new(u)?;
    let nq = fields.nq;
    let mut rows = Vec::with_capacity(u.m() * nq);
    for k in 0..u.m() {
        let z = fields.boundary_f(k);
        let speed = fields.boundary_u(k)?;
        for l in 0..nq {
            rows.push(BoundaryRow {
                vortex_index: k,
                theta: 2.0 * std::f64::consts::PI * l as f64 / nq as f64,
                z: z[l],
                speed: speed[l].norm(),
            });
        }
    }
    Ok(rows)
}

/// Boundary CSV with columns `vortex_index,theta,re_z,im_z,speed`.
pub fn boundary_csv(u: &HollowState) -> Result<String> {
    let mut s = String::from("vortex_index,theta,re_z,im_z,speed\n");
    for r in boundary_rows(u)? {
        s.push_str(&format!("{},{:?},{:?},{:?},{:?}\n", r.vortex_index, r.theta, r.z.re, r.z.im, r.speed));
    }
    Ok(s)
}

/// Branch scalars against `ρ`, one row per accepted point.
pub fn branch_csv(points: &[BranchPoint]) -> String {
    let mut s = String::from("rho,arclength,lambda,n_conf,n_vel,non_circularity,vacuum_area,moment_inertia,excess_L,residual_sup\n");
    for p in points {
        let d = &p.diagnostics;
        let lam = p.state.lambda.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";");
        let l = d.excess_l.map(|v| format!("{v:?}")).unwrap_or_default();
        s.push_str(&format!(
            "{:?},{:?},{},{:?},{:?},{:?},{:?},{:?},{},{:?}\n",
            p.state.rho, p.arclength, lam, d.n_conf, d.n_vel, d.non_circularity, d.vacuum_area, d.moment_inertia, l, d.residual_sup
        ));
    }
    s
}

/// Report of a point-vortex check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvReport {
    pub residual: f64,
    pub steady: bool,
    pub translation_identity: f64,
    pub rotation_identity: f64,
    pub class: Option<SteadyClass>,
}

/// Threshold on `max|V_k|/scale` for calling a configuration steady.
pub const STEADY_TOL: f64 = 1e-12;

/// Residual, identities and classification of a configuration.
pub fn pv_report(cfg: &VortexConfiguration, split: &ParameterSplit) -> Result<PvReport> {
    cfg.validate()?;
    let v = eval_pv_residual(cfg)?;
    let residual = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (t, r) = check_pv_identities(cfg)?;
    let steady = residual <= STEADY_TOL * cfg.velocity_scale();
    let class = if steady { Some(classify_nondegeneracy(cfg, split)?) } else { None };
    Ok(PvReport { residual, steady, translation_identity: t.norm(), rotation_identity: r.norm(), class })
}

/// Input of `pv` commands: a configuration with an optional split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PvInput {
    WithSplit { config: VortexConfiguration, varying: Vec<String> },
    Bare(VortexConfiguration),
}

/// Resolves a built-in name or a JSON file into a configuration and split.
pub fn pv_input(builtin_name: Option<&str>, path: Option<&Path>, varying: Option<&[String]>) -> Result<(VortexConfiguration, ParameterSplit)> {
    let (cfg, split) = match (builtin_name, path) {
        (Some(name), None) => {
            builtin::by_name(name).ok_or_else(|| VortexError::Input(format!("unknown built-in '{name}'")))?
        }
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p)?;
            match serde_json::from_str::<PvInput>(&text)? {
                PvInput::WithSplit { config, varying } => {
                    let names: Vec<&str> = varying.iter().map(String::as_str).collect();
                    let split = ParameterSplit::from_names(config.m(), &names)?;
                    (config, split)
                }
                PvInput::Bare(config) => {
                    let split = ParameterSplit { varying: vec![] };
                    (config, split)
                }
            }
        }
        _ => return Err(VortexError::Input("give exactly one of a built-in name or a config file".into())),
    };
    let split = match varying {
        Some(v) if !v.is_empty() => {
            let names: Vec<&str> = v.iter().map(String::as_str).collect();
            ParameterSplit::from_names(cfg.m(), &names)?
        }
        _ => split,
    };
    if split.varying.is_empty() {
        return Err(VortexError::Input("a parameter split is required (use --split)".into()));
    }
    cfg.validate()?;
    Ok((cfg, split))
}

/// Solves for a steady configuration near the input.
pub fn pv_solve(cfg: &VortexConfiguration, split: &ParameterSplit) -> Result<VortexConfiguration> {
    Ok(solve_steady_pv(cfg, split)?.cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_point_round_trip_is_bit_exact() {
        let cfg = RunConfig::for_scenario(ScenarioRef::Named("rotating-pair".into()));
        let p = run_desingularize(&cfg, 0.05).unwrap();
        let text = serde_json::to_string(&BranchRecord::Point(Box::new(p.clone()))).unwrap();
        let back: BranchRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, BranchRecord::Point(Box::new(p)));
    }

    #[test]
    fn run_config_validation() {
        let mut cfg = RunConfig::for_scenario(ScenarioRef::Named("tripole".into()));
        cfg.validate().unwrap();
        cfg.n = 8;
        assert!(matches!(cfg.validate(), Err(VortexError::Input(_))));
        let text = r#"{"scenario":"translating-pair","N":32,"rho_start":0.02,"rho_max":0.1}"#;
        let parsed: RunConfig = serde_json::from_str(text).unwrap();
        parsed.validate().unwrap();
        assert_eq!(parsed.newton, NewtonSettings::default());
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.jsonl");
        let cfg = RunConfig::for_scenario(ScenarioRef::Named("rotating-pair".into()));
        let header = BranchHeader { config: cfg, version: CODE_VERSION.into() };
        BranchWriter::create(&path, &header).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"point\":{\"sta").unwrap();
        let file = BranchFile::read(&path).unwrap();
        assert!(file.truncated_tail);
        assert!(file.points.is_empty());
    }
}
