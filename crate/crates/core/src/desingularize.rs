//! Leading-order guesses, reduced Newton solves and continuation in `ρ`.
//!
//! A [`Scenario`] fixes which densities are unknown and how the others follow
//! by symmetry. Free vortices carry `μ_k`, `ν_k` restricted to symmetry
//! classes and `Q_k`; image vortices copy a free vortex through
//! `φ ↦ s·φ*(±·)`. Equations are the Fourier coefficients of `𝓐_k` (modes
//! `1..N`) and `𝓑_k` (modes `0..N+1`) of the free vortices, projected on
//! codomain classes. The general scenario has no symmetry; it adds slack
//! variables `z` entering as `V_k ↦ V_k − e·z`, which vanish at solutions.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose_fields, DiagnosticsOptions, DiagnosticsReport, LMethod};
use crate::hollowvortex::{residual_from_fields, residual_series, FlowFields, HollowState};
use crate::pointvortex::{
    builtin, classify_nondegeneracy, eval_pv_residual, select_slack, ParameterSplit, SteadyKind, VortexConfiguration,
};
use crate::spectral::{symmetry_defect, DensityVector, SpectralDensity, SymmetryClass, TraceOperator};
use crate::{Result, VortexError, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Named scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    RotatingPair,
    StationaryTripole,
    TranslatingPair,
    General,
}

/// How the densities of one vortex are determined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum VortexRole {
    /// Unknown densities in the given classes; equations projected on the codomain classes.
    Free { mu: SymmetryClass, nu: SymmetryClass, a: SymmetryClass, b: SymmetryClass },
    /// `μ_k = s·T μ_source`, `ν_k = s·T ν_source`, `Q_k = Q_source`, where `T` conjugates the
    /// coefficients when `star` and applies `τ ↦ −τ` when `reflect`.
    Image { source: usize, star: bool, reflect: bool, sign: f64 },
}

/// A desingularization problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub base: VortexConfiguration,
    pub split: ParameterSplit,
    pub roles: Vec<VortexRole>,
    /// Real coordinates of `V` (index `2k` for `Re V_k`, `2k+1` for `Im V_k`) carrying slack.
    #[serde(default)]
    pub slack: Vec<usize>,
}

fn free(mu: SymmetryClass, nu: SymmetryClass, a: SymmetryClass, b: SymmetryClass) -> VortexRole {
    VortexRole::Free { mu, nu, a, b }
}

impl Scenario {
    /// Co-rotating pair with unknowns `μ₁ ∈ rr`, `ν₁ ∈ ir`, `Q₁`, `Ω`.
    pub fn rotating_pair() -> Self {
        use SymmetryClass::*;
        Self {
            kind: ScenarioKind::RotatingPair,
            base: builtin::rotating_pair(),
            split: ParameterSplit::from_names(2, &["omega"]).unwrap(),
            roles: vec![
                free(Rr, Ir, Ir, Rr),
                VortexRole::Image { source: 0, star: true, reflect: true, sign: -1.0 },
            ],
            slack: vec![],
        }
    }

    /// Tripole with unknowns `μ₁ ∈ rr`, `μ₂ ∈ rr∩ii`, `ν₁ ∈ ir`, `ν₂ ∈ ir∩ii`, `Q₁`, `Q₂`, `γ₂`.
    pub fn stationary_tripole() -> Self {
        use SymmetryClass::*;
        Self {
            kind: ScenarioKind::StationaryTripole,
            base: builtin::stationary_tripole(),
            split: ParameterSplit::from_names(3, &["gamma2"]).unwrap(),
            roles: vec![
                free(Rr, Ir, Ir, Rr),
                free(RrIi, IrIi, IrIi, RrRi),
                VortexRole::Image { source: 0, star: true, reflect: true, sign: -1.0 },
            ],
            slack: vec![],
        }
    }

    /// Translating pair with unknowns `μ₁ ∈ ii`, `ν₁ ∈ ii`, `Q₁`, `c`.
    pub fn translating_pair() -> Self {
        use SymmetryClass::*;
        Self {
            kind: ScenarioKind::TranslatingPair,
            base: builtin::translating_pair(),
            split: ParameterSplit::from_names(2, &["c"]).unwrap(),
            roles: vec![
                free(Ii, Ii, Ii, Ri),
                VortexRole::Image { source: 0, star: true, reflect: false, sign: 1.0 },
            ],
            slack: vec![],
        }
    }

    /// Unreduced problem for a nondegenerate steady configuration and split.
    pub fn general(cfg: VortexConfiguration, split: ParameterSplit) -> Result<Self> {
        let class = classify_nondegeneracy(&cfg, &split)?;
        if !class.nondegenerate {
            return Err(VortexError::Precondition(format!(
                "configuration is degenerate under this split (codim {}, rank {})",
                class.codim, class.rank
            )));
        }
        let slack = select_slack(&cfg, class.kind);
        let none = SymmetryClass::None;
        let roles = (0..cfg.m()).map(|_| free(none, none, none, none)).collect();
        Ok(Self { kind: ScenarioKind::General, base: cfg, split, roles, slack })
    }

    /// Built-in scenario by name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "rotating-pair" | "rotating_pair" => Some(Self::rotating_pair()),
            "tripole" | "stationary-tripole" | "stationary_tripole" => Some(Self::stationary_tripole()),
            "translating-pair" | "translating_pair" | "pocklington" => Some(Self::translating_pair()),
            _ => None,
        }
    }

    pub fn m(&self) -> usize {
        self.base.m()
    }

    /// Checks roles, and that the reduced system is square for order `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.base.validate()?;
        self.split.validate(self.m())?;
        if self.roles.len() != self.m() {
            return Err(VortexError::Input("one role per vortex is required".into()));
        }
        for r in &self.roles {
            if let VortexRole::Image { source, .. } = r {
                if !matches!(self.roles.get(*source), Some(VortexRole::Free { .. })) {
                    return Err(VortexError::Input("image roles must refer to a free vortex".into()));
                }
            }
        }
        let layout = Layout::new(self, n);
        if layout.n_unknowns() != layout.n_equations() {
            return Err(VortexError::Input(format!(
                "reduced system is not square: {} unknowns, {} equations",
                layout.n_unknowns(),
                layout.n_equations()
            )));
        }
        Ok(())
    }
}

/// `S_k = −½ Σ_{j≠k} (γ_j/2πi)/(ζ_j − ζ_k)²`.
pub fn strain(cfg: &VortexConfiguration, k: usize) -> C64 {
    let mut s = ZERO;
    for j in 0..cfg.m() {
        if j != k {
            let d = cfg.centers[j] - cfg.centers[k];
            s += cfg.circulations[j] / (2.0 * PI * I * d * d);
        }
    }
    -0.5 * s
}

/// Leading-order state: `μ̂_{k,1} = 8πiρS_k/γ_k`, `ν̂_{k,2} = −ρS_k`, `Q_k = −ργ_kΩ/π`, `λ = λ₀`.
pub fn leading_guess(scenario: &Scenario, rho: f64, n: usize) -> Result<HollowState> {
    let cfg = &scenario.base;
    cfg.validate()?;
    let v = eval_pv_residual(cfg)?;
    if v.iter().any(|x| x.norm() > 1e-9 * cfg.velocity_scale()) {
        return Err(VortexError::Precondition("leading guess needs a steady base configuration".into()));
    }
    if cfg.circulations.contains(&0.0) {
        return Err(VortexError::Precondition("zero circulation cannot be desingularized".into()));
    }
    if n < 2 {
        return Err(VortexError::Input("truncation order must be at least 2".into()));
    }
    let mut u = HollowState::trivial(cfg, &scenario.split, n, rho);
    for k in 0..cfg.m() {
        let s = strain(cfg, k);
        let g = cfg.circulations[k];
        u.mu[k].coeffs[0] = 8.0 * PI * I * rho * s / g;
        u.nu[k].coeffs[1] = -rho * s;
        u.q[k] = -rho * g * cfg.angular_velocity / PI;
    }
    Ok(u)
}

/// Newton parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub residual_tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    pub backtracking: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { residual_tol: 1e-11, max_iter: 25, fd_step: 1e-7, backtracking: 20 }
    }
}

/// Index bookkeeping between a state and the reduced real vector.
#[derive(Clone, Debug)]
pub struct Layout {
    n: usize,
    /// Per free vortex: (vortex, μ dirs per mode, ν dirs per mode, A dirs per mode, B dirs per mode).
    free: Vec<FreeBlock>,
    n_lambda: usize,
    slack: Vec<usize>,
    images: Vec<(usize, usize, bool, bool, f64)>,
}

#[derive(Clone, Debug)]
struct FreeBlock {
    k: usize,
    mu: Vec<Vec<C64>>,
    nu: Vec<Vec<C64>>,
    a: Vec<Vec<C64>>,
    b: Vec<Vec<C64>>,
}

fn real_dirs(class: SymmetryClass, m: usize) -> Vec<C64> {
    let d = class.directions(m);
    if m == 0 {
        d.into_iter().filter(|x| x.re.abs() > 0.5).collect()
    } else {
        d
    }
}

fn image_transform(d: &SpectralDensity, star: bool, reflect: bool, sign: f64) -> SpectralDensity {
    let mut out = if star { d.starred() } else { d.clone() };
    if reflect {
        out = out.reflected();
    }
    out.scaled(sign)
}

impl Layout {
    pub fn new(scn: &Scenario, n: usize) -> Self {
        let mut free = Vec::new();
        let mut images = Vec::new();
        for (k, r) in scn.roles.iter().enumerate() {
            match *r {
                VortexRole::Free { mu, nu, a, b } => free.push(FreeBlock {
                    k,
                    mu: (1..=n).map(|m| real_dirs(mu, m)).collect(),
                    nu: (1..=n).map(|m| real_dirs(nu, m)).collect(),
                    a: (1..=n).map(|m| real_dirs(a, m)).collect(),
                    b: (0..=n + 1).map(|m| real_dirs(b, m)).collect(),
                }),
                VortexRole::Image { source, star, reflect, sign } => images.push((k, source, star, reflect, sign)),
            }
        }
        Self { n, free, n_lambda: scn.split.varying.len(), slack: scn.slack.clone(), images }
    }

    pub fn n_unknowns(&self) -> usize {
        let dens: usize = self
            .free
            .iter()
            .map(|b| b.mu.iter().map(Vec::len).sum::<usize>() + b.nu.iter().map(Vec::len).sum::<usize>() + 1)
            .sum();
        dens + self.n_lambda + self.slack.len()
    }

    pub fn n_equations(&self) -> usize {
        self.free
            .iter()
            .map(|b| b.a.iter().map(Vec::len).sum::<usize>() + b.b.iter().map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Packs a state and slack into the reduced vector (projecting onto the classes).
    pub fn pack(&self, u: &HollowState, slack: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_unknowns());
        for b in &self.free {
            for (dens, dirs) in [(&u.mu[b.k], &b.mu), (&u.nu[b.k], &b.nu)] {
                for (m, ds) in dirs.iter().enumerate() {
                    let c = dens.coeffs.get(m).copied().unwrap_or(ZERO);
                    for d in ds {
                        x.push((c * d.conj()).re);
                    }
                }
            }
            x.push(u.q[b.k]);
        }
        x.extend_from_slice(&u.lambda);
        x.extend_from_slice(slack);
        x
    }

    /// Inverse of [`Layout::pack`] given a template carrying `ρ` and the fixed parameters.
    pub fn unpack(&self, x: &[f64], template: &HollowState) -> (HollowState, Vec<f64>) {
        let mut u = template.resized(self.n);
        let mut i = 0;
        for b in &self.free {
            for which in 0..2 {
                let dirs = if which == 0 { &b.mu } else { &b.nu };
                let mut coeffs = vec![ZERO; self.n];
                for (m, ds) in dirs.iter().enumerate() {
                    for d in ds {
                        coeffs[m] += d * x[i];
                        i += 1;
                    }
                }
                let dens = SpectralDensity::from_coeffs(coeffs);
                if which == 0 {
                    u.mu[b.k] = dens;
                } else {
                    u.nu[b.k] = dens;
                }
            }
            u.q[b.k] = x[i];
            i += 1;
        }
        u.lambda = x[i..i + self.n_lambda].to_vec();
        i += self.n_lambda;
        let slack = x[i..i + self.slack.len()].to_vec();
        for &(k, src, star, reflect, sign) in &self.images {
            u.mu[k] = image_transform(&u.mu[src], star, reflect, sign);
            u.nu[k] = image_transform(&u.nu[src], star, reflect, sign);
            u.q[k] = u.q[src];
        }
        (u, slack)
    }

    /// Largest deviation of a state from the scenario's classes and couplings.
    pub fn symmetry_defect(&self, u: &HollowState) -> f64 {
        let mut defect = 0.0f64;
        for b in &self.free {
            let (mu, nu) = (&u.mu[b.k], &u.nu[b.k]);
            for (dens, dirs) in [(mu, &b.mu), (nu, &b.nu)] {
                for (m, ds) in dirs.iter().enumerate() {
                    let c = dens.coeffs.get(m).copied().unwrap_or(ZERO);
                    let p: C64 = ds.iter().map(|d| d * (c * d.conj()).re).sum();
                    defect = defect.max((c - p).norm());
                }
            }
        }
        for &(k, src, star, reflect, sign) in &self.images {
            for (a, s) in [(&u.mu[k], &u.mu[src]), (&u.nu[k], &u.nu[src])] {
                let t = image_transform(s, star, reflect, sign);
                for (x, y) in a.coeffs.iter().zip(&t.coeffs) {
                    defect = defect.max((x - y).norm());
                }
            }
            defect = defect.max((u.q[k] - u.q[src]).abs());
        }
        defect
    }

    /// Projects the residual of a state onto the reduced equations, with slack applied.
    fn equations(&self, scn: &Scenario, fields: &FlowFields, slack: &[f64]) -> Result<(Vec<f64>, f64)> {
        let res = residual_from_fields(fields)?;
        let sup = res.sup();
        let (a, mut b) = residual_series(&res, self.n);
        for (i, &s) in self.slack.iter().enumerate() {
            let k = s / 2;
            let e = if s % 2 == 0 { C64::new(1.0, 0.0) } else { I };
            let g = fields.cfg.circulations[k];
            b[k].coeffs[0] -= g / PI * I * e * slack[i] / 2.0;
        }
        let _ = scn;
        let mut out = Vec::with_capacity(self.n_equations());
        for blk in &self.free {
            for (m, ds) in blk.a.iter().enumerate() {
                let c = a[blk.k].coeff(m as i64 + 1);
                for d in ds {
                    out.push((c * d.conj()).re);
                }
            }
            for (m, ds) in blk.b.iter().enumerate() {
                let c = b[blk.k].coeff(m as i64);
                for d in ds {
                    out.push((c * d.conj()).re);
                }
            }
        }
        Ok((out, sup))
    }
}

/// Outcome of a Newton solve.
#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub state: HollowState,
    pub slack: Vec<f64>,
    pub iterations: usize,
    /// Final grid sup of `|𝓐|`, `|𝓑|`.
    pub residual: f64,
    /// Grid residual after each iteration, starting with the initial one.
    pub trace: Vec<f64>,
    /// Condition number of the last reduced Jacobian (1 when none was formed).
    pub condition: f64,
}

/// Failure details used by the continuation driver.
#[derive(Debug)]
pub struct NewtonFailure {
    pub error: VortexError,
    /// The projected equations were solved but the grid residual stayed above tolerance.
    pub truncation_limited: bool,
}

struct System<'a> {
    scn: &'a Scenario,
    layout: Layout,
    template: HollowState,
    op: Arc<TraceOperator>,
}

impl System<'_> {
    fn eval(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (u, slack) = self.layout.unpack(x, &self.template);
        let fields = FlowFields::with_operator(&u, self.op.clone())?;
        self.layout.equations(self.scn, &fields, &slack)
    }

    fn jacobian(&self, x: &[f64], f0: &[f64], fd_step: f64) -> Result<DMatrix<f64>> {
        let n = x.len();
        let cols: Vec<Result<Vec<f64>>> = crate::parallel::pool().install(|| {
            (0..n)
                .into_par_iter()
                .map(|j| {
                    let h = fd_step * (1.0 + x[j].abs());
                    let mut xp = x.to_vec();
                    xp[j] += h;
                    let (fp, _) = self.eval(&xp)?;
                    Ok(fp.iter().zip(f0).map(|(a, b)| (a - b) / h).collect())
                })
                .collect()
        });
        let mut jac = DMatrix::zeros(f0.len(), n);
        for (j, c) in cols.into_iter().enumerate() {
            jac.set_column(j, &DVector::from_vec(c?));
        }
        Ok(jac)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn condition_number(j: &DMatrix<f64>) -> f64 {
    let s = j.clone().singular_values();
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Newton on the reduced system with a forward-difference Jacobian and backtracking.
pub fn newton_detailed(
    u_init: &HollowState,
    scenario: &Scenario,
    settings: &NewtonSettings,
) -> std::result::Result<NewtonReport, NewtonFailure> {
    let fail = |error: VortexError| NewtonFailure { error, truncation_limited: false };
    let n = u_init.n();
    scenario.validate(n).map_err(fail)?;
    if u_init.split != scenario.split || u_init.cfg_base != scenario.base {
        return Err(fail(VortexError::Input("state does not belong to this scenario".into())));
    }
    let layout = Layout::new(scenario, n);
    let defect = layout.symmetry_defect(u_init);
    if defect > 1e-8 {
        return Err(fail(VortexError::Precondition(format!("initial state violates the scenario symmetry by {defect:e}"))));
    }
    let cfg = u_init.cfg();
    let nq = u_init.default_nq();
    let op = Arc::new(TraceOperator::new(u_init.rho, &cfg.centers, nq).map_err(fail)?);
    let sys = System { scn: scenario, layout, template: u_init.clone(), op };
    let mut x = sys.layout.pack(u_init, &vec![0.0; scenario.slack.len()]);
    let (mut f, mut sup) = sys.eval(&x).map_err(fail)?;
    let mut trace = vec![sup];
    let mut cond = 1.0;
    let tol = settings.residual_tol;
    let slack_of = |x: &[f64]| x[x.len() - scenario.slack.len()..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for it in 0..=settings.max_iter {
        if sup < tol && slack_of(&x) < tol {
            let (state, slack) = sys.layout.unpack(&x, &sys.template);
            return Ok(NewtonReport { state, slack, iterations: it, residual: sup, trace, condition: cond });
        }
        let finf = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if it > 0 && finf < 1e-3 * tol && sup >= tol {
            return Err(NewtonFailure {
                error: VortexError::Convergence { iterations: it, last_residual: sup, trace },
                truncation_limited: true,
            });
        }
        if it == settings.max_iter {
            break;
        }
        let jac = sys.jacobian(&x, &f, settings.fd_step).map_err(fail)?;
        cond = condition_number(&jac);
        if !(cond <= 1e12) {
            return Err(fail(VortexError::NearSingular(format!("reduced Jacobian condition number {cond:e}"))));
        }
        let rhs = -DVector::from_vec(f.clone());
        let dx = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| fail(VortexError::NearSingular("reduced Jacobian is singular".into())))?;
        let f_norm = norm2(&f);
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut domain_exits = 0;
        for _ in 0..=settings.backtracking {
            let xt: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + alpha * d).collect();
            match sys.eval(&xt) {
                Ok((ft, st)) if norm2(&ft) < f_norm || norm2(&ft) == 0.0 => {
                    accepted = Some((xt, ft, st));
                    break;
                }
                Ok(_) => {}
                Err(VortexError::Domain(_)) => domain_exits += 1,
                Err(e) => return Err(fail(e)),
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((xt, ft, st)) => {
                x = xt;
                f = ft;
                sup = st;
                trace.push(sup);
            }
            None => {
                let err = if domain_exits > settings.backtracking / 2 {
                    VortexError::Domain("line search left the admissible set".into())
                } else {
                    VortexError::Convergence { iterations: it + 1, last_residual: sup, trace }
                };
                let truncation_limited = finf < 1e-2 * tol;
                return Err(NewtonFailure { error: err, truncation_limited });
            }
        }
    }
    Err(NewtonFailure {
        error: VortexError::Convergence { iterations: settings.max_iter, last_residual: sup, trace },
        truncation_limited: false,
    })
}

/// Newton solve returning the full report.
pub fn newton_solve_report(u_init: &HollowState, scenario: &Scenario, settings: &NewtonSettings) -> Result<NewtonReport> {
    newton_detailed(u_init, scenario, settings).map_err(|f| f.error)
}

/// Newton solve returning the converged state.
pub fn newton_solve(u_init: &HollowState, scenario: &Scenario, settings: &NewtonSettings) -> Result<HollowState> {
    Ok(newton_solve_report(u_init, scenario, settings)?.state)
}

/// Why a continuation run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    ConformalDegeneracy,
    VelocityDegeneracy,
    ParameterBlowup,
    AngularMomentumBlowup,
    StepFailure,
    MaxSteps,
}

/// Step-control parameters of the continuation driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub rho_start: f64,
    pub rho_max: f64,
    pub initial_step: f64,
    pub min_step: f64,
    /// Maximum number of attempted steps after the start point.
    pub max_steps: usize,
    /// Largest truncation order reachable by doubling.
    pub n_max: usize,
    /// Condition number of the Newton Jacobian above which pseudo-arclength steps are used.
    pub palc_condition: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rho_start: 0.02,
            rho_max: 0.9,
            initial_step: 0.01,
            min_step: 1e-8,
            max_steps: 50,
            n_max: 256,
            palc_condition: 1e8,
        }
    }
}

/// Monitor limits for labeling terminations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Degeneracy when `N_conf` exceeds this multiple of its first value.
    pub conf_factor: f64,
    /// Degeneracy when `N_vel` exceeds this multiple of its first value.
    pub vel_factor: f64,
    /// Bound on `max|λ_i|`.
    pub lambda_max: f64,
    /// Bound on `|L|`.
    pub angular_momentum_max: f64,
    /// Smallest admissible `|f_ζ|` on the boundary.
    pub min_fz: f64,
    /// Compute `L` at every point (rotating scenarios).
    pub monitor_angular_momentum: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            conf_factor: 1e3,
            vel_factor: 1e3,
            lambda_max: 1e3,
            angular_momentum_max: 1e6,
            min_fz: 1e-3,
            monitor_angular_momentum: false,
        }
    }
}

/// Driver state after a point, sufficient to resume deterministically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverState {
    /// Next attempted increment in `ρ` (or arclength in pseudo-arclength mode).
    pub step: f64,
    /// Consecutive successes since the last change of step.
    pub successes: usize,
    /// Attempts used so far.
    pub attempts: usize,
    /// Current truncation order.
    pub n: usize,
    pub palc: bool,
}

/// One accepted point of a branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub state: HollowState,
    pub diagnostics: DiagnosticsReport,
    pub arclength: f64,
    pub accepted: bool,
    pub newton_iterations: usize,
    pub driver: DriverState,
}

/// Result of a continuation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRun {
    pub points: Vec<BranchPoint>,
    pub termination: TerminationReason,
    pub note: String,
}

/// Sum `Σ w_i u_i` of states with common parameters, padding densities to the largest order.
pub fn combine_states(terms: &[(f64, &HollowState)]) -> HollowState {
    let n = terms.iter().map(|(_, u)| u.n()).max().unwrap_or(0);
    let first = terms[0].1;
    let m = first.m();
    let mut out = first.resized(n);
    out.rho = 0.0;
    out.mu = DensityVector::zeros(m, n);
    out.nu = DensityVector::zeros(m, n);
    out.q = vec![0.0; m];
    out.lambda = vec![0.0; first.lambda.len()];
    for (w, u) in terms {
        let u = u.resized(n);
        out.rho += w * u.rho;
        for k in 0..m {
            for i in 0..n {
                out.mu[k].coeffs[i] += *w * u.mu[k].coeffs[i];
                out.nu[k].coeffs[i] += *w * u.nu[k].coeffs[i];
            }
            out.q[k] += w * u.q[k];
        }
        for (a, b) in out.lambda.iter_mut().zip(&u.lambda) {
            *a += w * b;
        }
    }
    out
}

/// Euclidean distance between two states over all real unknowns and `ρ`.
pub fn state_distance(a: &HollowState, b: &HollowState) -> f64 {
    let d = combine_states(&[(1.0, a), (-1.0, b)]);
    let mut s = d.rho * d.rho;
    for k in 0..d.m() {
        for c in d.mu[k].coeffs.iter().chain(&d.nu[k].coeffs) {
            s += 2.0 * c.norm_sqr();
        }
        s += d.q[k] * d.q[k];
    }
    s += d.lambda.iter().map(|x| x * x).sum::<f64>();
    s.sqrt()
}

fn max_lambda(u: &HollowState) -> f64 {
    u.lambda.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn tail_ratio(u: &HollowState) -> f64 {
    let n = u.n();
    let top = n.saturating_sub(n / 8).max(1);
    let mut tail = 0.0f64;
    let mut head = 0.0f64;
    for d in u.mu.densities.iter().chain(&u.nu.densities) {
        for (i, c) in d.coeffs.iter().enumerate() {
            if i + 1 > top {
                tail = tail.max(c.norm());
            } else {
                head = head.max(c.norm());
            }
        }
    }
    if head == 0.0 {
        0.0
    } else {
        tail / head
    }
}

/// Gate failures of a converged state, empty when all pass.
pub fn gate_failures(d: &DiagnosticsReport, thresholds: &Thresholds, tol: f64) -> Vec<&'static str> {
    let mut out = Vec::new();
    if !d.winding_ok {
        out.push("winding");
    }
    if !d.boundary_injective {
        out.push("injectivity");
    }
    if !d.mutually_exterior {
        out.push("exteriority");
    }
    if !(d.min_fz > thresholds.min_fz) {
        out.push("conformal margin");
    }
    if !(d.residual_sup < tol) {
        out.push("residual");
    }
    out
}

/// Continuation driver; `on_point` is called for every accepted point.
pub struct Continuation<'a> {
    pub scenario: &'a Scenario,
    pub control: StepControl,
    pub newton: NewtonSettings,
    pub thresholds: Thresholds,
}

impl Continuation<'_> {
    fn diag_opts(&self) -> DiagnosticsOptions {
        DiagnosticsOptions {
            excess_l: self.thresholds.monitor_angular_momentum,
            momentum_identity: false,
            l_method: LMethod::Boundary,
        }
    }

    fn diagnose(&self, u: &HollowState) -> Result<DiagnosticsReport> {
        let fields = FlowFields::new(u)?;
        diagnose_fields(&fields, self.diag_opts())
    }

    /// Converged start point at `rho_start` with truncation `n`.
    pub fn start(&self, n: usize) -> Result<BranchPoint> {
        let mut n = n;
        loop {
            let guess = leading_guess(self.scenario, self.control.rho_start, n)?;
            match newton_detailed(&guess, self.scenario, &self.newton) {
                Ok(rep) => {
                    let d = self.diagnose(&rep.state)?;
                    let gates = gate_failures(&d, &self.thresholds, self.newton.residual_tol);
                    if !gates.is_empty() {
                        return Err(VortexError::Precondition(format!("start point fails gates: {}", gates.join(", "))));
                    }
                    return Ok(BranchPoint {
                        state: rep.state,
                        diagnostics: d,
                        arclength: 0.0,
                        accepted: true,
                        newton_iterations: rep.iterations,
                        driver: DriverState {
                            step: self.control.initial_step,
                            successes: 0,
                            attempts: 0,
                            n,
                            palc: rep.condition > self.control.palc_condition,
                        },
                    });
                }
                Err(f) if f.truncation_limited && 2 * n <= self.control.n_max => n *= 2,
                Err(f) => return Err(f.error),
            }
        }
    }

    fn predict(&self, prev: &[BranchPoint], rho_new: f64, n: usize) -> Result<HollowState> {
        let last = &prev[prev.len() - 1].state;
        let pred = if prev.len() >= 2 {
            let before = &prev[prev.len() - 2].state;
            let r = (rho_new - last.rho) / (last.rho - before.rho);
            combine_states(&[(1.0 + r, last), (-r, before)])
        } else {
            let l_new = leading_guess(self.scenario, rho_new, last.n())?;
            let l_old = leading_guess(self.scenario, last.rho, last.n())?;
            combine_states(&[(1.0, last), (1.0, &l_new), (-1.0, &l_old)])
        };
        let mut pred = pred.resized(n);
        pred.rho = rho_new;
        pred.cfg_base = last.cfg_base.clone();
        pred.split = last.split.clone();
        let layout = Layout::new(self.scenario, n);
        let x = layout.pack(&pred, &vec![0.0; self.scenario.slack.len()]);
        Ok(layout.unpack(&x, &pred).0)
    }

    /// Pseudo-arclength corrector: unknowns `(x, ρ)` with the tangent condition appended.
    fn palc_correct(&self, prev: &[BranchPoint], ds: f64, n: usize) -> std::result::Result<NewtonReport, NewtonFailure> {
        let fail = |error: VortexError| NewtonFailure { error, truncation_limited: false };
        let layout = Layout::new(self.scenario, n);
        let ns = self.scenario.slack.len();
        let last = prev[prev.len() - 1].state.resized(n);
        let before = prev[prev.len() - 2].state.resized(n);
        let mut x1 = layout.pack(&last, &vec![0.0; ns]);
        x1.push(last.rho);
        let mut x0 = layout.pack(&before, &vec![0.0; ns]);
        x0.push(before.rho);
        let mut t: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let tn = norm2(&t);
        if tn == 0.0 {
            return Err(fail(VortexError::NearSingular("zero secant".into())));
        }
        t.iter_mut().for_each(|v| *v /= tn);
        let xp: Vec<f64> = x1.iter().zip(&t).map(|(a, b)| a + ds * b).collect();
        let eval = |y: &[f64]| -> Result<(Vec<f64>, f64)> {
            let (mut u, slack) = layout.unpack(&y[..y.len() - 1], &last);
            u.rho = y[y.len() - 1];
            let fields = FlowFields::new(&u)?;
            let (mut f, sup) = layout.equations(self.scenario, &fields, &slack)?;
            f.push(y.iter().zip(&xp).zip(&t).map(|((a, b), c)| (a - b) * c).sum());
            Ok((f, sup))
        };
        let mut y = xp.clone();
        let (mut f, mut sup) = eval(&y).map_err(fail)?;
        let mut trace = vec![sup];
        let tol = self.newton.residual_tol;
        for it in 0..=self.newton.max_iter {
            if sup < tol {
                let (mut u, slack) = layout.unpack(&y[..y.len() - 1], &last);
                u.rho = y[y.len() - 1];
                return Ok(NewtonReport { state: u, slack, iterations: it, residual: sup, trace, condition: 1.0 });
            }
            if it == self.newton.max_iter {
                break;
            }
            let cols: Vec<Result<Vec<f64>>> = crate::parallel::pool().install(|| {
                (0..y.len())
                    .into_par_iter()
                    .map(|j| {
                        let h = self.newton.fd_step * (1.0 + y[j].abs());
                        let mut yp = y.clone();
                        yp[j] += h;
                        let (fp, _) = eval(&yp)?;
                        Ok(fp.iter().zip(&f).map(|(a, b)| (a - b) / h).collect())
                    })
                    .collect()
            });
            let mut jac = DMatrix::zeros(f.len(), y.len());
            for (j, c) in cols.into_iter().enumerate() {
                jac.set_column(j, &DVector::from_vec(c.map_err(fail)?));
            }
            let dy = jac
                .lu()
                .solve(&(-DVector::from_vec(f.clone())))
                .ok_or_else(|| fail(VortexError::NearSingular("augmented Jacobian is singular".into())))?;
            let fnorm = norm2(&f);
            let mut alpha = 1.0;
            let mut ok = false;
            for _ in 0..=self.newton.backtracking {
                let yt: Vec<f64> = y.iter().zip(dy.iter()).map(|(a, d)| a + alpha * d).collect();
                if let Ok((ft, st)) = eval(&yt) {
                    if norm2(&ft) < fnorm {
                        y = yt;
                        f = ft;
                        sup = st;
                        trace.push(sup);
                        ok = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !ok {
                break;
            }
        }
        Err(fail(VortexError::Convergence { iterations: trace.len() - 1, last_residual: sup, trace }))
    }

    /// Runs from the given accepted points (at least one) until termination.
    pub fn run_from(
        &self,
        mut points: Vec<BranchPoint>,
        mut on_point: impl FnMut(&BranchPoint) -> Result<()>,
    ) -> Result<BranchRun> {
        let first = points.first().cloned().ok_or_else(|| VortexError::Input("no start point".into()))?;
        let mut drv = points.last().unwrap().driver.clone();
        let is_rotating = self.scenario.base.steady_kind().ok() == Some(SteadyKind::Rotating);
        let finish = |points: Vec<BranchPoint>, termination, note: String| Ok(BranchRun { points, termination, note });
        loop {
            let last = points.last().unwrap().clone();
            if last.state.rho >= self.control.rho_max {
                return finish(points, TerminationReason::MaxSteps, "reached rho_max".into());
            }
            if drv.attempts >= self.control.max_steps {
                return finish(points, TerminationReason::MaxSteps, "step budget exhausted".into());
            }
            if drv.step < self.control.min_step {
                return finish(points, TerminationReason::StepFailure, format!("step fell below {:e}", self.control.min_step));
            }
            drv.attempts += 1;
            let gap = last.state.cfg().min_gap();
            let cap = 0.1 * (gap - 2.0 * last.state.rho);
            let mut step = drv.step.min(cap).min(self.control.rho_max - last.state.rho);
            if step <= 0.0 {
                step = drv.step.min(cap);
            }
            let outcome = if drv.palc && points.len() >= 2 {
                self.palc_correct(&points, step, drv.n)
            } else {
                let rho_new = last.state.rho + step;
                match self.predict(&points, rho_new, drv.n) {
                    Ok(pred) => newton_detailed(&pred, self.scenario, &self.newton),
                    Err(e) => Err(NewtonFailure { error: e, truncation_limited: false }),
                }
            };
            let rep = match outcome {
                Ok(rep) => rep,
                Err(f) => {
                    if f.truncation_limited && 2 * drv.n <= self.control.n_max {
                        drv.n *= 2;
                    } else {
                        drv.step *= 0.5;
                        drv.successes = 0;
                    }
                    continue;
                }
            };
            let diag = match self.diagnose(&rep.state) {
                Ok(d) => d,
                Err(_) => {
                    drv.step *= 0.5;
                    drv.successes = 0;
                    continue;
                }
            };
            if !gate_failures(&diag, &self.thresholds, self.newton.residual_tol).is_empty() || rep.state.rho <= last.state.rho && !drv.palc {
                drv.step *= 0.5;
                drv.successes = 0;
                continue;
            }
            drv.successes += 1;
            if drv.successes >= 3 {
                drv.step *= 2.0;
                drv.successes = 0;
            }
            if rep.condition > self.control.palc_condition {
                drv.palc = true;
            }
            if tail_ratio(&rep.state) > 1e-12 && 2 * drv.n <= self.control.n_max {
                drv.n *= 2;
            }
            let arclength = last.arclength + state_distance(&rep.state, &last.state);
            let point = BranchPoint {
                state: rep.state,
                diagnostics: diag,
                arclength,
                accepted: true,
                newton_iterations: rep.iterations,
                driver: drv.clone(),
            };
            on_point(&point)?;
            let d = &point.diagnostics;
            let reason = if d.n_conf > self.thresholds.conf_factor * first.diagnostics.n_conf {
                Some(TerminationReason::ConformalDegeneracy)
            } else if d.n_vel > self.thresholds.vel_factor * first.diagnostics.n_vel {
                Some(TerminationReason::VelocityDegeneracy)
            } else if max_lambda(&point.state) > self.thresholds.lambda_max {
                Some(TerminationReason::ParameterBlowup)
            } else if is_rotating && d.excess_l.is_some_and(|l| l.abs() > self.thresholds.angular_momentum_max) {
                Some(TerminationReason::AngularMomentumBlowup)
            } else {
                None
            };
            points.push(point);
            if let Some(r) = reason {
                return finish(points, r, "monitor threshold exceeded".into());
            }
        }
    }

    /// Start point plus continuation.
    pub fn run(&self, n: usize, mut on_point: impl FnMut(&BranchPoint) -> Result<()>) -> Result<BranchRun> {
        let start = self.start(n)?;
        on_point(&start)?;
        self.run_from(vec![start], on_point)
    }
}

/// Continuation with default thresholds; see [`Continuation`].
pub fn continue_branch(
    scenario: &Scenario,
    n: usize,
    control: StepControl,
    newton: NewtonSettings,
    thresholds: Thresholds,
) -> Result<BranchRun> {
    Continuation { scenario, control, newton, thresholds }.run(n, |_| Ok(()))
}

/// Checks the symmetry classes of every free density and the couplings.
pub fn scenario_symmetry_defect(scenario: &Scenario, u: &HollowState) -> f64 {
    Layout::new(scenario, u.n()).symmetry_defect(u)
}

/// Class defect of one density, re-exported for callers that test membership directly.
pub fn class_defect(class: SymmetryClass, d: &SpectralDensity) -> f64 {
    symmetry_defect(class, d)
}
