//! Hollow-vortex fields and the nonlinear residual.
//!
//! The conformal map and complex potential are `f = ζ + ρ²𝒵^ρμ` and
//! `w = w⁰ + ρ𝒵^ρν` on the exterior of the circles `|ζ − ζ_k| = |ρ|`.
//! On circle `k` with `ζ = ζ_k + ρτ` the relative velocity is
//! `U = (a + ρb)/(ρ(1 + ρd))` with `a = γ_k/(2πiτ)`, `d = 𝒵_kμ′` and
//!
//! `b = 𝒵_kν′ + Λ_k^ρ + ρ(iΩ conj(ζ_k+ρτ) − c)d + iΩρ² conj(𝒵_kμ) + iΩρ³ d conj(𝒵_kμ)`.
//!
//! The kinematic residual is `𝓐_k = Re(τb)` and the Bernoulli residual is
//! `𝓑_k = [2Re(āb) + ρ|b|² − |a|²(2Re d + ρ|d|²)]/|1+ρd|² − Q_k`, which equals
//! `(ρ²|U|² − γ_k²/4π²)/ρ − Q_k` for `ρ ≠ 0` and has no `0/0` at `ρ = 0`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::pointvortex::{eval_pv_residual, ParameterSplit, SteadyKind, VortexConfiguration};
use crate::spectral::{
    apply_multiplier, field_z_exact, grid_to_modes, mode_index, modes_to_grid, CircleFunction, DensityVector,
    MultiplierKind, RealSeries, SpectralDensity, TraceOperator,
};
use crate::{Result, VortexError, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Smallest admissible `|1 + ρ𝒵_kμ′|` on the grid.
pub const MIN_CONFORMAL_DERIVATIVE: f64 = 1e-8;

/// Unknowns `u = (μ, ν, Q, λ)` together with `ρ` and the fixed parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HollowState {
    pub mu: DensityVector,
    pub nu: DensityVector,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rho: f64,
    pub cfg_base: VortexConfiguration,
    pub split: ParameterSplit,
}

impl HollowState {
    /// The trivial state `(0, 0, 0, λ₀)` at radius `rho` with truncation `n`.
    pub fn trivial(cfg: &VortexConfiguration, split: &ParameterSplit, n: usize, rho: f64) -> Self {
        let m = cfg.m();
        Self {
            mu: DensityVector::zeros(m, n),
            nu: DensityVector::zeros(m, n),
            q: vec![0.0; m],
            lambda: split.extract(cfg),
            rho,
            cfg_base: cfg.clone(),
            split: split.clone(),
        }
    }

    pub fn m(&self) -> usize {
        self.cfg_base.m()
    }

    /// Truncation order.
    pub fn n(&self) -> usize {
        self.mu.n()
    }

    /// Default quadrature size `4N`.
    pub fn default_nq(&self) -> usize {
        (4 * self.n()).max(16)
    }

    /// The full parameter vector `Λ = (λ, λ′)`.
    pub fn cfg(&self) -> VortexConfiguration {
        self.split.apply(&self.cfg_base, &self.lambda)
    }

    /// Copy with densities truncated or zero-padded to order `n`.
    pub fn resized(&self, n: usize) -> Self {
        Self { mu: self.mu.resized(n), nu: self.nu.resized(n), ..self.clone() }
    }

    /// Checks shapes and finiteness.
    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        self.cfg_base.validate()?;
        self.split.validate(m)?;
        if self.mu.len() != m || self.nu.len() != m || self.q.len() != m {
            return Err(VortexError::Input(format!("state arrays do not match {m} vortices")));
        }
        if self.lambda.len() != self.split.varying.len() {
            return Err(VortexError::Input("lambda length differs from the varying block".into()));
        }
        let n = self.n();
        if self.mu.densities.iter().chain(&self.nu.densities).any(|d| d.n() != n) {
            return Err(VortexError::Input("densities have different truncation orders".into()));
        }
        let finite = self.rho.is_finite()
            && self.q.iter().chain(&self.lambda).all(|x| x.is_finite())
            && self
                .mu
                .densities
                .iter()
                .chain(&self.nu.densities)
                .all(|d| d.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()));
        if !finite {
            return Err(VortexError::Input("state contains non-finite values".into()));
        }
        Ok(())
    }
}

/// `w⁰(ζ) = Σ γ_k/(2πi)·log(ζ − ζ_k)` on principal branches, and `w⁰_ζ`.
pub fn build_w0(cfg: &VortexConfiguration, zeta: C64) -> Result<(C64, C64)> {
    let mut w = ZERO;
    let mut wz = ZERO;
    for (g, z) in cfg.circulations.iter().zip(&cfg.centers) {
        let d = zeta - z;
        if d == ZERO {
            return Err(VortexError::Domain(format!("w⁰ is singular at the center {z}")));
        }
        w += g / (2.0 * PI * I) * d.ln();
        wz += g / (2.0 * PI * I * d);
    }
    Ok((w, wz))
}

/// `Σ_{j≠k} γ_j/(2πi(ζ − ζ_j))`, the part of `w⁰_ζ` regular near `ζ_k`.
fn w0_regular(cfg: &VortexConfiguration, k: usize, zeta: C64) -> C64 {
    let mut s = ZERO;
    for j in 0..cfg.m() {
        if j != k {
            s += cfg.circulations[j] / (2.0 * PI * I * (zeta - cfg.centers[j]));
        }
    }
    s
}

/// `Λ_k^ρ(τ) = Σ_{j≠k} γ_j/(2πi(ζ_k+ρτ−ζ_j)) + iΩ conj(ζ_k+ρτ) − c` on `N_q` nodes.
pub fn eval_vrho(rho: f64, cfg: &VortexConfiguration, k: usize, nq: usize) -> Result<Vec<C64>> {
    cfg.validate()?;
    crate::spectral::check_admissible(rho, &cfg.centers)?;
    if k >= cfg.m() {
        return Err(VortexError::Input(format!("vortex index {} out of range", k + 1)));
    }
    Ok(crate::spectral::nodes(nq)
        .into_iter()
        .map(|t| {
            let z = cfg.centers[k] + rho * t;
            w0_regular(cfg, k, z) + I * cfg.angular_velocity * z.conj() - cfg.wave_speed
        })
        .collect())
}

/// Boundary traces on one circle.
#[derive(Clone, Debug)]
pub struct VortexTrace {
    /// `𝒵_kμ`.
    pub zmu: Vec<C64>,
    /// `𝒵_kμ′`.
    pub zmu_p: Vec<C64>,
    /// `𝒵_kν′`.
    pub znu_p: Vec<C64>,
    /// Regular part of `w⁰_ζ`.
    pub w0reg: Vec<C64>,
    /// `Λ_k^ρ`.
    pub lam: Vec<C64>,
    /// `a = γ_k/(2πiτ)`.
    pub a: Vec<C64>,
    /// `b` of the module docs.
    pub b: Vec<C64>,
}

/// Physical fields of a state, with boundary traces on `N_q` nodes per circle.
pub struct FlowFields {
    pub state: HollowState,
    pub cfg: VortexConfiguration,
    pub nq: usize,
    pub tau: Vec<C64>,
    pub traces: Vec<VortexTrace>,
    op: Arc<TraceOperator>,
    mu_modes: Vec<Vec<C64>>,
    mu_p_modes: Vec<Vec<C64>>,
    nu_modes: Vec<Vec<C64>>,
    nu_p_modes: Vec<Vec<C64>>,
}

impl FlowFields {
    /// Builds the fields at the default quadrature size.
    pub fn new(u: &HollowState) -> Result<Self> {
        Self::with_nq(u, u.default_nq())
    }

    pub fn with_nq(u: &HollowState, nq: usize) -> Result<Self> {
        let cfg = u.cfg();
        cfg.validate()?;
        let op = Arc::new(TraceOperator::new(u.rho, &cfg.centers, nq)?);
        Self::with_operator(u, op)
    }

    /// Reuses a trace operator when its radius, centers and size match the state.
    pub fn with_operator(u: &HollowState, op: Arc<TraceOperator>) -> Result<Self> {
        u.validate()?;
        let cfg = u.cfg();
        let nq = op.nq();
        let op = if op.rho() == u.rho && op.centers() == cfg.centers.as_slice() {
            op
        } else {
            Arc::new(TraceOperator::new(u.rho, &cfg.centers, nq)?)
        };
        if nq < 2 * u.n() + 3 {
            return Err(VortexError::Domain(format!("quadrature size {nq} too small for order {}", u.n())));
        }
        let m = cfg.m();
        let mu_f = u.mu.densities.iter().map(|d| CircleFunction::of_density(d, nq)).collect::<Result<Vec<_>>>()?;
        let nu_f = u.nu.densities.iter().map(|d| CircleFunction::of_density(d, nq)).collect::<Result<Vec<_>>>()?;
        let mu_p: Vec<CircleFunction> = mu_f.iter().map(|f| f.derivative()).collect();
        let nu_p: Vec<CircleFunction> = nu_f.iter().map(|f| f.derivative()).collect();
        let tau = op.nodes().to_vec();
        let rho = u.rho;
        let (om, c) = (cfg.angular_velocity, cfg.wave_speed);
        let traces = (0..m)
            .map(|k| {
                let mut fams = op.trace_families(k, &[&mu_f, &mu_p, &nu_p]);
                let znu_p = fams.pop().unwrap();
                let zmu_p = fams.pop().unwrap();
                let zmu = fams.pop().unwrap();
                let gk = cfg.circulations[k];
                let mut w0reg = Vec::with_capacity(nq);
                let mut lam = Vec::with_capacity(nq);
                let mut a = Vec::with_capacity(nq);
                let mut b = Vec::with_capacity(nq);
                for l in 0..nq {
                    let t = tau[l];
                    let z = cfg.centers[k] + rho * t;
                    let wr = w0_regular(&cfg, k, z);
                    let rigid = I * om * z.conj() - c;
                    let lk = wr + rigid;
                    let d = zmu_p[l];
                    let zm = zmu[l];
                    let bl = znu_p[l]
                        + lk
                        + rho * rigid * d
                        + I * om * rho * rho * zm.conj()
                        + I * om * rho * rho * rho * d * zm.conj();
                    w0reg.push(wr);
                    lam.push(lk);
                    a.push(gk / (2.0 * PI * I * t));
                    b.push(bl);
                }
                VortexTrace { zmu, zmu_p, znu_p, w0reg, lam, a, b }
            })
            .collect();
        Ok(Self {
            state: u.clone(),
            cfg,
            nq,
            tau,
            traces,
            op,
            mu_modes: mu_f.into_iter().map(|f| f.modes).collect(),
            mu_p_modes: mu_p.into_iter().map(|f| f.modes).collect(),
            nu_modes: nu_f.into_iter().map(|f| f.modes).collect(),
            nu_p_modes: nu_p.into_iter().map(|f| f.modes).collect(),
        })
    }

    pub fn operator(&self) -> Arc<TraceOperator> {
        self.op.clone()
    }

    pub fn rho(&self) -> f64 {
        self.state.rho
    }

    pub fn m(&self) -> usize {
        self.cfg.m()
    }

    /// `f` on circle `k`.
    pub fn boundary_f(&self, k: usize) -> Vec<C64> {
        let rho = self.rho();
        let z0 = self.cfg.centers[k];
        self.tau.iter().zip(&self.traces[k].zmu).map(|(t, zm)| z0 + rho * t + rho * rho * zm).collect()
    }

    /// `f_ζ = 1 + ρ𝒵_kμ′` on circle `k`.
    pub fn boundary_fz(&self, k: usize) -> Vec<C64> {
        let rho = self.rho();
        self.traces[k].zmu_p.iter().map(|d| 1.0 + rho * d).collect()
    }

    /// `ρ·w_ζ` on circle `k` (finite at `ρ = 0`).
    pub fn boundary_rho_wz(&self, k: usize) -> Vec<C64> {
        let rho = self.rho();
        let tr = &self.traces[k];
        (0..self.nq).map(|l| tr.a[l] + rho * (tr.w0reg[l] + tr.znu_p[l])).collect()
    }

    /// `ρU` on circle `k`.
    pub fn boundary_rho_u(&self, k: usize) -> Vec<C64> {
        let rho = self.rho();
        let tr = &self.traces[k];
        (0..self.nq).map(|l| (tr.a[l] + rho * tr.b[l]) / (1.0 + rho * tr.zmu_p[l])).collect()
    }

    /// `U` on circle `k`; requires `ρ ≠ 0`.
    pub fn boundary_u(&self, k: usize) -> Result<Vec<C64>> {
        let rho = self.rho();
        if rho == 0.0 {
            return Err(VortexError::Domain("the relative velocity is unbounded at ρ = 0".into()));
        }
        Ok(self.boundary_rho_u(k).into_iter().map(|v| v / rho).collect())
    }

    /// Smallest `|f_ζ|` over all boundary nodes.
    pub fn min_boundary_fz(&self) -> f64 {
        (0..self.m())
            .flat_map(|k| self.boundary_fz(k))
            .map(|v| v.norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn check_exterior(&self, zeta: C64) -> Result<()> {
        let rho = self.rho().abs();
        for (j, z) in self.cfg.centers.iter().enumerate() {
            if (zeta - z).norm() <= rho {
                return Err(VortexError::Domain(format!("point {zeta} is not exterior to circle {}", j + 1)));
            }
        }
        Ok(())
    }

    fn z_of(&self, modes: &[Vec<C64>], zeta: C64) -> Result<C64> {
        let refs: Vec<&[C64]> = modes.iter().map(|m| m.as_slice()).collect();
        field_z_exact(self.rho(), &self.cfg.centers, &refs, zeta)
    }

    /// `f(ζ)` at an exterior point.
    pub fn f(&self, zeta: C64) -> Result<C64> {
        self.check_exterior(zeta)?;
        let rho = self.rho();
        Ok(zeta + rho * rho * self.z_of(&self.mu_modes, zeta)?)
    }

    /// `f_ζ(ζ)` at an exterior point.
    pub fn f_zeta(&self, zeta: C64) -> Result<C64> {
        self.check_exterior(zeta)?;
        Ok(1.0 + self.rho() * self.z_of(&self.mu_p_modes, zeta)?)
    }

    /// `w(ζ) − w⁰(ζ) = ρ𝒵^ρν`.
    pub fn w_minus_w0(&self, zeta: C64) -> Result<C64> {
        self.check_exterior(zeta)?;
        Ok(self.rho() * self.z_of(&self.nu_modes, zeta)?)
    }

    /// `w_ζ − w⁰_ζ = 𝒵^ρν′`.
    pub fn w1_zeta(&self, zeta: C64) -> Result<C64> {
        self.check_exterior(zeta)?;
        self.z_of(&self.nu_p_modes, zeta)
    }

    /// `w_ζ(ζ)`.
    pub fn w_zeta(&self, zeta: C64) -> Result<C64> {
        let (_, w0z) = build_w0(&self.cfg, zeta)?;
        Ok(w0z + self.w1_zeta(zeta)?)
    }

    /// `W = w + iΩ|f|²/2 − cf` with `w⁰` on principal branches.
    pub fn big_w(&self, zeta: C64) -> Result<C64> {
        let (w0, _) = build_w0(&self.cfg, zeta)?;
        let f = self.f(zeta)?;
        Ok(w0 + self.w_minus_w0(zeta)? + I * self.cfg.angular_velocity * f.norm_sqr() / 2.0 - self.cfg.wave_speed * f)
    }

    /// `U = w_ζ/f_ζ + iΩ conj(f) − c`.
    pub fn u(&self, zeta: C64) -> Result<C64> {
        let f = self.f(zeta)?;
        Ok(self.w_zeta(zeta)? / self.f_zeta(zeta)? + I * self.cfg.angular_velocity * f.conj() - self.cfg.wave_speed)
    }
}

/// Fields of a state at the default quadrature size.
pub fn assemble_flow(u: &HollowState) -> Result<FlowFields> {
    FlowFields::new(u)
}

/// Grid values of `(𝓐, 𝓑)`, one real array per vortex.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Residual {
    /// Largest absolute grid value.
    pub fn sup(&self) -> f64 {
        self.a.iter().chain(&self.b).flatten().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn nq(&self) -> usize {
        self.a.first().map_or(0, |v| v.len())
    }
}

/// `(𝓐, 𝓑)` from precomputed fields.
pub fn residual_from_fields(fields: &FlowFields) -> Result<Residual> {
    let rho = fields.rho();
    let u = &fields.state;
    let m = fields.m();
    let mut a_out = Vec::with_capacity(m);
    let mut b_out = Vec::with_capacity(m);
    for k in 0..m {
        let tr = &fields.traces[k];
        let mut ak = Vec::with_capacity(fields.nq);
        let mut bk = Vec::with_capacity(fields.nq);
        for l in 0..fields.nq {
            let t = fields.tau[l];
            let (a, b, d) = (tr.a[l], tr.b[l], tr.zmu_p[l]);
            let den = (1.0 + rho * d).norm_sqr();
            if den.sqrt() <= MIN_CONFORMAL_DERIVATIVE {
                return Err(VortexError::Domain(format!(
                    "|1 + ρ𝒵μ′| vanishes on circle {}; the state left the admissible set",
                    k + 1
                )));
            }
            ak.push((t * b).re);
            let num = 2.0 * (a.conj() * b).re + rho * b.norm_sqr() - a.norm_sqr() * (2.0 * d.re + rho * d.norm_sqr());
            bk.push(num / den - u.q[k]);
        }
        a_out.push(ak);
        b_out.push(bk);
    }
    Ok(Residual { a: a_out, b: b_out })
}

/// `𝓕(u, ρ)` on `N_q` nodes per circle.
pub fn residual(u: &HollowState, nq: usize) -> Result<Residual> {
    residual_from_fields(&FlowFields::with_nq(u, nq)?)
}

/// Kinematic residuals `𝓐_k` at the default quadrature size.
pub fn kinematic_residual(u: &HollowState) -> Result<Vec<Vec<f64>>> {
    Ok(residual(u, u.default_nq())?.a)
}

/// Bernoulli residuals `𝓑_k` at the default quadrature size.
pub fn bernoulli_residual(u: &HollowState) -> Result<Vec<Vec<f64>>> {
    Ok(residual(u, u.default_nq())?.b)
}

/// Fourier projection of a residual: `𝓐_k` on modes `0..=n`, `𝓑_k` on modes `0..=n+1`.
pub fn residual_series(r: &Residual, n: usize) -> (Vec<RealSeries>, Vec<RealSeries>) {
    let a = r.a.iter().map(|g| RealSeries::from_real_grid(g, n)).collect();
    let b = r.b.iter().map(|g| RealSeries::from_real_grid(g, n + 1)).collect();
    (a, b)
}

/// Bernoulli constant `q_k = sqrt(γ_k²/4π² + ρQ_k)/|ρ|`.
pub fn q_from_state(u: &HollowState, k: usize) -> Result<f64> {
    if u.rho == 0.0 {
        return Err(VortexError::Domain("q_k is undefined at ρ = 0".into()));
    }
    let g = u.cfg().circulations[k];
    let rad = g * g / (4.0 * PI * PI) + u.rho * u.q[k];
    if !(rad > 0.0) {
        return Err(VortexError::Domain(format!("nonpositive Bernoulli radicand {rad} on vortex {}", k + 1)));
    }
    Ok(rad.sqrt() / u.rho.abs())
}

/// `∮ w_ζ dζ` over circle `k`, counterclockwise, by the trapezoid rule.
pub fn circulation_from_fields(fields: &FlowFields, k: usize) -> f64 {
    // w_ζ dζ = ρw_ζ · iτ dθ
    let rwz = fields.boundary_rho_wz(k);
    let s: C64 = rwz.iter().zip(&fields.tau).map(|(v, t)| v * I * t).sum();
    (s * (2.0 * PI / fields.nq as f64)).re
}

/// Circulation about vortex `k`.
pub fn circulation(u: &HollowState, k: usize) -> Result<f64> {
    Ok(circulation_from_fields(&FlowFields::new(u)?, k))
}

/// Which identity map to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiKind {
    /// Translating class, `Ω = 0`.
    T,
    /// Rotating class, `c = 0`.
    R,
    /// Stationary class, `c = Ω = 0`.
    S,
}

impl PhiKind {
    pub fn for_steady_kind(kind: SteadyKind) -> Self {
        match kind {
            SteadyKind::Translating => PhiKind::T,
            SteadyKind::Rotating => PhiKind::R,
            SteadyKind::Stationary => PhiKind::S,
        }
    }

    /// Number of real components.
    pub fn dim(self) -> usize {
        match self {
            PhiKind::T | PhiKind::R => 1,
            PhiKind::S => 3,
        }
    }
}

/// Value of an identity map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiValue {
    T(f64),
    R(f64),
    S(C64, f64),
}

impl PhiValue {
    pub fn components(&self) -> Vec<f64> {
        match *self {
            PhiValue::T(x) | PhiValue::R(x) => vec![x],
            PhiValue::S(z, x) => vec![z.re, z.im, x],
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.components().into_iter().map(f64::abs).fold(0.0, f64::max)
    }
}

/// Per-vortex integrals `∮ K_k dτ` and `∮ K_k conj(f) dτ` (counterclockwise in `τ`), where
/// `K_k = ½𝓑_k f_ζ − conj(ρτw_ζ)/conj(f_ζ)·𝓐_k`.
pub fn phi_integrals(fields: &FlowFields, res: &Residual) -> Result<Vec<(C64, C64)>> {
    let nq = fields.nq;
    if res.nq() != nq || res.a.len() != fields.m() {
        return Err(VortexError::Input("residual grid does not match the fields".into()));
    }
    let h = 2.0 * PI / nq as f64;
    Ok((0..fields.m())
        .map(|k| {
            let fz = fields.boundary_fz(k);
            let rwz = fields.boundary_rho_wz(k);
            let f = fields.boundary_f(k);
            let mut s1 = ZERO;
            let mut s2 = ZERO;
            for l in 0..nq {
                let t = fields.tau[l];
                let kern = 0.5 * res.b[k][l] * fz[l] - (t * rwz[l]).conj() / fz[l].conj() * res.a[k][l];
                let dt = I * t * h;
                s1 += kern * dt;
                s2 += kern * f[l].conj() * dt;
            }
            (s1, s2)
        })
        .collect())
}

/// Identity maps `φ_t = Im Σ∮K`, `φ_r = Re Σ∮K conj f`, `φ_s = (Σ∮K, Re Σ∮K conj f)`.
pub fn hv_phi_from_fields(kind: PhiKind, res: &Residual, fields: &FlowFields) -> Result<PhiValue> {
    let (c, om) = (fields.cfg.wave_speed, fields.cfg.angular_velocity);
    let ok = match kind {
        PhiKind::T => om == 0.0,
        PhiKind::R => c == 0.0,
        PhiKind::S => c == 0.0 && om == 0.0,
    };
    if !ok {
        return Err(VortexError::Precondition(format!("identity map {kind:?} does not match c = {c}, Ω = {om}")));
    }
    let ints = phi_integrals(fields, res)?;
    let s1: C64 = ints.iter().map(|p| p.0).sum();
    let s2: C64 = ints.iter().map(|p| p.1).sum();
    Ok(match kind {
        PhiKind::T => PhiValue::T(s1.im),
        PhiKind::R => PhiValue::R(s2.re),
        PhiKind::S => PhiValue::S(s1, s2.re),
    })
}

/// Identity map for a given residual `(A, B)` and state `u`.
pub fn hv_phi(kind: PhiKind, res: &Residual, u: &HollowState) -> Result<PhiValue> {
    let fields = FlowFields::with_nq(u, res.nq())?;
    hv_phi_from_fields(kind, res, &fields)
}

/// Exact linearization of `𝓕` at a trivial state `(0, 0, 0, λ₀)` and `ρ = 0`.
#[derive(Clone, Debug)]
pub struct TrivialLinearization {
    pub cfg: VortexConfiguration,
    pub split: ParameterSplit,
    /// `∂V_k/∂λ_i` as complex numbers, indexed `[k][i]`.
    pub dv: Vec<Vec<C64>>,
}

/// Output of the linearized operator in coefficient form.
#[derive(Clone, Debug)]
pub struct LinearizedOutput {
    pub a: Vec<RealSeries>,
    pub b: Vec<RealSeries>,
}

/// Blocks `𝓐⁰_ν = Re(τ𝒞∂_τ·)`, `𝓑⁰_ν = (γ_k/π)Re(iτ𝒞∂_τ·)`, `𝓑⁰_μ = −(γ_k²/2π²)Re(𝒞∂_τ·)`,
/// `𝓑⁰_Q = −1`, `𝓐⁰_λ = Re(τ DV_k·)`, `𝓑⁰_λ = (γ_k/π)Re(iτ DV_k·)`.
pub fn linearized_trivial(cfg: &VortexConfiguration, split: &ParameterSplit) -> Result<TrivialLinearization> {
    let v = eval_pv_residual(cfg)?;
    let scale = cfg.velocity_scale();
    if v.iter().any(|x| x.norm() > 1e-9 * scale) {
        return Err(VortexError::Precondition("linearization requires a steady base configuration".into()));
    }
    let jac = crate::pointvortex::pv_jacobian(cfg, split)?;
    let dv = (0..cfg.m())
        .map(|k| (0..split.varying.len()).map(|i| C64::new(jac[(2 * k, i)], jac[(2 * k + 1, i)])).collect())
        .collect();
    Ok(TrivialLinearization { cfg: cfg.clone(), split: split.clone(), dv })
}

fn add_series(a: &mut RealSeries, b: &RealSeries, s: f64) {
    a.c0 += s * b.c0;
    if a.coeffs.len() < b.coeffs.len() {
        a.coeffs.resize(b.coeffs.len(), ZERO);
    }
    for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
        *x += s * y;
    }
}

impl TrivialLinearization {
    fn lambda_mode1(&self, k: usize, lambda_dot: &[f64]) -> C64 {
        self.dv[k].iter().zip(lambda_dot).map(|(d, l)| d * l).sum()
    }

    /// `D𝓕(u⁰, 0)[μ̇, ν̇, Q̇, λ̇]`.
    pub fn apply(
        &self,
        mu_dot: &DensityVector,
        nu_dot: &DensityVector,
        q_dot: &[f64],
        lambda_dot: &[f64],
    ) -> LinearizedOutput {
        let m = self.cfg.m();
        let n = mu_dot.n();
        let mut a = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        for k in 0..m {
            let g = self.cfg.circulations[k];
            let z = self.lambda_mode1(k, lambda_dot);
            let mut ak = RealSeries::zeros(n + 1);
            add_series(&mut ak, &apply_multiplier(MultiplierKind::ReTauCDtau, &nu_dot[k]), 1.0);
            // Re(τz) has mode-1 coefficient z/2
            ak.coeffs[0] += z / 2.0;
            let mut bk = RealSeries::zeros(n + 1);
            add_series(&mut bk, &apply_multiplier(MultiplierKind::ReITauCDtau, &nu_dot[k]), g / PI);
            add_series(&mut bk, &apply_multiplier(MultiplierKind::ReCDtau, &mu_dot[k]), -g * g / (2.0 * PI * PI));
            bk.c0 -= q_dot[k];
            bk.coeffs[0] += g / PI * I * z / 2.0;
            a.push(ak);
            b.push(bk);
        }
        LinearizedOutput { a, b }
    }

    /// Row-reduced operator `𝓛_k = 𝓑_k − (γ_k/π)·𝓡𝓐_k`, where `𝓡` multiplies mode `m > 0` by `−i`;
    /// it eliminates `ν̇`.
    pub fn row_reduced(&self, mu_dot: &DensityVector, q_dot: &[f64], lambda_dot: &[f64]) -> Vec<RealSeries> {
        let m = self.cfg.m();
        let zero_nu = DensityVector::zeros(m, mu_dot.n());
        let out = self.apply(mu_dot, &zero_nu, q_dot, lambda_dot);
        out.b
            .into_iter()
            .zip(out.a)
            .enumerate()
            .map(|(k, (mut bk, ak))| {
                let g = self.cfg.circulations[k];
                let rotated = RealSeries { c0: 0.0, coeffs: ak.coeffs.iter().map(|c| -I * c).collect() };
                add_series(&mut bk, &rotated, -g / PI);
                bk
            })
            .collect()
    }
}

/// Laurent coefficients of the far field about each center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    /// `f − id`: entry `p−1` is the coefficient of `(ζ−ζ_k)^{−p}`.
    pub f: Vec<Vec<C64>>,
    /// `w_ζ − w⁰_ζ`: entry `p−1` is the coefficient of `(ζ−ζ_k)^{−p−1}`.
    pub w_zeta: Vec<Vec<C64>>,
}

/// Own-circle Laurent coefficients of `f − id` and `w_ζ − w⁰_ζ`.
pub fn far_field_coeffs(u: &HollowState) -> FarField {
    let rho = u.rho;
    let f = u
        .mu
        .densities
        .iter()
        .map(|d| {
            d.coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| -rho.powi(i as i32 + 3) * c.conj())
                .collect()
        })
        .collect();
    let w_zeta = u
        .nu
        .densities
        .iter()
        .map(|d| {
            d.coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| (i + 1) as f64 * rho.powi(i as i32 + 2) * c.conj())
                .collect()
        })
        .collect();
    FarField { f, w_zeta }
}

/// Derivative of the trace of `f_ζ` along the circle: `∂_τ(f_ζ(ζ_k+ρτ))` on the nodes.
pub fn boundary_fz_derivative(fields: &FlowFields, k: usize) -> Vec<C64> {
    let fz = fields.boundary_fz(k);
    let modes = grid_to_modes(&fz);
    modes_to_grid(&crate::spectral::derivative_modes(&modes))
}

/// Mode coefficient helper used by tests and diagnostics.
pub fn grid_mode(values: &[C64], m: i64) -> C64 {
    grid_to_modes(values)[mode_index(m, values.len())]
}

/// State with every density replaced by `d ↦ d(−·)` and `ν` negated, `Q` negated and `ρ ↦ −ρ`.
pub fn parity_image(u: &HollowState) -> HollowState {
    let refl = |v: &DensityVector, s: f64| DensityVector {
        densities: v.densities.iter().map(|d| d.reflected().scaled(s)).collect(),
    };
    HollowState {
        mu: refl(&u.mu, 1.0),
        nu: refl(&u.nu, -1.0),
        q: u.q.iter().map(|q| -q).collect(),
        rho: -u.rho,
        ..u.clone()
    }
}

/// Convenience: single density with given coefficients.
pub fn density(coeffs: &[C64]) -> SpectralDensity {
    SpectralDensity::from_coeffs(coeffs.to_vec())
}
