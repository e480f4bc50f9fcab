//! Monitors for hollow-vortex states.
//!
//! Boundary quantities are trapezoid sums over the images `Γ_k = f(∂B_ρ(ζ_k))`
//! of the quadrature nodes. Area-type quantities use Green reductions:
//! `A_k = (1/2i)∮ z̄ dz`, `I_k = (1/4i)∮ z z̄² dz`, `∫∫z = (1/2i)∮ |z|² dz`.
//! The excess angular momentum is a domain integral, evaluated by a smooth
//! partition into annuli around each circle plus a large disk, with an exact
//! tail beyond the disk from the Laurent coefficients at infinity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::hollowvortex::{
    boundary_fz_derivative, circulation_from_fields, hv_phi_from_fields, q_from_state, residual_from_fields,
    FlowFields, HollowState, PhiKind, Residual,
};
use crate::pointvortex::{eval_pv_residual, SteadyKind, VortexConfiguration};
use crate::spectral::{derivative_modes, grid_to_modes, mode_index, modes_to_grid, nodes};
use crate::{Result, VortexError, C64, SENTINEL};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Monitors of one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_conf: f64,
    pub n_vel: f64,
    pub perimeters: Vec<f64>,
    pub areas: Vec<f64>,
    pub vacuum_area: f64,
    pub moment_inertia: f64,
    /// Excess angular momentum; absent when not requested.
    #[serde(rename = "excess_L")]
    pub excess_l: Option<f64>,
    pub circulations: Vec<f64>,
    pub speed_identity_resid: Vec<f64>,
    pub flux_spread: Vec<f64>,
    pub winding_ok: bool,
    pub boundary_injective: bool,
    pub mutually_exterior: bool,
    pub phi_resid: f64,
    /// Number of zeros of `f_ζ` in the fluid domain from the argument principle.
    pub winding_number: f64,
    /// Bernoulli constants `q_k` from `Q_k`.
    pub q: Vec<f64>,
    /// `max |U| − min |U|` on each boundary.
    pub speed_spread: Vec<f64>,
    /// Largest grid value of `|𝓐|`, `|𝓑|`.
    pub residual_sup: f64,
    /// Smallest `|f_ζ|` on the boundary.
    pub min_fz: f64,
    /// Largest radial deviation of any `Γ_k` from the circle `|ζ − ζ_k| = |ρ|`, divided by `|ρ|`.
    pub non_circularity: f64,
    /// `M·sup|U| − |c|`.
    pub wave_speed_margin: f64,
    /// Relative residual of the momentum identity, for rotating states.
    pub momentum_identity_resid: Option<f64>,
}

/// Which expensive monitors to compute.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOptions {
    pub excess_l: bool,
    pub momentum_identity: bool,
    /// How `L` is evaluated when requested.
    #[serde(default)]
    pub l_method: LMethod,
}

/// Evaluation route for the excess angular momentum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LMethod {
    /// Area quadrature over the fluid domain.
    #[default]
    Domain,
    /// Boundary contour form; cheap, used for monitoring.
    Boundary,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self { excess_l: false, momentum_identity: false, l_method: LMethod::Domain }
    }
}

impl DiagnosticsOptions {
    pub fn full() -> Self {
        Self { excess_l: true, momentum_identity: true, l_method: LMethod::Domain }
    }
}

/// Boundary curve data for one vortex, positively oriented.
#[derive(Clone, Debug)]
pub struct BoundaryCurve {
    /// `z_l = f(ζ_k + ρτ_l)`.
    pub z: Vec<C64>,
    /// `dz/dθ` at the nodes, counterclockwise.
    pub dz: Vec<C64>,
}

fn orientation(rho: f64) -> f64 {
    if rho < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Boundary curves `Γ_k` with `dz/dθ = f_ζ·iρτ`, reoriented counterclockwise in `ζ`.
pub fn boundary_curves(fields: &FlowFields) -> Vec<BoundaryCurve> {
    let rho = fields.rho();
    let s = orientation(rho);
    (0..fields.m())
        .map(|k| {
            let z = fields.boundary_f(k);
            let fz = fields.boundary_fz(k);
            let dz = fz.iter().zip(&fields.tau).map(|(d, t)| s * d * I * rho * t).collect();
            BoundaryCurve { z, dz }
        })
        .collect()
}

fn contour(curve: &BoundaryCurve, g: impl Fn(C64) -> C64) -> C64 {
    let h = 2.0 * PI / curve.z.len() as f64;
    curve.z.iter().zip(&curve.dz).map(|(z, dz)| g(*z) * dz).sum::<C64>() * h
}

/// Perimeter, area, first moment and moment of inertia of each region bounded by `Γ_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGeometry {
    pub perimeters: Vec<f64>,
    pub areas: Vec<f64>,
    pub centroids: Vec<C64>,
    pub vacuum_area: f64,
    pub moment_inertia: f64,
}

/// Green reductions of the area quantities.
pub fn boundary_geometry(fields: &FlowFields) -> BoundaryGeometry {
    let curves = boundary_curves(fields);
    let h = 2.0 * PI / fields.nq as f64;
    let mut out = BoundaryGeometry {
        perimeters: Vec::new(),
        areas: Vec::new(),
        centroids: Vec::new(),
        vacuum_area: 0.0,
        moment_inertia: 0.0,
    };
    for c in &curves {
        let per = c.dz.iter().map(|d| d.norm()).sum::<f64>() * h;
        let area = (contour(c, |z| z.conj()) / (2.0 * I)).re;
        let first = contour(c, |z| C64::new(z.norm_sqr(), 0.0)) / (2.0 * I);
        let inertia = (contour(c, |z| z * z.conj() * z.conj()) / (4.0 * I)).re;
        out.perimeters.push(per);
        out.areas.push(area);
        out.centroids.push(first / area);
        out.vacuum_area += area;
        out.moment_inertia += inertia;
    }
    out
}

/// `N_conf = sup|f_ζ| + sup |ζ−ζ′|/|f(ζ)−f(ζ′)| + 1/min dist(Γ_j, Γ_k)` over boundary nodes.
pub fn n_conf(fields: &FlowFields) -> f64 {
    let m = fields.m();
    let rho = fields.rho();
    let sup_fz = (0..m).flat_map(|k| fields.boundary_fz(k)).map(|v| v.norm()).fold(0.0, f64::max);
    let pts: Vec<(usize, C64, C64)> = (0..m)
        .flat_map(|k| {
            let z = fields.boundary_f(k);
            let c = fields.cfg.centers[k];
            fields.tau.iter().zip(z).map(move |(t, zz)| (k, c + rho * t, zz)).collect::<Vec<_>>()
        })
        .collect();
    let mut chord = 0.0f64;
    let mut gap = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dz = (pts[i].2 - pts[j].2).norm();
            let dzeta = (pts[i].1 - pts[j].1).norm();
            if dz == 0.0 {
                return SENTINEL;
            }
            chord = chord.max(dzeta / dz);
            if pts[i].0 != pts[j].0 {
                gap = gap.min(dz);
            }
        }
    }
    let gap_term = if m > 1 { 1.0 / gap } else { 0.0 };
    let total = sup_fz + chord + gap_term;
    if total.is_finite() {
        total
    } else {
        SENTINEL
    }
}

/// `N_vel = sup(|U| + 1/|U|)` over boundary nodes.
pub fn n_vel(fields: &FlowFields) -> Result<f64> {
    let mut sup = 0.0f64;
    for k in 0..fields.m() {
        for v in fields.boundary_u(k)? {
            let s = v.norm();
            if s == 0.0 {
                return Ok(SENTINEL);
            }
            sup = sup.max(s + 1.0 / s);
        }
    }
    Ok(if sup.is_finite() { sup } else { SENTINEL })
}

/// Injectivity and winding checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingReport {
    pub winding_ok: bool,
    pub winding_number: f64,
    pub boundary_injective: bool,
    pub mutually_exterior: bool,
}

fn segments_cross(p1: C64, p2: C64, q1: C64, q2: C64) -> bool {
    let cross = |a: C64, b: C64| a.re * b.im - a.im * b.re;
    let d1 = cross(p2 - p1, q1 - p1);
    let d2 = cross(p2 - p1, q2 - p1);
    let d3 = cross(q2 - q1, p1 - q1);
    let d4 = cross(q2 - q1, p2 - q1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// True when the closed polygon has no pair of crossing non-adjacent edges.
pub fn polygon_is_simple(z: &[C64]) -> bool {
    let n = z.len();
    for i in 0..n {
        let (a, b) = (z[i], z[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(a, b, z[j], z[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Winding number of a closed polygon about a point, from summed argument increments.
pub fn polygon_winding(z: &[C64], p: C64) -> f64 {
    let n = z.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = z[i] - p;
        let b = z[(i + 1) % n] - p;
        total += (b / a).arg();
    }
    total / (2.0 * PI)
}

fn interior_point(z: &[C64], centroid: C64) -> Option<C64> {
    if polygon_winding(z, centroid).abs() > 0.5 {
        return Some(centroid);
    }
    let n = z.len();
    for i in 0..n / 2 {
        let p = 0.5 * (z[i] + z[i + n / 2]);
        if polygon_winding(z, p).abs() > 0.5 {
            return Some(p);
        }
    }
    None
}

/// Argument-principle winding of `f_ζ`, boundary simplicity and mutual exteriority.
pub fn winding_injectivity(fields: &FlowFields) -> WindingReport {
    let m = fields.m();
    let h = 2.0 * PI / fields.nq as f64;
    let mut zeros = 0.0;
    for k in 0..m {
        let fz = fields.boundary_fz(k);
        let dfz = boundary_fz_derivative(fields, k);
        let s: C64 = dfz.iter().zip(&fz).zip(&fields.tau).map(|((d, f), t)| d / f * I * t).sum::<C64>() * h;
        // Circles are traversed clockwise as parts of the fluid boundary.
        zeros -= orientation(fields.rho()) * (s / (2.0 * PI * I)).re;
    }
    let winding_ok = zeros.is_finite() && zeros.abs() < 0.25;
    let curves: Vec<Vec<C64>> = (0..m).map(|k| fields.boundary_f(k)).collect();
    let chord_finite = n_conf(fields) < SENTINEL;
    let simple = curves.iter().all(|z| polygon_is_simple(z));
    let geom = boundary_geometry(fields);
    let mut exterior = true;
    for k in 0..m {
        match interior_point(&curves[k], geom.centroids[k]) {
            Some(p) => {
                for j in 0..m {
                    if j != k && polygon_winding(&curves[j], p).abs() > 0.5 {
                        exterior = false;
                    }
                }
            }
            None => exterior = false,
        }
    }
    for k in 0..m {
        for j in 0..m {
            if j != k && curves[j].iter().any(|&p| polygon_winding(&curves[k], p).abs() > 0.5) {
                exterior = false;
            }
        }
    }
    WindingReport {
        winding_ok,
        winding_number: zeros,
        boundary_injective: chord_finite && simple,
        mutually_exterior: exterior,
    }
}

/// `|q_k|Γ_k| − |γ_k − 2ΩA_k|| / |γ_k|`.
pub fn speed_identity_residual(fields: &FlowFields, k: usize) -> Result<f64> {
    let q = q_from_state(&fields.state, k)?;
    let geom = boundary_geometry(fields);
    let g = fields.cfg.circulations[k];
    let om = fields.cfg.angular_velocity;
    Ok((q * geom.perimeters[k] - (g - 2.0 * om * geom.areas[k]).abs()).abs() / g.abs())
}

/// Margin `M·sup|U| − |c|` of the wave-speed bound.
pub fn wave_speed_check(fields: &FlowFields) -> Result<f64> {
    let mut sup = 0.0f64;
    for k in 0..fields.m() {
        sup = fields.boundary_u(k)?.iter().map(|v| v.norm()).fold(sup, f64::max);
    }
    Ok(fields.m() as f64 * sup - fields.cfg.wave_speed.abs())
}

/// `max − min` of `Im W` along boundary `k`, by spectral integration of `d Im W/dθ`.
pub fn flux_spread(fields: &FlowFields, k: usize) -> f64 {
    let nq = fields.nq;
    let rho = fields.rho();
    let (c, om) = (fields.cfg.wave_speed, fields.cfg.angular_velocity);
    let rwz = fields.boundary_rho_wz(k);
    let fz = fields.boundary_fz(k);
    let f = fields.boundary_f(k);
    // dW/dθ = (w_ζ − c f_ζ)·iρτ + (iΩ/2)·d|f|²/dθ
    let deriv: Vec<C64> = (0..nq)
        .map(|l| {
            let t = fields.tau[l];
            let dfdth = fz[l] * I * rho * t;
            let dw = rwz[l] * I * t - c * dfdth;
            let dabs = 2.0 * (f[l].conj() * dfdth).re;
            C64::new(dw.im + 0.5 * om * dabs, 0.0)
        })
        .collect();
    let modes = grid_to_modes(&deriv);
    let mut anti = vec![ZERO; nq];
    for (i, c) in modes.iter().enumerate() {
        let m = crate::spectral::mode_number(i, nq);
        if m != 0 {
            anti[i] = c / (I * m as f64);
        }
    }
    let vals = modes_to_grid(&anti);
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.re), hi.max(v.re)));
    hi - lo
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on the Legendre recurrence.
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss nodes and weights on the given panel breakpoints.
fn composite_gauss(breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let mut out = Vec::new();
    for p in breaks.windows(2) {
        let (a, b) = (p[0], p[1]);
        let half = 0.5 * (b - a);
        for (xi, wi) in x.iter().zip(&w) {
            out.push((a + half * (xi + 1.0), half * wi));
        }
    }
    out
}

fn uniform_breaks(a: f64, b: f64, h: f64) -> Vec<f64> {
    let n = ((b - a) / h).ceil().max(1.0) as usize;
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

fn smooth_step(s: f64) -> f64 {
    // 1 for s ≤ 0, 0 for s ≥ 1, C^∞ in between.
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let psi = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let a = psi(1.0 - s);
    a / (a + psi(s))
}

/// Integrand `f·conj(f_ζ)·(w_ζ − w⁰_ζ)` of the excess angular momentum.
fn l_integrand(fields: &FlowFields, zeta: C64) -> Result<C64> {
    Ok(fields.f(zeta)? * fields.f_zeta(zeta)?.conj() * fields.w1_zeta(zeta)?)
}

/// Excess angular momentum from the domain integral over `𝒟_ρ ∩ B_R` plus the exact tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessAngularMomentum {
    pub value: f64,
    pub outer_radius: f64,
    /// Change of the value under the last doubling of `R`.
    pub last_change: f64,
    pub converged: bool,
}

fn l_at_radius(fields: &FlowFields, r_outer: f64) -> Result<f64> {
    let cfg = &fields.cfg;
    let m = cfg.m();
    let rho = fields.rho().abs();
    let gap = if m > 1 { cfg.min_gap() } else { 4.0 * rho.max(1.0) };
    let r2 = rho + 0.9 * (0.5 * gap - rho);
    if r2 >= 0.5 * gap {
        return Err(VortexError::Domain("circles too close for the annular partition".into()));
    }
    let r1 = rho + 0.3 * (r2 - rho);
    let w = r2 - r1;
    let nth = {
        let need = (8.0 * 2.0 * PI * r2 / w).max(4.0 * fields.nq as f64).max(128.0);
        need.ceil() as usize
    };
    let th: Vec<C64> = nodes(nth);
    let hth = 2.0 * PI / nth as f64;
    let chi = |z: C64, k: usize| smooth_step(((z - cfg.centers[k]).norm() - r1) / w);
    let mut total = ZERO;
    // Annuli, weighted by the bump.
    for k in 0..m {
        let mut breaks = uniform_breaks(rho, r1, (r1 - rho).max(1e-300) / 2.0);
        breaks.pop();
        breaks.extend(uniform_breaks(r1, r2, w / 6.0));
        for (r, wr) in composite_gauss(&breaks, 12) {
            for t in &th {
                let z = cfg.centers[k] + r * t;
                total += l_integrand(fields, z)? * chi(z, k) * r * wr * hth;
            }
        }
    }
    // Disk around the origin, weighted by the complement.
    let r_in = cfg.centers.iter().map(|z| z.norm()).fold(0.0, f64::max) + r2;
    if r_outer < r_in {
        return Err(VortexError::Domain("outer radius does not contain the annuli".into()));
    }
    let mut breaks = uniform_breaks(0.0, r_in, w / 4.0);
    let mut r = r_in;
    while r < r_outer {
        let next = (r * 1.25).min(r_outer);
        breaks.push(next);
        r = next;
    }
    let nth_disk = {
        let need = (8.0 * 2.0 * PI * r_in / w).max(nth as f64);
        need.ceil() as usize
    };
    let thd = nodes(nth_disk);
    let hthd = 2.0 * PI / nth_disk as f64;
    for (r, wr) in composite_gauss(&breaks, 12) {
        for t in &thd {
            let z = r * t;
            let mut weight = 1.0;
            let mut inside = false;
            for k in 0..m {
                let d = (z - cfg.centers[k]).norm();
                if d <= r1 {
                    inside = true;
                    break;
                }
                weight -= chi(z, k);
            }
            if inside || weight == 0.0 {
                continue;
            }
            total += l_integrand(fields, z)? * weight * r * wr * hthd;
        }
    }
    total += l_tail(fields, r_outer)?;
    Ok(total.im)
}

/// `∫_{|ζ|>R} f conj(f_ζ) w¹_ζ` from Laurent coefficients at infinity:
/// `−π Σ_{b≤−1} Σ_a F_a conj(F_b) G_{b−a−1} R^{2b}`.
fn l_tail(fields: &FlowFields, r: f64) -> Result<C64> {
    let n = 256;
    let t = nodes(n);
    let fv = t.iter().map(|tt| fields.f(r * tt)).collect::<Result<Vec<_>>>()?;
    let gv = t.iter().map(|tt| fields.w1_zeta(r * tt)).collect::<Result<Vec<_>>>()?;
    let fm = grid_to_modes(&fv);
    let gm = grid_to_modes(&gv);
    let kmax = (n / 2 - 2) as i64;
    let fa = |a: i64| fm[mode_index(a, n)] / r.powi(a as i32);
    let ga = |a: i64| gm[mode_index(a, n)] / r.powi(a as i32);
    let mut tail = ZERO;
    for b in -kmax..=-1 {
        let fb = fa(b).conj();
        if fb == ZERO {
            continue;
        }
        for a in -kmax..=1 {
            let mm = b - a - 1;
            if mm < -kmax || mm > -2 {
                continue;
            }
            tail += fa(a) * fb * ga(mm) * r.powi(2 * b as i32);
        }
    }
    Ok(-PI * tail)
}

/// Excess angular momentum `L = Im ∫_{𝒟_ρ} f conj(f_ζ) ∂_ζ(w − w⁰)`; `R` starts at `4·max|ζ_k|`
/// and doubles until the value changes by less than `1e-6`.
pub fn excess_angular_momentum(fields: &FlowFields) -> Result<ExcessAngularMomentum> {
    if fields.rho() == 0.0 {
        return Ok(ExcessAngularMomentum { value: 0.0, outer_radius: 0.0, last_change: 0.0, converged: true });
    }
    let zmax = fields.cfg.centers.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let gap = if fields.m() > 1 { fields.cfg.min_gap() } else { 4.0 };
    let mut r = (4.0 * zmax).max(zmax + 0.5 * gap).max(4.0 * fields.rho().abs());
    let mut prev = l_at_radius(fields, r)?;
    for _ in 0..6 {
        r *= 2.0;
        let val = l_at_radius(fields, r)?;
        let change = (val - prev).abs();
        if change < 1e-6 {
            return Ok(ExcessAngularMomentum { value: val, outer_radius: r, last_change: change, converged: true });
        }
        prev = val;
    }
    Ok(ExcessAngularMomentum { value: prev, outer_radius: r, last_change: f64::NAN, converged: false })
}

/// Boundary form `L = ½ Re Σ_k ∮_{ccw} |f|² (w_ζ − w⁰_ζ) dζ`, used as an independent check.
pub fn excess_angular_momentum_boundary(fields: &FlowFields) -> f64 {
    let rho = fields.rho();
    let s = orientation(rho);
    let h = 2.0 * PI / fields.nq as f64;
    let mut acc = ZERO;
    for k in 0..fields.m() {
        let f = fields.boundary_f(k);
        let tr = &fields.traces[k];
        for l in 0..fields.nq {
            acc += f[l].norm_sqr() * tr.znu_p[l] * I * rho * fields.tau[l] * s * h;
        }
    }
    0.5 * acc.re
}

/// Terms of the momentum identity
/// `L − ΩI + ½Re Σ∮_{ccw}|f|²w⁰_ζ dζ + (1/4Ω)Im∮_{∂𝒟} zU²dz − (Σγ)²/(8πΩ) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumIdentity {
    pub excess_l: f64,
    pub omega_inertia: f64,
    pub potential_term: f64,
    pub boundary_term: f64,
    pub circulation_term: f64,
    /// Residual divided by the largest term.
    pub relative_residual: f64,
}

/// Momentum identity with `L` from the domain quadrature.
pub fn momentum_identity_residual(fields: &FlowFields) -> Result<MomentumIdentity> {
    let l = excess_angular_momentum(fields)?.value;
    momentum_identity_with_l(fields, l)
}

/// Momentum identity for a given value of `L`.
pub fn momentum_identity_with_l(fields: &FlowFields, l: f64) -> Result<MomentumIdentity> {
    let cfg = &fields.cfg;
    let om = cfg.angular_velocity;
    if om == 0.0 || cfg.wave_speed != 0.0 {
        return Err(VortexError::Precondition("momentum identity needs a rotating state".into()));
    }
    let moment: C64 = cfg.circulations.iter().zip(&cfg.centers).map(|(g, z)| g * z).sum();
    let scale: f64 = cfg.circulations.iter().zip(&cfg.centers).map(|(g, z)| (g * z).norm()).sum();
    if moment.norm() > 1e-12 * scale.max(1.0) {
        return Err(VortexError::Precondition(format!("Σγ_kζ_k = {moment} is not zero")));
    }
    let rho = fields.rho();
    let s = orientation(rho);
    let h = 2.0 * PI / fields.nq as f64;
    let geom = boundary_geometry(fields);
    let mut pot = ZERO;
    let mut bnd = ZERO;
    for k in 0..fields.m() {
        let f = fields.boundary_f(k);
        let fz = fields.boundary_fz(k);
        let tr = &fields.traces[k];
        let u = fields.boundary_u(k)?;
        for l in 0..fields.nq {
            let dzeta = I * rho * fields.tau[l] * s * h;
            let w0z = tr.a[l] / rho + tr.w0reg[l];
            pot += f[l].norm_sqr() * w0z * dzeta;
            // the fluid boundary runs clockwise around each hole
            bnd -= f[l] * u[l] * u[l] * fz[l] * dzeta;
        }
    }
    let gsum: f64 = cfg.circulations.iter().sum();
    let terms = [l, -om * geom.moment_inertia, 0.5 * pot.re, bnd.im / (4.0 * om), -gsum * gsum / (8.0 * PI * om)];
    let total: f64 = terms.iter().sum();
    let big = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
    Ok(MomentumIdentity {
        excess_l: terms[0],
        omega_inertia: terms[1],
        potential_term: terms[2],
        boundary_term: terms[3],
        circulation_term: terms[4],
        relative_residual: total.abs() / big.max(f64::MIN_POSITIVE),
    })
}

/// Largest radial deviation `||f(ζ_k+ρτ) − ζ_k| − |ρ||` of any `Γ_k` from the circle it
/// desingularizes, over `|ρ|`.
pub fn non_circularity(fields: &FlowFields) -> f64 {
    let rho = fields.rho().abs();
    (0..fields.m())
        .map(|k| {
            let c = fields.cfg.centers[k];
            fields.boundary_f(k).iter().map(|z| ((z - c).norm() - rho).abs()).fold(0.0, f64::max) / rho
        })
        .fold(0.0, f64::max)
}

/// All monitors of a state at its default quadrature size.
pub fn diagnose(u: &HollowState, opts: DiagnosticsOptions) -> Result<DiagnosticsReport> {
    let fields = FlowFields::new(u)?;
    diagnose_fields(&fields, opts)
}

/// All monitors from prebuilt fields.
pub fn diagnose_fields(fields: &FlowFields, opts: DiagnosticsOptions) -> Result<DiagnosticsReport> {
    let u = &fields.state;
    if u.rho == 0.0 {
        return Err(VortexError::Domain("diagnostics need a nonzero radius".into()));
    }
    let m = fields.m();
    let res: Residual = residual_from_fields(fields)?;
    let geom = boundary_geometry(fields);
    let wind = winding_injectivity(fields);
    let phi_resid = match fields.cfg.steady_kind() {
        Ok(kind) => hv_phi_from_fields(PhiKind::for_steady_kind(kind), &res, fields)?.magnitude(),
        Err(_) => SENTINEL,
    };
    let mut q = Vec::with_capacity(m);
    let mut speed_spread = Vec::with_capacity(m);
    let mut sid = Vec::with_capacity(m);
    for k in 0..m {
        let qk = q_from_state(u, k).unwrap_or(f64::NAN);
        q.push(if qk.is_finite() { qk } else { SENTINEL });
        let speeds: Vec<f64> = fields.boundary_u(k)?.iter().map(|v| v.norm()).collect();
        let (lo, hi) = speeds.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        speed_spread.push(hi - lo);
        sid.push(speed_identity_residual(fields, k).unwrap_or(SENTINEL));
    }
    let excess_l = match (opts.excess_l, opts.l_method) {
        (false, _) => None,
        (true, LMethod::Domain) => Some(excess_angular_momentum(fields)?.value),
        (true, LMethod::Boundary) => Some(excess_angular_momentum_boundary(fields)),
    };
    let momentum_identity_resid = if opts.momentum_identity && matches!(fields.cfg.steady_kind(), Ok(SteadyKind::Rotating)) {
        let l = match excess_l {
            Some(l) => l,
            None => excess_angular_momentum(fields)?.value,
        };
        momentum_identity_with_l(fields, l).ok().map(|mi| mi.relative_residual)
    } else {
        None
    };
    Ok(DiagnosticsReport {
        n_conf: n_conf(fields),
        n_vel: n_vel(fields)?,
        perimeters: geom.perimeters.clone(),
        areas: geom.areas.clone(),
        vacuum_area: geom.vacuum_area,
        moment_inertia: geom.moment_inertia,
        excess_l,
        circulations: (0..m).map(|k| circulation_from_fields(fields, k)).collect(),
        speed_identity_resid: sid,
        flux_spread: (0..m).map(|k| flux_spread(fields, k)).collect(),
        winding_ok: wind.winding_ok,
        boundary_injective: wind.boundary_injective,
        mutually_exterior: wind.mutually_exterior,
        phi_resid,
        winding_number: wind.winding_number,
        q,
        speed_spread,
        residual_sup: res.sup(),
        min_fz: fields.min_boundary_fz(),
        non_circularity: non_circularity(fields),
        wave_speed_margin: wave_speed_check(fields)?,
        momentum_identity_resid,
    })
}

/// One row of the small-radius limit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub rho: f64,
    /// Per-vortex `∮K_k dτ` (counterclockwise).
    pub translation: Vec<C64>,
    /// Per-vortex `Re ∮K_k conj(f) dτ` (counterclockwise).
    pub rotation: Vec<f64>,
    /// Largest per-vortex deviation from the point-vortex limit.
    pub error: f64,
}

/// Small-radius limits of the identity integrals at zero densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitTable {
    /// Per-vortex limits `γ_k conj(V_k)`.
    pub translation_limit: Vec<C64>,
    /// Per-vortex limits `Re(γ_k ζ_k V_k)`.
    pub rotation_limit: Vec<f64>,
    pub rows: Vec<LimitRow>,
    /// `log₂` error ratios of consecutive rows.
    pub orders: Vec<f64>,
    /// Summed combinations `−Σ_k ∮_{cw}`... reported as `(Σ_k ∮K_k, Re Σ_k ∮K_k conj f)` per row.
    pub sums: Vec<(C64, f64)>,
}

/// Evaluates the identity integrals with zero densities at each `ρ` and compares with the
/// point-vortex limits. The summed translation integral tends to `Σγ_k conj(V_k)` and the summed
/// rotation integral to `Re Σγ_kζ_kV_k` (counterclockwise); along the fluid boundary, which runs
/// clockwise, these are `−Σγ_k conj(V_k)` and `−Re Σγ_kζ_kV_k`.
pub fn appendix_limit_check(cfg: &VortexConfiguration, rhos: &[f64], nq: usize) -> Result<LimitTable> {
    cfg.validate()?;
    let v = eval_pv_residual(cfg)?;
    let m = cfg.m();
    let translation_limit: Vec<C64> = (0..m).map(|k| cfg.circulations[k] * v[k].conj()).collect();
    let rotation_limit: Vec<f64> = (0..m).map(|k| (cfg.circulations[k] * cfg.centers[k] * v[k]).re).collect();
    let split = crate::pointvortex::ParameterSplit { varying: vec![] };
    let mut rows = Vec::new();
    let mut sums = Vec::new();
    for &rho in rhos {
        let n = (nq - 3) / 2;
        let u = HollowState::trivial(cfg, &split, n.clamp(1, 8), rho);
        let fields = FlowFields::with_nq(&u, nq)?;
        let res = residual_from_fields(&fields)?;
        let ints = crate::hollowvortex::phi_integrals(&fields, &res)?;
        let translation: Vec<C64> = ints.iter().map(|p| p.0).collect();
        let rotation: Vec<f64> = ints.iter().map(|p| p.1.re).collect();
        let mut err = 0.0f64;
        for k in 0..m {
            err = err.max((translation[k] - translation_limit[k]).norm());
            err = err.max((rotation[k] - rotation_limit[k]).abs());
        }
        sums.push((translation.iter().sum(), rotation.iter().sum()));
        rows.push(LimitRow { rho, translation, rotation, error: err });
    }
    let orders = rows
        .windows(2)
        .map(|w| (w[0].error / w[1].error).log2() / (w[0].rho / w[1].rho).log2())
        .collect();
    Ok(LimitTable { translation_limit, rotation_limit, rows, orders, sums })
}

/// Spectral derivative of a complex grid function.
pub fn grid_derivative(values: &[C64]) -> Vec<C64> {
    modes_to_grid(&derivative_modes(&grid_to_modes(values)))
}
