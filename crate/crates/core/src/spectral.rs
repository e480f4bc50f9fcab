//! Truncated Fourier representation of functions on the unit circle.
//!
//! Real mean-zero densities are stored by their coefficients `φ̂_m`, `m = 1..N`
//! (negative modes are conjugates). The Cauchy operator `𝒞` and the
//! multipliers acting on `φ′` are applied exactly in coefficient space. Layer
//! potential traces split into the exact diagonal part `𝒞μ_k` and smooth
//! off-diagonal integrals evaluated with the trapezoid rule on `N_q` nodes.
//!
//! Complex functions on the circle are handled in FFT layout: entry `i` of a
//! mode vector of length `N_q` holds the coefficient of `τ^m` with
//! `m ≡ i (mod N_q)`, `-N_q/2 ≤ m < N_q/2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::pointvortex::VortexConfiguration;
use crate::{Result, VortexError, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Real mean-zero function on the circle, stored as `φ̂_1..φ̂_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralDensity {
    pub coeffs: Vec<C64>,
}

impl SpectralDensity {
    pub fn zeros(n: usize) -> Self {
        Self { coeffs: vec![ZERO; n] }
    }

    pub fn from_coeffs(coeffs: Vec<C64>) -> Self {
        Self { coeffs }
    }

    /// Truncation order `N`.
    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    /// `φ̂_m` for any integer `m` (zero outside `1..=N` and at `m = 0`).
    pub fn coeff(&self, m: i64) -> C64 {
        let a = m.unsigned_abs() as usize;
        if m == 0 || a > self.n() {
            return ZERO;
        }
        let c = self.coeffs[a - 1];
        if m > 0 {
            c
        } else {
            c.conj()
        }
    }

    /// Point value at `τ` on the unit circle.
    pub fn eval(&self, tau: C64) -> f64 {
        let mut p = tau;
        let mut s = 0.0;
        for c in &self.coeffs {
            s += 2.0 * (c * p).re;
            p *= tau;
        }
        s
    }

    /// Largest coefficient modulus.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Copy truncated or zero-padded to order `n`.
    pub fn resized(&self, n: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.resize(n, ZERO);
        Self { coeffs: c }
    }

    /// `φ(−τ)`: coefficients scaled by `(−1)^m`.
    pub fn reflected(&self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| if i % 2 == 0 { -c } else { c })
                .collect(),
        }
    }

    /// `φ*(τ) = conj(φ(conj τ))`, which for real `φ` is `φ(τ̄)`: coefficients conjugated.
    pub fn starred(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c.conj()).collect() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }
}

/// One density per vortex boundary, all with the same truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DensityVector {
    pub densities: Vec<SpectralDensity>,
}

impl DensityVector {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { densities: vec![SpectralDensity::zeros(n); m] }
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    /// Common truncation order (0 when empty).
    pub fn n(&self) -> usize {
        self.densities.first().map_or(0, |d| d.n())
    }

    pub fn resized(&self, n: usize) -> Self {
        Self { densities: self.densities.iter().map(|d| d.resized(n)).collect() }
    }

    pub fn max_coeff(&self) -> f64 {
        self.densities.iter().map(|d| d.max_coeff()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for DensityVector {
    type Output = SpectralDensity;
    fn index(&self, k: usize) -> &SpectralDensity {
        &self.densities[k]
    }
}

impl std::ops::IndexMut<usize> for DensityVector {
    fn index_mut(&mut self, k: usize) -> &mut SpectralDensity {
        &mut self.densities[k]
    }
}

/// Values at the equispaced nodes `τ_j = exp(2πij/N_q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridFunction {
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn nq(&self) -> usize {
        self.values.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// The nodes `τ_j = exp(2πij/N_q)`.
pub fn nodes(nq: usize) -> Vec<C64> {
    (0..nq).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / nq as f64)).collect()
}

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans(nq: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(nq)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans { fwd: planner.plan_fft_forward(nq), inv: planner.plan_fft_inverse(nq) })
        })
        .clone()
}

/// Index of mode `m` in FFT layout.
pub fn mode_index(m: i64, nq: usize) -> usize {
    m.rem_euclid(nq as i64) as usize
}

/// Signed mode number of FFT index `i`.
pub fn mode_number(i: usize, nq: usize) -> i64 {
    if i < nq / 2 {
        i as i64
    } else {
        i as i64 - nq as i64
    }
}

/// Grid values to mode coefficients `ĝ_m = (1/N_q) Σ_j g_j τ_j^{−m}`.
pub fn grid_to_modes(values: &[C64]) -> Vec<C64> {
    let nq = values.len();
    let mut buf = values.to_vec();
    plans(nq).fwd.process(&mut buf);
    let s = 1.0 / nq as f64;
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

/// Mode coefficients to grid values `g_j = Σ_m ĝ_m τ_j^m`.
pub fn modes_to_grid(modes: &[C64]) -> Vec<C64> {
    let mut buf = modes.to_vec();
    plans(buf.len()).inv.process(&mut buf);
    buf
}

fn check_resolution(n: usize, nq: usize) -> Result<()> {
    if nq < 2 * n + 1 {
        return Err(VortexError::Domain(format!(
            "quadrature size {nq} aliases a density of order {n} (need at least {})",
            2 * n + 1
        )));
    }
    Ok(())
}

/// Mode vector of a real density.
pub fn density_modes(d: &SpectralDensity, nq: usize) -> Result<Vec<C64>> {
    check_resolution(d.n(), nq)?;
    let mut modes = vec![ZERO; nq];
    for (i, &c) in d.coeffs.iter().enumerate() {
        let m = (i + 1) as i64;
        modes[mode_index(m, nq)] = c;
        modes[mode_index(-m, nq)] = c.conj();
    }
    Ok(modes)
}

/// Samples a density on `N_q` nodes.
pub fn to_grid(d: &SpectralDensity, nq: usize) -> Result<GridFunction> {
    Ok(GridFunction { values: modes_to_grid(&density_modes(d, nq)?) })
}

/// Coefficients `m = 1..n` of a grid function (treated as real).
pub fn to_coeffs(g: &GridFunction, n: usize) -> SpectralDensity {
    let nq = g.nq();
    let modes = grid_to_modes(&g.values);
    let top = n.min((nq - 1) / 2);
    let mut coeffs: Vec<C64> = (1..=top as i64)
        .map(|m| 0.5 * (modes[mode_index(m, nq)] + modes[mode_index(-m, nq)].conj()))
        .collect();
    coeffs.resize(n, ZERO);
    SpectralDensity { coeffs }
}

/// Modes of `∂_τ g`: coefficient `m·ĝ_m` moves to mode `m − 1`.
pub fn derivative_modes(modes: &[C64]) -> Vec<C64> {
    let nq = modes.len();
    let mut out = vec![ZERO; nq];
    for (i, &c) in modes.iter().enumerate() {
        let m = mode_number(i, nq);
        if m != 0 && m > -(nq as i64) / 2 {
            out[mode_index(m - 1, nq)] = c * m as f64;
        }
    }
    out
}

/// Modes of `𝒞g`: nonnegative modes removed, negative modes negated.
pub fn cauchy_modes(modes: &[C64]) -> Vec<C64> {
    let nq = modes.len();
    modes
        .iter()
        .enumerate()
        .map(|(i, &c)| if mode_number(i, nq) < 0 { -c } else { ZERO })
        .collect()
}

/// `𝒞g` for a complex grid function.
pub fn cauchy_grid(g: &GridFunction) -> GridFunction {
    GridFunction { values: modes_to_grid(&cauchy_modes(&grid_to_modes(&g.values))) }
}

/// `𝒞φ` for a real density.
pub fn cauchy(d: &SpectralDensity, nq: usize) -> Result<GridFunction> {
    Ok(GridFunction { values: modes_to_grid(&cauchy_modes(&density_modes(d, nq)?)) })
}

/// Real function on the circle with a mean: `c0 + Σ_{m=1..K} (ĉ_m τ^m + conj(ĉ_m) τ^{−m})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealSeries {
    pub c0: f64,
    pub coeffs: Vec<C64>,
}

impl RealSeries {
    pub fn zeros(k: usize) -> Self {
        Self { c0: 0.0, coeffs: vec![ZERO; k] }
    }

    pub fn from_density(d: &SpectralDensity) -> Self {
        Self { c0: 0.0, coeffs: d.coeffs.clone() }
    }

    /// Coefficient of `τ^m`.
    pub fn coeff(&self, m: i64) -> C64 {
        let a = m.unsigned_abs() as usize;
        if m == 0 {
            return C64::new(self.c0, 0.0);
        }
        if a > self.coeffs.len() {
            return ZERO;
        }
        if m > 0 {
            self.coeffs[a - 1]
        } else {
            self.coeffs[a - 1].conj()
        }
    }

    /// Modes `0..=k` of real grid values.
    pub fn from_real_grid(values: &[f64], k: usize) -> Self {
        let nq = values.len();
        let buf: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        let modes = grid_to_modes(&buf);
        let top = k.min((nq - 1) / 2);
        let mut coeffs: Vec<C64> = (1..=top).map(|m| modes[m]).collect();
        coeffs.resize(k, ZERO);
        Self { c0: modes[0].re, coeffs }
    }

    pub fn eval(&self, tau: C64) -> f64 {
        let mut p = tau;
        let mut s = self.c0;
        for c in &self.coeffs {
            s += 2.0 * (c * p).re;
            p *= tau;
        }
        s
    }

    /// Mean-zero part as a density.
    pub fn to_density(&self) -> SpectralDensity {
        SpectralDensity { coeffs: self.coeffs.clone() }
    }
}

/// The three multipliers acting on `φ′` that appear in the linearization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MultiplierKind {
    /// `Re(𝒞φ′)`: mode `m` moves to `m + 1` with factor `m/2`.
    #[serde(rename = "Re_C_dtau")]
    ReCDtau,
    /// `Re(τ𝒞φ′)`: factor `|m|/2`.
    #[serde(rename = "Re_tauC_dtau")]
    ReTauCDtau,
    /// `Re(iτ𝒞φ′)`: factor `−im/2`.
    #[serde(rename = "Re_itauC_dtau")]
    ReITauCDtau,
}

/// Exact action of a multiplier on a real density.
pub fn apply_multiplier(kind: MultiplierKind, d: &SpectralDensity) -> RealSeries {
    let n = d.n();
    match kind {
        MultiplierKind::ReCDtau => {
            let mut coeffs = vec![ZERO; n + 1];
            for (i, &c) in d.coeffs.iter().enumerate() {
                let m = (i + 1) as f64;
                coeffs[i + 1] = c * (0.5 * m);
            }
            RealSeries { c0: 0.0, coeffs }
        }
        MultiplierKind::ReTauCDtau => RealSeries {
            c0: 0.0,
            coeffs: d.coeffs.iter().enumerate().map(|(i, &c)| c * (0.5 * (i + 1) as f64)).collect(),
        },
        MultiplierKind::ReITauCDtau => RealSeries {
            c0: 0.0,
            coeffs: d.coeffs.iter().enumerate().map(|(i, &c)| c * (-0.5 * (i + 1) as f64) * I).collect(),
        },
    }
}

/// Inverse of [`apply_multiplier`] on its range.
pub fn invert_multiplier(kind: MultiplierKind, target: &RealSeries) -> Result<SpectralDensity> {
    if target.c0 != 0.0 {
        return Err(VortexError::Domain(format!("target has nonzero mean {}", target.c0)));
    }
    match kind {
        MultiplierKind::ReCDtau => {
            if let Some(&c1) = target.coeffs.first() {
                if c1 != ZERO {
                    return Err(VortexError::Domain("Re(𝒞φ′) has no first mode".into()));
                }
            }
            let n = target.coeffs.len().saturating_sub(1);
            Ok(SpectralDensity {
                coeffs: (1..=n).map(|m| target.coeffs[m] / (0.5 * m as f64)).collect(),
            })
        }
        MultiplierKind::ReTauCDtau => Ok(SpectralDensity {
            coeffs: target.coeffs.iter().enumerate().map(|(i, &c)| c / (0.5 * (i + 1) as f64)).collect(),
        }),
        MultiplierKind::ReITauCDtau => Ok(SpectralDensity {
            coeffs: target
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| c / ((-0.5 * (i + 1) as f64) * I))
                .collect(),
        }),
    }
}

/// Mode-range projections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// `P_m`: keep modes `±m`.
    Mode(usize),
    /// `P_{≤m}`: keep modes `|·| ≤ m`.
    UpTo(usize),
    /// `P_{>m}`: keep modes `|·| > m`.
    Above(usize),
}

impl Projection {
    fn keeps(self, m: usize) -> bool {
        match self {
            Projection::Mode(k) => m == k,
            Projection::UpTo(k) => m <= k,
            Projection::Above(k) => m > k,
        }
    }
}

/// Applies a mode projection to a real series.
pub fn project(range: Projection, s: &RealSeries) -> RealSeries {
    RealSeries {
        c0: if range.keeps(0) { s.c0 } else { 0.0 },
        coeffs: s
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| if range.keeps(i + 1) { c } else { ZERO })
            .collect(),
    }
}

/// Applies a mode projection to a density.
pub fn project_density(range: Projection, d: &SpectralDensity) -> SpectralDensity {
    project(range, &RealSeries::from_density(d)).to_density()
}

/// Admissibility `min_{j≠k} |ζ_j − ζ_k| > 2|ρ|`.
pub fn check_admissible(rho: f64, centers: &[C64]) -> Result<()> {
    if !rho.is_finite() {
        return Err(VortexError::Domain("non-finite radius".into()));
    }
    for k in 0..centers.len() {
        for j in k + 1..centers.len() {
            let d = (centers[k] - centers[j]).norm();
            if !(d > 2.0 * rho.abs()) {
                return Err(VortexError::Domain(format!(
                    "circles of radius {} about vortices {} and {} overlap (center distance {d})",
                    rho.abs(),
                    k + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// A complex function on the circle held in both representations.
#[derive(Clone, Debug)]
pub struct CircleFunction {
    pub modes: Vec<C64>,
    pub grid: Vec<C64>,
}

impl CircleFunction {
    pub fn from_modes(modes: Vec<C64>) -> Self {
        let grid = modes_to_grid(&modes);
        Self { modes, grid }
    }

    pub fn from_grid(grid: Vec<C64>) -> Self {
        let modes = grid_to_modes(&grid);
        Self { modes, grid }
    }

    /// The density itself.
    pub fn of_density(d: &SpectralDensity, nq: usize) -> Result<Self> {
        Ok(Self::from_modes(density_modes(d, nq)?))
    }

    /// `∂_τ` of this function.
    pub fn derivative(&self) -> Self {
        Self::from_modes(derivative_modes(&self.modes))
    }

    pub fn nq(&self) -> usize {
        self.grid.len()
    }
}

const KERNEL_CACHE_LIMIT: usize = 1 << 22;

/// Trace operator `𝒵_k^ρ` for fixed `(ρ, ζ)` at `N_q` nodes.
///
/// Off-diagonal kernels `(1/N_q)·ρσ/(ρ(σ−τ) + ζ_j − ζ_k)` are tabulated when
/// the tables are small enough and evaluated on the fly otherwise.
pub struct TraceOperator {
    rho: f64,
    centers: Vec<C64>,
    nq: usize,
    tau: Vec<C64>,
    kernels: Option<Vec<Vec<C64>>>,
}

impl TraceOperator {
    pub fn new(rho: f64, centers: &[C64], nq: usize) -> Result<Self> {
        check_admissible(rho, centers)?;
        let m = centers.len();
        let tau = nodes(nq);
        let mut op = Self { rho, centers: centers.to_vec(), nq, tau, kernels: None };
        if rho != 0.0 && m > 1 && m * (m - 1) * nq * nq <= KERNEL_CACHE_LIMIT {
            let mut tables = Vec::with_capacity(m * m);
            for k in 0..m {
                for j in 0..m {
                    tables.push(if j == k { Vec::new() } else { op.kernel_table(k, j) });
                }
            }
            op.kernels = Some(tables);
        }
        Ok(op)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn centers(&self) -> &[C64] {
        &self.centers
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn nodes(&self) -> &[C64] {
        &self.tau
    }

    fn kernel_table(&self, k: usize, j: usize) -> Vec<C64> {
        let nq = self.nq;
        let shift = self.centers[j] - self.centers[k];
        let w = self.rho / nq as f64;
        let mut t = Vec::with_capacity(nq * nq);
        for l in 0..nq {
            let base = shift - self.rho * self.tau[l];
            for lp in 0..nq {
                let s = self.tau[lp];
                t.push(w * s / (self.rho * s + base));
            }
        }
        t
    }

    /// Traces `𝒵_k[g]` on vortex `k` for several families of densities at once;
    /// `families[f][j]` is the density of family `f` on boundary `j`.
    pub fn trace_families(&self, k: usize, families: &[&[CircleFunction]]) -> Vec<Vec<C64>> {
        let nq = self.nq;
        let m = self.centers.len();
        let mut out: Vec<Vec<C64>> =
            families.iter().map(|fam| modes_to_grid(&cauchy_modes(&fam[k].modes))).collect();
        if self.rho == 0.0 {
            return out;
        }
        for j in 0..m {
            if j == k {
                continue;
            }
            match &self.kernels {
                Some(tables) => {
                    let table = &tables[k * m + j];
                    for (f, fam) in families.iter().enumerate() {
                        let g = &fam[j].grid;
                        for l in 0..nq {
                            let row = &table[l * nq..(l + 1) * nq];
                            let mut acc = ZERO;
                            for (a, b) in row.iter().zip(g) {
                                acc += a * b;
                            }
                            out[f][l] += acc;
                        }
                    }
                }
                None => {
                    let shift = self.centers[j] - self.centers[k];
                    let w = self.rho / nq as f64;
                    let mut accs = vec![ZERO; families.len()];
                    for l in 0..nq {
                        let base = shift - self.rho * self.tau[l];
                        accs.iter_mut().for_each(|a| *a = ZERO);
                        for lp in 0..nq {
                            let s = self.tau[lp];
                            let kern = w * s / (self.rho * s + base);
                            for (f, fam) in families.iter().enumerate() {
                                accs[f] += kern * fam[j].grid[lp];
                            }
                        }
                        for f in 0..families.len() {
                            out[f][l] += accs[f];
                        }
                    }
                }
            }
        }
        out
    }

    /// Trace `𝒵_k[g]` of one family.
    pub fn trace(&self, k: usize, family: &[CircleFunction]) -> Vec<C64> {
        self.trace_families(k, &[family]).pop().unwrap()
    }
}

/// Boundary trace `𝒵_k^ρ[μ]` on the `N_q` nodes.
pub fn trace_z(rho: f64, cfg: &VortexConfiguration, mu: &DensityVector, k: usize, nq: usize) -> Result<GridFunction> {
    if mu.len() != cfg.m() || k >= cfg.m() {
        return Err(VortexError::Input("density count or vortex index does not match the configuration".into()));
    }
    let op = TraceOperator::new(rho, &cfg.centers, nq)?;
    let fam = mu
        .densities
        .iter()
        .map(|d| CircleFunction::of_density(d, nq))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridFunction { values: op.trace(k, &fam) })
}

/// `𝒵^ρ[g](ζ)` by the trapezoid rule; refuses points within `0.05|ρ|` of a circle.
pub fn field_z_grids(rho: f64, centers: &[C64], grids: &[&[C64]], zeta: C64) -> Result<C64> {
    for (j, &zj) in centers.iter().enumerate() {
        let d = (zeta - zj).norm();
        if d - rho.abs() <= 0.05 * rho.abs() || d == 0.0 {
            return Err(VortexError::Domain(format!(
                "evaluation point {zeta} is within the exclusion band of circle {}",
                j + 1
            )));
        }
    }
    if rho == 0.0 {
        return Ok(ZERO);
    }
    let mut acc = ZERO;
    for (j, g) in grids.iter().enumerate() {
        let nq = g.len();
        let tau = nodes(nq);
        let shift = centers[j] - zeta;
        let mut s = ZERO;
        for l in 0..nq {
            s += g[l] * tau[l] / (rho * tau[l] + shift);
        }
        acc += s * rho / nq as f64;
    }
    Ok(acc)
}

/// `𝒵^ρ[μ](ζ)` at an exterior point, by the trapezoid rule.
pub fn field_z(rho: f64, cfg: &VortexConfiguration, mu: &DensityVector, zeta: C64, nq: usize) -> Result<C64> {
    let grids = mu
        .densities
        .iter()
        .map(|d| to_grid(d, nq).map(|g| g.values))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[C64]> = grids.iter().map(|g| g.as_slice()).collect();
    field_z_grids(rho, &cfg.centers, &refs, zeta)
}

/// `𝒵^ρ[g](ζ)` from mode vectors, using the exact exterior expansion
/// `−Σ_{m≥1} ĝ_{−m} t^{−m}` with `t = (ζ − ζ_j)/ρ` for each circle; valid for any exterior point.
pub fn field_z_exact(rho: f64, centers: &[C64], modes: &[&[C64]], zeta: C64) -> Result<C64> {
    if rho == 0.0 {
        return Ok(ZERO);
    }
    let mut acc = ZERO;
    for (j, md) in modes.iter().enumerate() {
        let t = (zeta - centers[j]) / rho;
        if t.norm() <= 1.0 {
            return Err(VortexError::Domain(format!("point {zeta} is not exterior to circle {}", j + 1)));
        }
        let inv = 1.0 / t;
        let nq = md.len();
        let mut p = inv;
        for m in 1..nq / 2 {
            let c = md[mode_index(-(m as i64), nq)];
            acc -= c * p;
            p *= inv;
        }
    }
    Ok(acc)
}

/// Inverts the trace: `μ_k = 2 Re(𝒞 𝒵_k^ρ μ)`.
pub fn recover_density(trace: &GridFunction, n: usize) -> SpectralDensity {
    let nq = trace.nq();
    let modes = grid_to_modes(&trace.values);
    let top = n.min((nq - 1) / 2);
    let mut coeffs: Vec<C64> = (1..=top as i64).map(|m| -modes[mode_index(-m, nq)].conj()).collect();
    coeffs.resize(n, ZERO);
    SpectralDensity { coeffs }
}

/// Linear symmetry classes of densities, defined coefficientwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    /// `φ̂_m ∈ ℝ`.
    Rr,
    /// `φ̂_m ∈ iℝ`.
    Ir,
    /// `i^m φ̂_m ∈ iℝ`.
    Ii,
    /// `i^m φ̂_m ∈ ℝ`.
    Ri,
    /// `rr ∩ ii`: odd modes real, even modes zero.
    RrIi,
    /// `rr ∩ ri`: even modes real, odd modes zero.
    RrRi,
    /// `ir ∩ ii`: even modes imaginary, odd modes zero.
    IrIi,
    /// No constraint.
    None,
}

fn ipow(k: i64) -> C64 {
    match k.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => I,
        2 => C64::new(-1.0, 0.0),
        _ => -I,
    }
}

impl SymmetryClass {
    /// Orthonormal real directions spanning the admissible values of the mode-`m` coefficient.
    pub fn directions(self, m: usize) -> Vec<C64> {
        let one = C64::new(1.0, 0.0);
        let mi = m as i64;
        match self {
            SymmetryClass::Rr => vec![one],
            SymmetryClass::Ir => vec![I],
            SymmetryClass::Ii => vec![ipow(1 - mi)],
            SymmetryClass::Ri => vec![ipow(-mi)],
            SymmetryClass::RrIi => if m % 2 == 1 { vec![one] } else { vec![] },
            SymmetryClass::RrRi => if m.is_multiple_of(2) { vec![one] } else { vec![] },
            SymmetryClass::IrIi => if m.is_multiple_of(2) { vec![I] } else { vec![] },
            SymmetryClass::None => vec![one, I],
        }
    }

    /// Orthogonal projection of one coefficient.
    pub fn project_coeff(self, m: usize, c: C64) -> C64 {
        self.directions(m).into_iter().map(|d| d * (c * d.conj()).re).sum()
    }
}

/// Orthogonal projection onto a symmetry class.
pub fn symmetry_project(class: SymmetryClass, d: &SpectralDensity) -> SpectralDensity {
    SpectralDensity {
        coeffs: d.coeffs.iter().enumerate().map(|(i, &c)| class.project_coeff(i + 1, c)).collect(),
    }
}

/// Distance (max coefficient modulus) from a class.
pub fn symmetry_defect(class: SymmetryClass, d: &SpectralDensity) -> f64 {
    d.coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| (c - class.project_coeff(i + 1, c)).norm())
        .fold(0.0, f64::max)
}

/// Distance of a real series (including its mean) from a class.
pub fn series_symmetry_defect(class: SymmetryClass, s: &RealSeries) -> f64 {
    let c0 = C64::new(s.c0, 0.0);
    let d0 = (c0 - class.project_coeff(0, c0)).norm();
    s.coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| (c - class.project_coeff(i + 1, c)).norm())
        .fold(d0, f64::max)
}

/// Membership test with a coefficient tolerance.
pub fn is_member(class: SymmetryClass, d: &SpectralDensity, tol: f64) -> bool {
    symmetry_defect(class, d) < tol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn density(coeffs: &[(f64, f64)]) -> SpectralDensity {
        SpectralDensity::from_coeffs(coeffs.iter().map(|&(a, b)| C64::new(a, b)).collect())
    }

    #[test]
    fn single_mode_grid_is_twice_cosine() {
        let g = to_grid(&density(&[(1.0, 0.0)]), 16).unwrap();
        for (j, v) in g.values.iter().enumerate() {
            let th = 2.0 * PI * j as f64 / 16.0;
            assert!((v - C64::new(2.0 * th.cos(), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn aliasing_is_rejected() {
        assert!(to_grid(&SpectralDensity::zeros(8), 16).is_err());
        assert!(to_grid(&SpectralDensity::zeros(8), 17).is_ok());
    }

    #[test]
    fn cauchy_of_cosine() {
        let g = cauchy(&density(&[(1.0, 0.0)]), 16).unwrap();
        let tau = nodes(16);
        for (v, t) in g.values.iter().zip(&tau) {
            assert!((v + t.conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn multiplier_examples() {
        let d = density(&[(0.0, 0.0), (1.0, 0.0)]);
        let s = apply_multiplier(MultiplierKind::ReTauCDtau, &d);
        assert_eq!(s.coeffs[1], C64::new(1.0, 0.0));
        let d = density(&[(1.0, 0.0)]);
        let s = apply_multiplier(MultiplierKind::ReITauCDtau, &d);
        for t in nodes(12) {
            assert!((s.eval(t) - t.arg().sin()).abs() < 1e-15);
        }
        let target = RealSeries { c0: 0.0, coeffs: vec![C64::new(0.5, 0.0)] };
        let back = invert_multiplier(MultiplierKind::ReTauCDtau, &target).unwrap();
        assert_eq!(back.coeffs[0], C64::new(1.0, 0.0));
        let bad = RealSeries { c0: 1.0, coeffs: vec![] };
        assert!(invert_multiplier(MultiplierKind::ReTauCDtau, &bad).is_err());
    }

    #[test]
    fn projections() {
        let d = density(&[(1.0, 0.0), (2.0, 0.0)]);
        let p1 = project_density(Projection::Mode(1), &d);
        assert_eq!(p1.coeffs, vec![C64::new(1.0, 0.0), ZERO]);
        let s = RealSeries::from_density(&d);
        assert_eq!(project(Projection::Mode(0), &s).c0, 0.0);
    }

    #[test]
    fn trace_closed_form() {
        let cfg = VortexConfiguration::new(
            vec![1.0, 1.0],
            vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
            0.0,
            0.0,
        );
        let mu = DensityVector { densities: vec![SpectralDensity::zeros(4), density(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)])] };
        let tr = trace_z(0.1, &cfg, &mu, 0, 32).unwrap();
        for (v, t) in tr.values.iter().zip(nodes(32)) {
            let exact = -0.1 / (2.0 + 0.1 * t);
            assert!((v - exact).norm() < 1e-14);
        }
        assert!((tr.values[0].re + 0.1 / 2.1).abs() < 1e-14);
    }

    #[test]
    fn field_single_circle() {
        let cfg = VortexConfiguration::new(vec![1.0], vec![ZERO], 0.0, 0.0);
        let mu = DensityVector { densities: vec![density(&[(1.0, 0.0)])] };
        let v = field_z(1.0, &cfg, &mu, C64::new(2.0, 0.0), 64).unwrap();
        assert!((v + 0.5).norm() < 1e-14);
        assert!(field_z(1.0, &cfg, &mu, C64::new(1.02, 0.0), 64).is_err());
        let far = field_z(1.0, &cfg, &mu, C64::new(1e6, 0.0), 64).unwrap();
        assert!(far.norm() < 1e-5);
    }

    #[test]
    fn symmetry_examples() {
        let p = symmetry_project(SymmetryClass::Rr, &density(&[(1.0, 1.0)]));
        assert_eq!(p.coeffs[0], C64::new(1.0, 0.0));
        let p = symmetry_project(SymmetryClass::Ii, &density(&[(0.0, 0.0), (3.0, 0.0)]));
        assert!(p.coeffs[1].norm() < 1e-15);
    }
}
