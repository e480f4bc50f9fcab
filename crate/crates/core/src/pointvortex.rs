//! Steady point-vortex configurations.
//!
//! The steady system is `V_k(Λ) = Σ_{j≠k} γ_j/(2πi)·1/(ζ_k−ζ_j) − c + iΩ conj(ζ_k) = 0`.
//! This module evaluates and differentiates `V`, classifies steady
//! configurations by the rank of the restricted Jacobian, solves the
//! identity-augmented Newton system, and integrates the Helmholtz–Kirchhoff
//! dynamics.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Result, VortexError, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// One real coordinate of the parameter vector `Λ = (γ, ζ, c, Ω)`. Indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Coordinate {
    Gamma(usize),
    ReZeta(usize),
    ImZeta(usize),
    WaveSpeed,
    AngularVelocity,
}

impl Coordinate {
    /// External name, e.g. `gamma1`, `re_zeta2`, `c`, `omega` (one-based vortex labels).
    pub fn name(&self) -> String {
        match self {
            Coordinate::Gamma(k) => format!("gamma{}", k + 1),
            Coordinate::ReZeta(k) => format!("re_zeta{}", k + 1),
            Coordinate::ImZeta(k) => format!("im_zeta{}", k + 1),
            Coordinate::WaveSpeed => "c".to_string(),
            Coordinate::AngularVelocity => "omega".to_string(),
        }
    }

    /// Parses an external coordinate name.
    pub fn parse(s: &str) -> Result<Self> {
        let index = |rest: &str| -> Result<usize> {
            let k: usize = rest
                .parse()
                .map_err(|_| VortexError::Input(format!("bad coordinate name '{s}'")))?;
            if k == 0 {
                return Err(VortexError::Input(format!("vortex labels start at 1: '{s}'")));
            }
            Ok(k - 1)
        };
        match s {
            "c" => Ok(Coordinate::WaveSpeed),
            "omega" => Ok(Coordinate::AngularVelocity),
            _ => {
                if let Some(rest) = s.strip_prefix("gamma") {
                    Ok(Coordinate::Gamma(index(rest)?))
                } else if let Some(rest) = s.strip_prefix("re_zeta") {
                    Ok(Coordinate::ReZeta(index(rest)?))
                } else if let Some(rest) = s.strip_prefix("im_zeta") {
                    Ok(Coordinate::ImZeta(index(rest)?))
                } else {
                    Err(VortexError::Input(format!("unknown coordinate '{s}'")))
                }
            }
        }
    }

    fn vortex(&self) -> Option<usize> {
        match *self {
            Coordinate::Gamma(k) | Coordinate::ReZeta(k) | Coordinate::ImZeta(k) => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Serialize for Coordinate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Coordinate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Coordinate::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// All `3M+2` coordinates in canonical order: γ's, then (Re ζ_k, Im ζ_k) pairs, then c, Ω.
pub fn all_coordinates(m: usize) -> Vec<Coordinate> {
    let mut out: Vec<Coordinate> = (0..m).map(Coordinate::Gamma).collect();
    for k in 0..m {
        out.push(Coordinate::ReZeta(k));
        out.push(Coordinate::ImZeta(k));
    }
    out.push(Coordinate::WaveSpeed);
    out.push(Coordinate::AngularVelocity);
    out
}

/// The parameter vector `Λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexConfiguration {
    #[serde(rename = "gammas")]
    pub circulations: Vec<f64>,
    pub centers: Vec<C64>,
    #[serde(rename = "c")]
    pub wave_speed: f64,
    #[serde(rename = "omega")]
    pub angular_velocity: f64,
}

impl VortexConfiguration {
    pub fn new(circulations: Vec<f64>, centers: Vec<C64>, wave_speed: f64, angular_velocity: f64) -> Self {
        Self { circulations, centers, wave_speed, angular_velocity }
    }

    /// Number of vortices.
    pub fn m(&self) -> usize {
        self.circulations.len()
    }

    pub fn get(&self, c: Coordinate) -> f64 {
        match c {
            Coordinate::Gamma(k) => self.circulations[k],
            Coordinate::ReZeta(k) => self.centers[k].re,
            Coordinate::ImZeta(k) => self.centers[k].im,
            Coordinate::WaveSpeed => self.wave_speed,
            Coordinate::AngularVelocity => self.angular_velocity,
        }
    }

    pub fn set(&mut self, c: Coordinate, v: f64) {
        match c {
            Coordinate::Gamma(k) => self.circulations[k] = v,
            Coordinate::ReZeta(k) => self.centers[k].re = v,
            Coordinate::ImZeta(k) => self.centers[k].im = v,
            Coordinate::WaveSpeed => self.wave_speed = v,
            Coordinate::AngularVelocity => self.angular_velocity = v,
        }
    }

    /// Checks `M ≥ 1`, matching lengths, finite entries and pairwise distinct centers.
    pub fn validate(&self) -> Result<()> {
        if self.m() == 0 {
            return Err(VortexError::Input("configuration has no vortices".into()));
        }
        if self.centers.len() != self.m() {
            return Err(VortexError::Input(format!(
                "{} circulations but {} centers",
                self.m(),
                self.centers.len()
            )));
        }
        let finite = self.circulations.iter().all(|g| g.is_finite())
            && self.centers.iter().all(|z| z.re.is_finite() && z.im.is_finite())
            && self.wave_speed.is_finite()
            && self.angular_velocity.is_finite();
        if !finite {
            return Err(VortexError::Input("non-finite parameter".into()));
        }
        if self.min_gap() <= 0.0 {
            return Err(VortexError::Domain("coincident vortex centers".into()));
        }
        Ok(())
    }

    /// Smallest pairwise center distance (`+∞` for a single vortex).
    pub fn min_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for k in 0..self.m() {
            for j in k + 1..self.m() {
                gap = gap.min((self.centers[k] - self.centers[j]).norm());
            }
        }
        gap
    }

    /// Sup norm of all real coordinates.
    pub fn norm_inf(&self) -> f64 {
        all_coordinates(self.m())
            .into_iter()
            .map(|c| self.get(c).abs())
            .fold(0.0, f64::max)
    }

    /// Typical magnitude of the terms of `V`, used to scale tolerances.
    pub fn velocity_scale(&self) -> f64 {
        let mut s = self.wave_speed.abs();
        for k in 0..self.m() {
            s = s.max(self.angular_velocity.abs() * self.centers[k].norm());
            for j in 0..self.m() {
                if j != k {
                    let d = (self.centers[k] - self.centers[j]).norm();
                    s = s.max(self.circulations[j].abs() / (2.0 * PI * d));
                }
            }
        }
        s.max(f64::MIN_POSITIVE)
    }

    /// Kind implied by `(c, Ω)`; both nonzero is rejected.
    pub fn steady_kind(&self) -> Result<SteadyKind> {
        match (self.wave_speed != 0.0, self.angular_velocity != 0.0) {
            (false, false) => Ok(SteadyKind::Stationary),
            (true, false) => Ok(SteadyKind::Translating),
            (false, true) => Ok(SteadyKind::Rotating),
            (true, true) => Err(VortexError::Precondition(
                "c and Ω are both nonzero; no steady class applies".into(),
            )),
        }
    }
}

/// Partition of the coordinates into the varying block `λ` and the fixed block `λ′`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSplit {
    pub varying: Vec<Coordinate>,
}

impl ParameterSplit {
    /// Builds a split for `m` vortices, rejecting out-of-range or repeated coordinates.
    pub fn new(m: usize, varying: Vec<Coordinate>) -> Result<Self> {
        let split = Self { varying };
        split.validate(m)?;
        Ok(split)
    }

    /// Parses coordinate names.
    pub fn from_names(m: usize, names: &[&str]) -> Result<Self> {
        let varying = names.iter().map(|s| Coordinate::parse(s)).collect::<Result<Vec<_>>>()?;
        Self::new(m, varying)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        for (i, c) in self.varying.iter().enumerate() {
            if let Some(k) = c.vortex() {
                if k >= m {
                    return Err(VortexError::Input(format!("coordinate {c} refers to a missing vortex")));
                }
            }
            if self.varying[..i].contains(c) {
                return Err(VortexError::Input(format!("coordinate {c} listed twice")));
            }
        }
        Ok(())
    }

    /// The complementary fixed block, in canonical order.
    pub fn fixed(&self, m: usize) -> Vec<Coordinate> {
        all_coordinates(m).into_iter().filter(|c| !self.varying.contains(c)).collect()
    }

    /// Values of the varying coordinates in `cfg`.
    pub fn extract(&self, cfg: &VortexConfiguration) -> Vec<f64> {
        self.varying.iter().map(|&c| cfg.get(c)).collect()
    }

    /// Copy of `cfg` with the varying coordinates replaced by `lambda`.
    pub fn apply(&self, cfg: &VortexConfiguration, lambda: &[f64]) -> VortexConfiguration {
        let mut out = cfg.clone();
        for (&c, &v) in self.varying.iter().zip(lambda) {
            out.set(c, v);
        }
        out
    }
}

/// Which frame the configuration is steady in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyKind {
    Translating,
    Rotating,
    Stationary,
}

impl SteadyKind {
    /// Codimension of the range of the restricted Jacobian for a nondegenerate configuration.
    pub fn expected_codim(self) -> usize {
        match self {
            SteadyKind::Translating | SteadyKind::Rotating => 1,
            SteadyKind::Stationary => 3,
        }
    }

    /// Coordinates held at zero for this kind.
    pub fn excluded(self) -> Vec<Coordinate> {
        match self {
            SteadyKind::Translating => vec![Coordinate::AngularVelocity],
            SteadyKind::Rotating => vec![Coordinate::WaveSpeed],
            SteadyKind::Stationary => vec![Coordinate::WaveSpeed, Coordinate::AngularVelocity],
        }
    }
}

/// Classification of a steady configuration under a split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyClass {
    pub kind: SteadyKind,
    pub codim: usize,
    pub nondegenerate: bool,
    /// Rank of the Jacobian with respect to the varying block.
    pub rank: usize,
    /// Some singular value lies within a factor 10 of the rank threshold.
    pub rank_ambiguous: bool,
}

fn check_distinct(cfg: &VortexConfiguration) -> Result<()> {
    if cfg.centers.len() != cfg.m() {
        return Err(VortexError::Input("circulation and center counts differ".into()));
    }
    if cfg.min_gap() <= 0.0 {
        return Err(VortexError::Domain("coincident vortex centers".into()));
    }
    Ok(())
}

/// `V_k(Λ)` for every vortex.
pub fn eval_pv_residual(cfg: &VortexConfiguration) -> Result<Vec<C64>> {
    check_distinct(cfg)?;
    let m = cfg.m();
    let two_pi_i = 2.0 * PI * I;
    Ok((0..m)
        .map(|k| {
            let mut v = C64::new(-cfg.wave_speed, 0.0) + I * cfg.angular_velocity * cfg.centers[k].conj();
            for j in 0..m {
                if j != k {
                    v += cfg.circulations[j] / (two_pi_i * (cfg.centers[k] - cfg.centers[j]));
                }
            }
            v
        })
        .collect())
}

/// Derivative of `V` along one coordinate, as complex entries per vortex.
fn dv_dcoord(cfg: &VortexConfiguration, coord: Coordinate) -> Vec<C64> {
    let m = cfg.m();
    let two_pi_i = 2.0 * PI * I;
    let z = &cfg.centers;
    let g = &cfg.circulations;
    match coord {
        Coordinate::Gamma(j) => (0..m)
            .map(|k| if k == j { C64::new(0.0, 0.0) } else { 1.0 / (two_pi_i * (z[k] - z[j])) })
            .collect(),
        Coordinate::ReZeta(j) | Coordinate::ImZeta(j) => {
            let unit = if matches!(coord, Coordinate::ReZeta(_)) { C64::new(1.0, 0.0) } else { I };
            (0..m)
                .map(|k| {
                    if k == j {
                        let mut h = C64::new(0.0, 0.0);
                        for l in 0..m {
                            if l != j {
                                let d = z[j] - z[l];
                                h -= g[l] / (two_pi_i * d * d);
                            }
                        }
                        h * unit + I * cfg.angular_velocity * unit.conj()
                    } else {
                        let d = z[k] - z[j];
                        g[j] / (two_pi_i * d * d) * unit
                    }
                })
                .collect()
        }
        Coordinate::WaveSpeed => vec![C64::new(-1.0, 0.0); m],
        Coordinate::AngularVelocity => z.iter().map(|zk| I * zk.conj()).collect(),
    }
}

/// Real Jacobian of `(Re V_1, Im V_1, …)` with respect to the listed coordinates.
pub fn pv_jacobian_coords(cfg: &VortexConfiguration, coords: &[Coordinate]) -> Result<DMatrix<f64>> {
    check_distinct(cfg)?;
    let m = cfg.m();
    let mut jac = DMatrix::zeros(2 * m, coords.len());
    for (col, &c) in coords.iter().enumerate() {
        for (k, d) in dv_dcoord(cfg, c).into_iter().enumerate() {
            jac[(2 * k, col)] = d.re;
            jac[(2 * k + 1, col)] = d.im;
        }
    }
    Ok(jac)
}

/// Real Jacobian with respect to the varying block of `split`.
pub fn pv_jacobian(cfg: &VortexConfiguration, split: &ParameterSplit) -> Result<DMatrix<f64>> {
    split.validate(cfg.m())?;
    pv_jacobian_coords(cfg, &split.varying)
}

/// Residuals of the translation and rotation identities satisfied by `V` for every `Λ`.
pub fn check_pv_identities(cfg: &VortexConfiguration) -> Result<(C64, C64)> {
    let v = eval_pv_residual(cfg)?;
    let m = cfg.m();
    let (g, z, c, om) = (&cfg.circulations, &cfg.centers, cfg.wave_speed, cfg.angular_velocity);
    let sum_g: f64 = g.iter().sum();
    let mut sum_gv = C64::new(0.0, 0.0);
    let mut sum_gzv = C64::new(0.0, 0.0);
    let mut sum_gzbar = C64::new(0.0, 0.0);
    let mut sum_gz = C64::new(0.0, 0.0);
    let mut sum_gz2 = 0.0;
    for k in 0..m {
        sum_gv += g[k] * v[k];
        sum_gzv += g[k] * z[k] * v[k];
        sum_gzbar += g[k] * z[k].conj();
        sum_gz += g[k] * z[k];
        sum_gz2 += g[k] * z[k].norm_sqr();
    }
    let mut pair = 0.0;
    for k in 0..m {
        for j in 0..k {
            pair += g[j] * g[k];
        }
    }
    let trans = sum_gv - (-c * sum_g + I * om * sum_gzbar);
    let rot = sum_gzv - (pair / (2.0 * PI * I) - c * sum_gz + I * om * sum_gz2);
    Ok((trans, rot))
}

fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Numerical rank with threshold `1e-9·σ_max`, plus an ambiguity flag.
pub fn numerical_rank(a: &DMatrix<f64>) -> (usize, bool) {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (0, false);
    }
    let thr = 1e-9 * smax;
    let rank = s.iter().filter(|&&x| x > thr).count();
    let ambiguous = s.iter().any(|&x| x > thr / 10.0 && x < thr * 10.0);
    (rank, ambiguous)
}

/// Classifies a steady configuration per the codimension rule and the trivial-kernel requirement.
pub fn classify_nondegeneracy(cfg: &VortexConfiguration, split: &ParameterSplit) -> Result<SteadyClass> {
    cfg.validate()?;
    split.validate(cfg.m())?;
    let kind = cfg.steady_kind()?;
    let v = eval_pv_residual(cfg)?;
    let vmax = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if vmax > 1e-9 * cfg.velocity_scale() {
        return Err(VortexError::Precondition(format!(
            "configuration is not steady (max |V_k| = {vmax:e})"
        )));
    }
    let excluded = kind.excluded();
    if let Some(c) = split.varying.iter().find(|c| excluded.contains(c)) {
        return Err(VortexError::Precondition(format!(
            "coordinate {c} is fixed at zero for a {kind:?} configuration"
        )));
    }
    let m = cfg.m();
    let admissible: Vec<Coordinate> =
        all_coordinates(m).into_iter().filter(|c| !excluded.contains(c)).collect();
    let (rank_full, amb_full) = numerical_rank(&pv_jacobian_coords(cfg, &admissible)?);
    let (rank, amb_split) = numerical_rank(&pv_jacobian(cfg, split)?);
    let codim = 2 * m - rank;
    let expected = kind.expected_codim();
    let nondegenerate = 2 * m - rank_full == expected && codim == expected && rank == split.varying.len();
    Ok(SteadyClass { kind, codim, nondegenerate, rank, rank_ambiguous: amb_full || amb_split })
}

/// Gradients of the identity maps `φ⁰` with respect to `(Re V_1, Im V_1, …)`.
///
/// Rows: translating `Im ΣγV`; rotating `Re ΣγζV`; stationary `Re ΣγV`, `Im ΣγV`, `Re ΣγζV`.
pub fn phi0_gradient(cfg: &VortexConfiguration, kind: SteadyKind) -> DMatrix<f64> {
    let m = cfg.m();
    let (g, z) = (&cfg.circulations, &cfg.centers);
    let rows = kind.expected_codim();
    let mut out = DMatrix::zeros(rows, 2 * m);
    for k in 0..m {
        let rot = [g[k] * z[k].re, -g[k] * z[k].im];
        match kind {
            SteadyKind::Translating => out[(0, 2 * k + 1)] = g[k],
            SteadyKind::Rotating => {
                out[(0, 2 * k)] = rot[0];
                out[(0, 2 * k + 1)] = rot[1];
            }
            SteadyKind::Stationary => {
                out[(0, 2 * k)] = g[k];
                out[(1, 2 * k + 1)] = g[k];
                out[(2, 2 * k)] = rot[0];
                out[(2, 2 * k + 1)] = rot[1];
            }
        }
    }
    out
}

/// Real coordinates of `V` (indices into `(Re V_1, Im V_1, …)`) spanning the slack space,
/// picked by greedy column pivoting on the `φ⁰` gradient.
pub fn select_slack(cfg: &VortexConfiguration, kind: SteadyKind) -> Vec<usize> {
    let mut a = phi0_gradient(cfg, kind);
    let n = a.nrows();
    let mut chosen = Vec::with_capacity(n);
    for _ in 0..n {
        let best = (0..a.ncols())
            .filter(|c| !chosen.contains(c))
            .max_by(|&x, &y| a.column(x).norm().partial_cmp(&a.column(y).norm()).unwrap())
            .expect("slack selection ran out of columns");
        chosen.push(best);
        let q = a.column(best).normalize();
        if !q.iter().all(|x| x.is_finite()) {
            break;
        }
        for c in 0..a.ncols() {
            let proj = q.dot(&a.column(c));
            let col = a.column(c) - &q * proj;
            a.set_column(c, &col);
        }
    }
    chosen
}

/// Result of [`solve_steady_pv`].
#[derive(Clone, Debug)]
pub struct PvSolution {
    pub cfg: VortexConfiguration,
    /// Newton steps taken.
    pub iterations: usize,
    /// Final slack coordinates.
    pub slack: Vec<f64>,
    /// Final `max_k |V_k|`.
    pub residual: f64,
}

fn realify(v: &[C64]) -> DVector<f64> {
    DVector::from_iterator(2 * v.len(), v.iter().flat_map(|z| [z.re, z.im]))
}

/// Newton on the augmented map `H(Z₁, λ) = V(λ, λ′) − Z₁` with slack `Z₁` in a coordinate subspace.
pub fn solve_steady_pv(seed: &VortexConfiguration, split: &ParameterSplit) -> Result<PvSolution> {
    const MAX_ITER: usize = 50;
    const HALVINGS: usize = 30;
    seed.validate()?;
    split.validate(seed.m())?;
    let kind = seed.steady_kind()?;
    if let Some(c) = split.varying.iter().find(|c| kind.excluded().contains(c)) {
        return Err(VortexError::Precondition(format!("coordinate {c} must stay fixed at zero")));
    }
    let m = seed.m();
    let n = kind.expected_codim();
    if split.varying.len() + n != 2 * m {
        return Err(VortexError::Precondition(format!(
            "split has {} varying coordinates; a {kind:?} configuration of {m} vortices needs {}",
            split.varying.len(),
            2 * m - n.min(2 * m)
        )));
    }
    let slack_rows = select_slack(seed, kind);
    let mut cfg = seed.clone();
    let mut z = DVector::<f64>::zeros(n);
    let tol = |c: &VortexConfiguration| 1e-12 * c.norm_inf().max(1.0);
    let h = |c: &VortexConfiguration, z: &DVector<f64>| -> Result<DVector<f64>> {
        let mut r = realify(&eval_pv_residual(c)?);
        for (i, &row) in slack_rows.iter().enumerate() {
            r[row] -= z[i];
        }
        Ok(r)
    };
    let mut r = h(&cfg, &z)?;
    let mut trace = vec![r.amax()];
    for it in 0..=MAX_ITER {
        if r.amax() < tol(&cfg) {
            let residual = eval_pv_residual(&cfg)?.iter().map(|x| x.norm()).fold(0.0, f64::max);
            return Ok(PvSolution { cfg, iterations: it, slack: z.iter().copied().collect(), residual });
        }
        if it == MAX_ITER {
            break;
        }
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        jac.view_mut((0, 0), (2 * m, split.varying.len())).copy_from(&pv_jacobian(&cfg, split)?);
        for (i, &row) in slack_rows.iter().enumerate() {
            jac[(row, split.varying.len() + i)] = -1.0;
        }
        let s = singular_values(&jac);
        if s.last().copied().unwrap_or(0.0) <= 1e-13 * s[0] {
            return Err(VortexError::NearSingular("augmented point-vortex Jacobian".into()));
        }
        let step = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| VortexError::NearSingular("augmented point-vortex Jacobian".into()))?;
        let lambda = split.extract(&cfg);
        let nv = split.varying.len();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=HALVINGS {
            let trial_lambda: Vec<f64> = (0..nv).map(|i| lambda[i] + alpha * step[i]).collect();
            let trial_cfg = split.apply(&cfg, &trial_lambda);
            let trial_z = &z + step.rows(nv, n) * alpha;
            if let Ok(tr) = h(&trial_cfg, &trial_z) {
                if tr.norm() < r.norm() {
                    cfg = trial_cfg;
                    z = trial_z;
                    r = tr;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        trace.push(r.amax());
        if !accepted {
            break;
        }
    }
    Err(VortexError::Convergence { iterations: trace.len() - 1, last_residual: r.amax(), trace })
}

/// `∂_t conj(z_k) = Σ_{j≠k} γ_j/(2πi)·1/(z_k − z_j)` for the Helmholtz–Kirchhoff dynamics.
pub fn pv_velocity(cfg: &VortexConfiguration, k: usize) -> Result<C64> {
    check_distinct(cfg)?;
    if k >= cfg.m() {
        return Err(VortexError::Input(format!("vortex index {k} out of range")));
    }
    Ok(conj_velocity(&cfg.circulations, &cfg.centers, k))
}

fn conj_velocity(g: &[f64], z: &[C64], k: usize) -> C64 {
    let mut v = C64::new(0.0, 0.0);
    for j in 0..z.len() {
        if j != k {
            v += g[j] / (2.0 * PI * I * (z[k] - z[j]));
        }
    }
    v
}

/// Classical RK4 integration of the center positions; returns `steps + 1` snapshots.
///
/// Aborts with [`VortexError::NearCollision`] (carrying the partial trajectory) once
/// two centers come closer than `1e-6`.
pub fn advance_dynamics(cfg: &VortexConfiguration, dt: f64, steps: usize) -> Result<Vec<Vec<C64>>> {
    cfg.validate()?;
    if !(dt * steps as f64).is_finite() {
        return Err(VortexError::Input("non-finite integration horizon".into()));
    }
    let g = &cfg.circulations;
    let rhs = |z: &[C64]| -> Vec<C64> { (0..z.len()).map(|k| conj_velocity(g, z, k).conj()).collect() };
    let axpy = |z: &[C64], k: &[C64], a: f64| -> Vec<C64> { z.iter().zip(k).map(|(x, y)| x + y * a).collect() };
    let min_sep = |z: &[C64]| {
        let mut s = f64::INFINITY;
        for a in 0..z.len() {
            for b in a + 1..z.len() {
                s = s.min((z[a] - z[b]).norm());
            }
        }
        s
    };
    let mut traj = vec![cfg.centers.clone()];
    let mut z = cfg.centers.clone();
    if min_sep(&z) < 1e-6 {
        return Err(VortexError::NearCollision { step: 0, partial: traj });
    }
    for step in 0..steps {
        let k1 = rhs(&z);
        let k2 = rhs(&axpy(&z, &k1, dt / 2.0));
        let k3 = rhs(&axpy(&z, &k2, dt / 2.0));
        let k4 = rhs(&axpy(&z, &k3, dt));
        for i in 0..z.len() {
            z[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0);
        }
        if !(min_sep(&z) >= 1e-6) {
            return Err(VortexError::NearCollision { step: step + 1, partial: traj });
        }
        traj.push(z.clone());
    }
    Ok(traj)
}

/// Built-in steady configurations.
pub mod builtin {
    use super::*;

    /// Translating pair `γ = (1, −1)`, `ζ = (i, −i)`, `c = 1/4π`.
    pub fn translating_pair() -> VortexConfiguration {
        VortexConfiguration::new(vec![1.0, -1.0], vec![I, -I], 1.0 / (4.0 * PI), 0.0)
    }

    /// Co-rotating pair `γ = (1, 1)`, `ζ = (1, −1)`, `Ω = 1/4π`.
    pub fn rotating_pair() -> VortexConfiguration {
        VortexConfiguration::new(
            vec![1.0, 1.0],
            vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
            0.0,
            1.0 / (4.0 * PI),
        )
    }

    /// Stationary tripole `γ = (2, −1, 2)`, `ζ = (1, 0, −1)`.
    pub fn stationary_tripole() -> VortexConfiguration {
        VortexConfiguration::new(
            vec![2.0, -1.0, 2.0],
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
            0.0,
            0.0,
        )
    }

    /// Split `λ = (γ₁, ζ₂)` for the translating pair.
    pub fn translating_split() -> ParameterSplit {
        ParameterSplit::from_names(2, &["gamma1", "re_zeta2", "im_zeta2"]).unwrap()
    }

    /// Split `λ = (Re ζ₁, ζ₂)` for the rotating pair.
    pub fn rotating_split() -> ParameterSplit {
        ParameterSplit::from_names(2, &["re_zeta1", "re_zeta2", "im_zeta2"]).unwrap()
    }

    /// Split `λ = (γ₁, ζ₃)` for the tripole.
    pub fn tripole_split() -> ParameterSplit {
        ParameterSplit::from_names(3, &["gamma1", "re_zeta3", "im_zeta3"]).unwrap()
    }

    /// Looks up a configuration and its split by name.
    pub fn by_name(name: &str) -> Option<(VortexConfiguration, ParameterSplit)> {
        match name {
            "translating-pair" | "translating_pair" => Some((translating_pair(), translating_split())),
            "rotating-pair" | "rotating_pair" => Some((rotating_pair(), rotating_split())),
            "tripole" | "stationary-tripole" | "stationary_tripole" => {
                Some((stationary_tripole(), tripole_split()))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;

    fn fd_jacobian(cfg: &VortexConfiguration, coords: &[Coordinate], h: f64) -> DMatrix<f64> {
        let m = cfg.m();
        let mut out = DMatrix::zeros(2 * m, coords.len());
        for (col, &c) in coords.iter().enumerate() {
            let mut p = cfg.clone();
            p.set(c, cfg.get(c) + h);
            let mut q = cfg.clone();
            q.set(c, cfg.get(c) - h);
            let vp = eval_pv_residual(&p).unwrap();
            let vq = eval_pv_residual(&q).unwrap();
            for k in 0..m {
                let d = (vp[k] - vq[k]) / (2.0 * h);
                out[(2 * k, col)] = d.re;
                out[(2 * k + 1, col)] = d.im;
            }
        }
        out
    }

    #[test]
    fn examples_are_steady() {
        for cfg in [translating_pair(), rotating_pair(), stationary_tripole()] {
            let v = eval_pv_residual(&cfg).unwrap();
            assert!(v.iter().all(|x| x.norm() < 1e-15), "{v:?}");
        }
        let single = VortexConfiguration::new(vec![5.0], vec![C64::new(0.3, 0.2)], 0.0, 0.0);
        assert_eq!(eval_pv_residual(&single).unwrap()[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn coincident_centers_rejected() {
        let cfg = VortexConfiguration::new(vec![1.0, 1.0], vec![C64::new(1.0, 0.0); 2], 0.0, 0.0);
        assert!(matches!(eval_pv_residual(&cfg), Err(VortexError::Domain(_))));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut cfg = stationary_tripole();
        cfg.centers[1] = C64::new(0.1, 0.3);
        cfg.angular_velocity = 0.2;
        let coords = all_coordinates(3);
        let a = pv_jacobian_coords(&cfg, &coords).unwrap();
        let f = fd_jacobian(&cfg, &coords, 1e-6);
        assert!((a - f).amax() < 1e-6);
    }

    #[test]
    fn classification_of_examples() {
        let cases = [
            (translating_pair(), translating_split(), SteadyKind::Translating, 1),
            (rotating_pair(), rotating_split(), SteadyKind::Rotating, 1),
            (stationary_tripole(), tripole_split(), SteadyKind::Stationary, 3),
        ];
        for (cfg, split, kind, codim) in cases {
            let cls = classify_nondegeneracy(&cfg, &split).unwrap();
            assert_eq!(cls.kind, kind);
            assert_eq!(cls.codim, codim);
            assert_eq!(cls.rank, 3);
            assert!(cls.nondegenerate);
            assert!(!cls.rank_ambiguous);
        }
    }

    #[test]
    fn classification_rejects_non_steady() {
        let mut cfg = rotating_pair();
        cfg.angular_velocity = 0.2;
        assert!(matches!(
            classify_nondegeneracy(&cfg, &rotating_split()),
            Err(VortexError::Precondition(_))
        ));
    }

    #[test]
    fn identities_single_vortex_exact() {
        let cfg = VortexConfiguration::new(vec![2.5], vec![C64::new(0.4, -1.0)], 0.0, 0.0);
        let (t, r) = check_pv_identities(&cfg).unwrap();
        assert_eq!(t, C64::new(0.0, 0.0));
        assert_eq!(r, C64::new(0.0, 0.0));
    }

    #[test]
    fn solve_returns_steady_input_unchanged() {
        let sol = solve_steady_pv(&rotating_pair(), &rotating_split()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.cfg, rotating_pair());
    }

    #[test]
    fn solve_recovers_translating_pair() {
        let split = translating_split();
        let mut seed = translating_pair();
        for &c in &split.varying {
            seed.set(c, seed.get(c) + 1e-3);
        }
        let sol = solve_steady_pv(&seed, &split).unwrap();
        let v = eval_pv_residual(&sol.cfg).unwrap();
        assert!(v.iter().all(|x| x.norm() < 1e-12));
        assert!(sol.slack.iter().all(|s| s.abs() < 1e-12));
        for c in split.fixed(2) {
            assert_eq!(sol.cfg.get(c), seed.get(c));
        }
    }

    #[test]
    fn solve_moves_tripole_when_fixed_block_changes() {
        let split = tripole_split();
        let mut seed = stationary_tripole();
        seed.circulations[2] = 2.05;
        let sol = solve_steady_pv(&seed, &split).unwrap();
        assert!(sol.residual < 1e-12);
        assert_eq!(sol.cfg.circulations[2], 2.05);
        assert!((sol.cfg.circulations[0] - 2.0).abs() > 1e-3);
    }

    #[test]
    fn velocities_match_frames() {
        let v = pv_velocity(&translating_pair(), 0).unwrap();
        assert!((v - C64::new(1.0 / (4.0 * PI), 0.0)).norm() < 1e-16);
        let v = pv_velocity(&rotating_pair(), 0).unwrap();
        assert!((v - C64::new(0.0, -1.0 / (4.0 * PI))).norm() < 1e-16);
        for k in 0..3 {
            assert!(pv_velocity(&stationary_tripole(), k).unwrap().norm() < 1e-16);
        }
    }

    #[test]
    fn dynamics_near_collision_reports_partial() {
        let cfg = VortexConfiguration::new(
            vec![1.0, -1.0, 1.0],
            vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0 + 5e-7, 0.0)],
            0.0,
            0.0,
        );
        match advance_dynamics(&cfg, 1e-3, 10) {
            Err(VortexError::NearCollision { partial, step }) => {
                assert_eq!(step, 0);
                assert_eq!(partial.len(), 1);
            }
            other => panic!("expected near collision, got {:?}", other.map(|t| t.len())),
        }
    }

    #[test]
    fn coordinate_names_round_trip() {
        for c in all_coordinates(4) {
            assert_eq!(Coordinate::parse(&c.name()).unwrap(), c);
        }
        assert!(Coordinate::parse("gamma0").is_err());
        assert!(Coordinate::parse("zeta1").is_err());
    }
}
