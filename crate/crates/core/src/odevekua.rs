//! Time-dependent Vekua operators on `T¹ × G`:
//!
//! ```text
//! Pu = ∂ₜu - (p₀ + iλq(t))·Du - (s(t) + iδq(t))·u - α·q(t)·ū
//! ```
//!
//! Per coefficient the pair `w = (x, y)`, `x = û(t,ξ)_{mn}`,
//! `y = ±conj û(t,ξ̄)_{m'n'}`, obeys a periodic linear ODE `w' = M(t)w + F`.
//! When `conj σ' = σ` the matrix splits as `(σp₀ + s)·I + q·M̃` with a
//! constant `M̃`, which diagonalizes to `ρ·diag(1, -1)`. The two scalar
//! equations are then solved with integrating factors and the periodicity
//! condition, using trapezoid quadrature on the shared grid.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::constvekua::Mode;
use crate::dual::{enumerate_reps, RepPoint};
use crate::error::{Result, VekuaError};
use crate::field::{check_grid, fit_power_law, fit_power_law_xy, FitMode, PowerLawFit, TimeCoefficientField};
use crate::symbol::DiagonalSymbol;
use crate::TRUNCATION_CAVEAT;

type C = Complex64;

fn cz() -> C {
    C::new(0.0, 0.0)
}

fn ci() -> C {
    C::new(0.0, 1.0)
}

/// A time profile given in closed form or by samples on the closed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form")]
pub enum ProfileSpec {
    /// `scale·(1 - cos t)`.
    #[serde(rename = "1-cos")]
    OneMinusCos {
        #[serde(default = "one")]
        scale: f64,
    },
    #[serde(rename = "const")]
    Const { value: f64 },
    /// `offset + amp·cos(freq·t)`.
    #[serde(rename = "cos")]
    Cos {
        #[serde(default)]
        offset: f64,
        amp: f64,
        #[serde(default = "one_u")]
        freq: u32,
    },
    /// Values at `t_j = 2πj/T`, `j = 0..=T`.
    #[serde(rename = "samples")]
    Samples { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

fn one_u() -> u32 {
    1
}

impl ProfileSpec {
    pub fn sample(&self, grid: usize) -> Result<Vec<f64>> {
        let h = 2.0 * PI / grid as f64;
        let t = |j: usize| j as f64 * h;
        Ok(match self {
            ProfileSpec::OneMinusCos { scale } => (0..=grid).map(|j| scale * (1.0 - t(j).cos())).collect(),
            ProfileSpec::Const { value } => vec![*value; grid + 1],
            ProfileSpec::Cos { offset, amp, freq } => {
                (0..=grid).map(|j| offset + amp * (*freq as f64 * t(j)).cos()).collect()
            }
            ProfileSpec::Samples { values } => {
                if values.len() != grid + 1 {
                    return Err(VekuaError::Config(format!(
                        "profile has {} samples, grid {grid} needs {}",
                        values.len(),
                        grid + 1
                    )));
                }
                values.clone()
            }
        })
    }
}

/// Samples of `q` and `s` with their cumulative integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeProfiles {
    pub grid: usize,
    pub q: Vec<f64>,
    pub s: Vec<f64>,
    pub q0: f64,
    pub s0: f64,
    /// `Q(t) = ∫₀ᵗ q`.
    pub cum_q: Vec<f64>,
    /// `S(t) = ∫₀ᵗ s`.
    pub cum_s: Vec<f64>,
    /// `Q̃(t) = Q(t) - q₀`.
    pub cum_q_shifted: Vec<f64>,
}

impl TimeProfiles {
    pub fn step(&self) -> f64 {
        2.0 * PI / self.grid as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.step()
    }
}

/// Cumulative trapezoid with the Euler-Maclaurin end correction `-h²/12·(v'(t) - v'(0))`.
fn cumulative_trapezoid(v: &[f64], h: f64) -> Vec<f64> {
    let dv = fd_derivative(&v.iter().map(|x| C::new(*x, 0.0)).collect::<Vec<_>>(), h);
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for (j, w) in v.windows(2).enumerate() {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc - h * h / 12.0 * (dv[j + 1].re - dv[0].re));
    }
    out
}

/// Samples `q` and `s` on the closed grid of `grid` intervals and tabulates their integrals.
pub fn build_profiles(q_spec: &ProfileSpec, s_spec: &ProfileSpec, grid: usize) -> Result<TimeProfiles> {
    check_grid(grid)?;
    let q = q_spec.sample(grid)?;
    let s = s_spec.sample(grid)?;
    if let Some((j, v)) = q.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(VekuaError::Config(format!("q must be nonnegative, q(t_{j}) = {v}")));
    }
    if q.iter().all(|v| *v == 0.0) {
        return Err(VekuaError::Config("q must not vanish identically".into()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(VekuaError::Config("s must be finite".into()));
    }
    let h = 2.0 * PI / grid as f64;
    let cum_q = cumulative_trapezoid(&q, h);
    let cum_s = cumulative_trapezoid(&s, h);
    let q0 = cum_q[grid];
    let s0 = cum_s[grid];
    let cum_q_shifted = cum_q.iter().map(|v| v - q0).collect();
    Ok(TimeProfiles { grid, q, s, q0, s0, cum_q, cum_s, cum_q_shifted })
}

#[derive(Debug, Clone)]
pub struct VekuaTimeOp {
    pub d: DiagonalSymbol,
    pub p0: f64,
    pub lambda: f64,
    pub delta: f64,
    pub alpha: C,
    pub profiles: TimeProfiles,
    pub zero_tol: f64,
    /// Largest tolerated polynomial order in the small-divisor fits.
    pub max_order: f64,
}

impl VekuaTimeOp {
    pub fn new(d: DiagonalSymbol, p0: f64, lambda: f64, delta: f64, alpha: C, profiles: TimeProfiles) -> Result<Self> {
        if alpha == cz() || !alpha.is_finite() {
            return Err(VekuaError::Config("alpha must be finite and nonzero".into()));
        }
        if ![p0, lambda, delta].iter().all(|v| v.is_finite()) {
            return Err(VekuaError::Config("p0, lambda, delta must be finite".into()));
        }
        Ok(VekuaTimeOp {
            d,
            p0,
            lambda,
            delta,
            alpha,
            profiles,
            zero_tol: crate::constvekua::DEFAULT_ZERO_TOL,
            max_order: crate::constvekua::DEFAULT_MAX_ORDER,
        })
    }

    pub fn with_zero_tol(mut self, tol: f64) -> Self {
        self.zero_tol = tol;
        self
    }

    pub fn grid(&self) -> usize {
        self.profiles.grid
    }

    fn sigma(&self, rep: &RepPoint, row: usize) -> Result<C> {
        Ok(self.d.eval(rep)?[row])
    }

    fn mu(&self, sigma: C) -> C {
        self.lambda * sigma + self.delta
    }

    /// `κ = e^{2πσp₀ + s₀}`: the factor with `z(0) = κ·z(2π)`.
    fn kappa(&self, sigma: C) -> C {
        (2.0 * PI * sigma * self.p0 + self.profiles.s0).exp()
    }

    /// Both boundary denominators `e^{-ρq₀} - κ` and `κ⁻¹ - e^{-ρq₀}`.
    pub fn boundary_denominators(&self, sigma: C, rho: C) -> (C, C) {
        let e = (-rho * self.profiles.q0).exp();
        let k = self.kappa(sigma);
        (e - k, k.inv() - e)
    }

    /// `M(t_j)` assembled from the operator at the mode and its partner.
    pub fn mode_matrix(&self, sigma: C, sigma_partner: C, j: usize) -> [[C; 2]; 2] {
        let q = self.profiles.q[j];
        let s = self.profiles.s[j];
        [
            [(self.p0 + ci() * self.lambda * q) * sigma + s + ci() * self.delta * q, self.alpha * q],
            [
                self.alpha.conj() * q,
                (self.p0 - ci() * self.lambda * q) * sigma_partner.conj() + s - ci() * self.delta * q,
            ],
        ]
    }
}

/// `ρ = (|α|² - μ²)^{1/2}` with `μ = λσ + δ`, `Re ρ ≥ 0`, and `Im ρ ≥ 0` when `Re ρ = 0`.
pub fn compute_rho(op: &VekuaTimeOp, rep: &RepPoint, row: usize) -> Result<C> {
    let sigma = op.sigma(rep, row)?;
    rho_for(op, sigma).ok_or_else(|| VekuaError::Hypothesis {
        which: 'b',
        mode: Mode::diagonal(rep.clone(), row).to_string(),
    })
}

fn rho_for(op: &VekuaTimeOp, sigma: C) -> Option<C> {
    let mu = op.mu(sigma);
    if (mu.norm() - op.alpha.norm()).abs() <= op.zero_tol {
        return None;
    }
    let r = (op.alpha.norm_sqr() - mu * mu).sqrt();
    if r.norm() <= op.zero_tol {
        return None;
    }
    Some(if r.re == 0.0 && r.im < 0.0 { -r } else { r })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeDiag {
    pub rep: RepPoint,
    pub row: usize,
    pub sigma: C,
    pub mu: C,
    pub rho: C,
    pub mtilde: [[C; 2]; 2],
    pub t_mat: [[C; 2]; 2],
    pub t_inv: [[C; 2]; 2],
}

/// Eigen-decomposition of `M̃ = [[iμ, α], [ᾱ, -iμ]]`.
pub fn mode_diagonalize(op: &VekuaTimeOp, rep: &RepPoint, row: usize) -> Result<ModeDiag> {
    let sigma = op.sigma(rep, row)?;
    let rho = compute_rho(op, rep, row)?;
    Ok(diagonalize(rep.clone(), row, sigma, op.mu(sigma), rho, op.alpha))
}

fn diagonalize(rep: RepPoint, row: usize, sigma: C, mu: C, rho: C, alpha: C) -> ModeDiag {
    let mtilde = [[ci() * mu, alpha], [alpha.conj(), -ci() * mu]];
    // columns V± = (α, ±ρ - iμ)
    let t_mat = [[alpha, alpha], [rho - ci() * mu, -rho - ci() * mu]];
    let s = (-2.0 * alpha * rho).inv();
    let t_inv = [[s * (-rho - ci() * mu), s * (-alpha)], [s * (-rho + ci() * mu), s * alpha]];
    ModeDiag { rep, row, sigma, mu, rho, mtilde, t_mat, t_inv }
}

pub fn mat_mul(a: &[[C; 2]; 2], b: &[[C; 2]; 2]) -> [[C; 2]; 2] {
    let mut out = [[cz(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mat_vec(a: &[[C; 2]; 2], v: (C, C)) -> (C, C) {
    (a[0][0] * v.0 + a[0][1] * v.1, a[1][0] * v.0 + a[1][1] * v.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeHypothesis {
    pub rep: RepPoint,
    pub row: usize,
    pub twice_m: Vec<i64>,
}

impl ModeHypothesis {
    fn new(rep: &RepPoint, row: usize) -> Self {
        ModeHypothesis { rep: rep.clone(), row, twice_m: rep.entry(row).twice_m }
    }
}

/// Fit of `|a_m(ξ)| ≤ C·(log⟨ξ⟩)^γ`; logarithmic growth means `γ ≤ 1` up to fitting slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogGrowthFit {
    pub constant: f64,
    pub gamma: f64,
    pub ok: bool,
    pub offending: Vec<ModeHypothesis>,
}

/// Largest fitted power of `log⟨ξ⟩` still accepted as logarithmic growth.
pub const LOG_GAMMA_MAX: f64 = 1.25;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryShell {
    pub weight: f64,
    /// Smallest `|e^{-ρq₀} - e^{2πσp₀+s₀}|` on the shell.
    pub min_minus: f64,
    /// Smallest `|e^{-ρq₀} - e^{-(2πσp₀+s₀)}|` on the shell.
    pub min_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub cutoff: f64,
    pub modes_scanned: usize,
    pub a_ok: bool,
    pub b_ok: bool,
    pub b_offending: Vec<ModeHypothesis>,
    pub rho_min: Option<f64>,
    /// Lower-bound fit of `|ρ|`: `C₀ = constant`, `j₀ = -exponent`.
    pub c_fit: Option<PowerLawFit>,
    pub c_ok: bool,
    pub d_required: bool,
    pub d_fit: Option<LogGrowthFit>,
    pub d_ok: bool,
    pub e_shells: Vec<BoundaryShell>,
    pub e_min: Option<f64>,
    pub e_fit: Option<PowerLawFit>,
    pub e_ok: bool,
    /// Modes where `conj σ' ≠ σ`, so the mode matrix does not split.
    pub split_ok: bool,
    pub split_offending: Vec<ModeHypothesis>,
    pub caveat: &'static str,
}

impl HypothesisReport {
    pub fn all_ok(&self) -> bool {
        self.a_ok && self.b_ok && self.c_ok && self.d_ok && self.e_ok && self.split_ok
    }
}

fn partner_sigma(op: &VekuaTimeOp, rep: &RepPoint, row: usize) -> Result<C> {
    let (pm, _) = Mode::diagonal(rep.clone(), row).partner();
    op.sigma(&pm.rep, pm.row)
}

fn splits(sigma: C, sigma_partner: C) -> bool {
    (sigma_partner.conj() - sigma).norm() <= 1e-12 * (1.0 + sigma.norm())
}

/// Evaluates hypotheses a) through e) at every mode with `⟨ξ⟩ ≤ cutoff`.
pub fn check_hypotheses(op: &VekuaTimeOp, cutoff: f64) -> Result<HypothesisReport> {
    let reps = enumerate_reps(op.d.group(), cutoff)?;
    let a_ok = (op.delta.abs() - op.alpha.norm()).abs() > op.zero_tol;

    struct Row {
        rep: RepPoint,
        row: usize,
        sigma: C,
        rho: Option<C>,
        split: bool,
    }
    let rows: Vec<Row> = reps
        .par_iter()
        .map(|rep| {
            (0..rep.dim())
                .map(|row| {
                    let sigma = op.sigma(rep, row)?;
                    let split = splits(sigma, partner_sigma(op, rep, row)?);
                    Ok(Row { rep: rep.clone(), row, sigma, rho: rho_for(op, sigma), split })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let b_offending: Vec<ModeHypothesis> =
        rows.iter().filter(|r| r.rho.is_none()).map(|r| ModeHypothesis::new(&r.rep, r.row)).collect();
    let split_offending: Vec<ModeHypothesis> =
        rows.iter().filter(|r| !r.split).map(|r| ModeHypothesis::new(&r.rep, r.row)).collect();

    let mut rho_shell: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut e_shell: BTreeMap<u64, BoundaryShell> = BTreeMap::new();
    for r in &rows {
        let Some(rho) = r.rho else { continue };
        let key = r.rep.weight_sq_x4();
        let w = r.rep.weight();
        let e = rho_shell.entry(key).or_insert((w, f64::INFINITY));
        e.1 = e.1.min(rho.norm());
        let (dm, dp) = op.boundary_denominators(r.sigma, rho);
        let s = e_shell.entry(key).or_insert(BoundaryShell { weight: w, min_minus: f64::INFINITY, min_plus: f64::INFINITY });
        s.min_minus = s.min_minus.min(dm.norm());
        s.min_plus = s.min_plus.min(dp.norm());
    }
    let rho_pts: Vec<(f64, f64)> = rho_shell.values().copied().collect();
    let rho_min = rho_pts.iter().map(|p| p.1).reduce(f64::min);
    let c_fit = fit_power_law_xy(&rho_pts, FitMode::LowerBound).ok();
    let tempered = |fit: &Option<PowerLawFit>| fit.as_ref().is_none_or(|f| f.exponent >= -op.max_order);
    let c_ok = rho_min.is_some_and(|m| m > op.zero_tol) && tempered(&c_fit);

    let d_required = op.p0 != 0.0;
    let d_fit = if d_required { Some(log_growth_fit(&rows.iter().map(|r| (r.rep.clone(), r.row, r.sigma.re)).collect::<Vec<_>>())) } else { None };
    let d_ok = d_fit.as_ref().is_none_or(|f| f.ok);

    let e_shells: Vec<BoundaryShell> = e_shell.into_values().collect();
    let e_pts: Vec<(f64, f64)> = e_shells.iter().map(|s| (s.weight, s.min_minus.min(s.min_plus))).collect();
    let e_min = e_pts.iter().map(|p| p.1).reduce(f64::min);
    let e_fit = fit_power_law_xy(&e_pts, FitMode::LowerBound).ok();
    let e_ok = e_min.is_some_and(|m| m > op.zero_tol) && tempered(&e_fit);

    Ok(HypothesisReport {
        cutoff,
        modes_scanned: rows.len(),
        a_ok,
        b_ok: b_offending.is_empty(),
        b_offending,
        rho_min,
        c_fit,
        c_ok,
        d_required,
        d_fit,
        d_ok,
        e_shells,
        e_min,
        e_fit,
        e_ok,
        split_ok: split_offending.is_empty(),
        split_offending,
        caveat: TRUNCATION_CAVEAT,
    })
}

/// Fits shell maxima of `|a|` against `log⟨ξ⟩` over `⟨ξ⟩ > 1`.
///
/// Offending modes sit in the upper half of the weight range and exceed
/// the reference ratio `|a|/log⟨ξ⟩` taken from the lower half.
fn log_growth_fit(rows: &[(RepPoint, usize, f64)]) -> LogGrowthFit {
    let mut shells: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for (rep, _, a) in rows {
        let w = rep.weight();
        if w <= 1.0 {
            continue;
        }
        let e = shells.entry(rep.weight_sq_x4()).or_insert((w.ln(), 0.0));
        e.1 = e.1.max(a.abs());
    }
    let pts: Vec<(f64, f64)> = shells.values().copied().collect();
    let (constant, gamma) = match fit_power_law_xy(&pts, FitMode::UpperGrowth) {
        Ok(f) if f.identically_zero => (0.0, 0.0),
        Ok(f) => (f.constant, f.exponent),
        Err(_) => (0.0, 0.0),
    };
    let wmax = pts.last().map_or(1.0, |p| p.0.exp());
    let mid = 0.5 * (1.0 + wmax);
    let c_ref = rows
        .iter()
        .filter(|(r, _, _)| r.weight() > 1.0 && r.weight() < mid)
        .map(|(r, _, a)| a.abs() / r.weight().ln())
        .fold(0.0, f64::max);
    let offending: Vec<ModeHypothesis> = if gamma > LOG_GAMMA_MAX {
        rows.iter()
            .filter(|(r, _, a)| r.weight() >= mid && a.abs() > c_ref * r.weight().ln() * (1.0 + 1e-12))
            .map(|(r, row, _)| ModeHypothesis::new(r, *row))
            .collect()
    } else {
        Vec::new()
    };
    LogGrowthFit { constant, gamma, ok: gamma <= LOG_GAMMA_MAX, offending }
}

/// Closed-form solution of one coupled pair on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSolutionT {
    pub diag: ModeDiag,
    pub z1: Vec<C>,
    pub z2: Vec<C>,
    /// `(x, y)` per node.
    pub w: Vec<(C, C)>,
    /// `û(t, ξ)_{mn}` per node.
    pub u_hat: Vec<C>,
    pub denominators: (C, C),
    pub kappa: C,
}

/// Quadrature solution of `z₁' = ρqz₁ + g₁`, `z₂' = -ρqz₂ + g₂` with `z(0) = κ·z(2π)`,
/// where `g = e^{-σp₀t - S(t)}·G`, then `w = e^{σp₀t + S(t)}·T·z`.
///
/// The integrals use the composite trapezoid with Euler-Maclaurin end
/// correction; derivatives of the integrands come from second-order
/// differences, which keeps the scheme fourth order.
pub fn solve_mode_closed(op: &VekuaTimeOp, rep: &RepPoint, m: usize, n: usize, gpair: &[(C, C)]) -> Result<ModeSolutionT> {
    let grid = op.grid();
    if gpair.len() != grid + 1 {
        return Err(VekuaError::Config(format!("expected {} samples, got {}", grid + 1, gpair.len())));
    }
    if n >= rep.dim() {
        return Err(VekuaError::Config(format!("column {n} out of range at {rep}")));
    }
    let diag = mode_diagonalize(op, rep, m)?;
    let pr = &op.profiles;
    let h = pr.step();
    let (sigma, rho) = (diag.sigma, diag.rho);
    let (den1, den2) = op.boundary_denominators(sigma, rho);
    let mode_name = || Mode::new(rep.clone(), m, n).to_string();
    if den1.norm() <= op.zero_tol || den2.norm() <= op.zero_tol {
        return Err(VekuaError::BoundaryDenominator(mode_name()));
    }
    let kappa = op.kappa(sigma);

    let growth: Vec<C> = (0..=grid).map(|j| (sigma * op.p0 * pr.time(j) + pr.cum_s[j]).exp()).collect();
    let g: Vec<(C, C)> = gpair.iter().zip(&growth).map(|(gp, e)| (gp.0 / e, gp.1 / e)).collect();
    // e^{-ρ(Q_{j+1} - Q_j)}, at most 1 in modulus
    let step: Vec<C> = (0..grid).map(|j| (-rho * (pr.cum_q[j + 1] - pr.cum_q[j])).exp()).collect();

    // end-corrected trapezoid; corrections telescope so only derivative values enter
    let dg1 = fd_derivative(&g.iter().map(|v| v.0).collect::<Vec<_>>(), h);
    let dg2 = fd_derivative(&g.iter().map(|v| v.1).collect::<Vec<_>>(), h);
    let d1: Vec<C> = (0..=grid).map(|j| dg1[j] - rho * pr.q[j] * g[j].0).collect();
    let d2: Vec<C> = (0..=grid).map(|j| dg2[j] + rho * pr.q[j] * g[j].1).collect();
    let c = h * h / 12.0;

    let mut b = vec![cz(); grid + 1];
    for j in (0..grid).rev() {
        b[j] = step[j] * b[j + 1] + 0.5 * h * (g[j].0 + step[j] * g[j + 1].0) - c * (step[j] * d1[j + 1] - d1[j]);
    }
    let z1_end = b[0] / den1;
    let z1: Vec<C> = (0..=grid).map(|j| z1_end * (rho * pr.cum_q_shifted[j]).exp() - b[j]).collect();

    let mut a = vec![cz(); grid + 1];
    for j in 0..grid {
        a[j + 1] = step[j] * a[j] + 0.5 * h * (step[j] * g[j].1 + g[j + 1].1) - c * (d2[j + 1] - step[j] * d2[j]);
    }
    let z2_start = a[grid] / den2;
    let z2: Vec<C> = (0..=grid).map(|j| (-rho * pr.cum_q[j]).exp() * z2_start + a[j]).collect();

    let w: Vec<(C, C)> = (0..=grid)
        .map(|j| {
            let v = mat_vec(&diag.t_mat, (z1[j], z2[j]));
            (growth[j] * v.0, growth[j] * v.1)
        })
        .collect();
    let u_hat = w.iter().map(|p| p.0).collect();
    Ok(ModeSolutionT { diag, z1, z2, w, u_hat, denominators: (den1, den2), kappa })
}

/// Classical RK4 for `w' = M(t)w + F(t)` with step `2h`, using node samples at
/// even nodes and the odd node in between as midpoint. Starts at node `start`
/// and takes `steps` steps; returns `w` at the visited even nodes.
pub fn rk4_on_grid(
    mat: impl Fn(usize) -> [[C; 2]; 2],
    forcing: impl Fn(usize) -> (C, C),
    w_init: (C, C),
    grid: usize,
    start: usize,
    steps: usize,
) -> Vec<(C, C)> {
    let hh = 4.0 * PI / grid as f64;
    let rhs = |j: usize, w: (C, C)| {
        let v = mat_vec(&mat(j), w);
        let f = forcing(j);
        (v.0 + f.0, v.1 + f.1)
    };
    let axpy = |w: (C, C), k: (C, C), s: f64| (w.0 + k.0 * s, w.1 + k.1 * s);
    let mut out = Vec::with_capacity(steps + 1);
    let mut w = w_init;
    out.push(w);
    for j in (start..start + 2 * steps).step_by(2) {
        let k1 = rhs(j, w);
        let k2 = rhs(j + 1, axpy(w, k1, hh / 2.0));
        let k3 = rhs(j + 1, axpy(w, k2, hh / 2.0));
        let k4 = rhs(j + 2, axpy(w, k3, hh));
        w = (
            w.0 + (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) * (hh / 6.0),
            w.1 + (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) * (hh / 6.0),
        );
        out.push(w);
    }
    out
}

fn check_mode_input(op: &VekuaTimeOp, rep: &RepPoint, n: usize, len: usize) -> Result<()> {
    if len != op.grid() + 1 {
        return Err(VekuaError::Config(format!("expected {} samples, got {len}", op.grid() + 1)));
    }
    if n >= rep.dim() {
        return Err(VekuaError::Config(format!("column {n} out of range at {rep}")));
    }
    Ok(())
}

/// RK4 integration of the structural mode system from `w_init` over the whole period.
/// `fpair` is `F` per node; the result holds `w` at even nodes.
pub fn integrate_mode_rk(
    op: &VekuaTimeOp,
    rep: &RepPoint,
    m: usize,
    n: usize,
    fpair: &[(C, C)],
    w_init: (C, C),
) -> Result<Vec<(C, C)>> {
    check_mode_input(op, rep, n, fpair.len())?;
    let sigma = op.sigma(rep, m)?;
    let sigma_p = partner_sigma(op, rep, m)?;
    let grid = op.grid();
    Ok(rk4_on_grid(|j| op.mode_matrix(sigma, sigma_p, j), |j| fpair[j], w_init, grid, 0, grid / 2))
}

/// Most segments used by [`shoot_periodic_rk`].
pub const MAX_SHOOTING_SEGMENTS: usize = 64;

/// Periodic solution of the structural mode system by multiple shooting with RK4.
///
/// The period is split into segments; each contributes its propagator and a
/// particular solution, and the matching conditions (closed periodically) form
/// one dense linear system. Short segments keep the propagators well scaled when
/// the monodromy has eigenvalues far from the unit circle. Independent of the
/// diagonalization. Returns `w` at even nodes.
pub fn shoot_periodic_rk(op: &VekuaTimeOp, rep: &RepPoint, m: usize, n: usize, fpair: &[(C, C)]) -> Result<Vec<(C, C)>> {
    check_mode_input(op, rep, n, fpair.len())?;
    let sigma = op.sigma(rep, m)?;
    let sigma_p = partner_sigma(op, rep, m)?;
    let grid = op.grid();
    let steps = grid / 2;
    let segs = (1..=MAX_SHOOTING_SEGMENTS.min(steps)).rev().find(|k| steps % k == 0).unwrap_or(1);
    let len = steps / segs;
    let mat = |j: usize| op.mode_matrix(sigma, sigma_p, j);
    let none = |_: usize| (cz(), cz());
    let one = C::new(1.0, 0.0);

    let mut sys = DMatrix::<C>::zeros(2 * segs, 2 * segs);
    let mut rhs = DVector::<C>::zeros(2 * segs);
    for k in 0..segs {
        let start = 2 * k * len;
        let c1 = *rk4_on_grid(&mat, none, (one, cz()), grid, start, len).last().unwrap();
        let c2 = *rk4_on_grid(&mat, none, (cz(), one), grid, start, len).last().unwrap();
        let p = *rk4_on_grid(&mat, |j| fpair[j], (cz(), cz()), grid, start, len).last().unwrap();
        // x_{k+1} - Φ_k x_k = p_k, indices mod segs
        let (r, next) = (2 * k, 2 * ((k + 1) % segs));
        sys[(r, next)] += one;
        sys[(r + 1, next + 1)] += one;
        sys[(r, 2 * k)] -= c1.0;
        sys[(r + 1, 2 * k)] -= c1.1;
        sys[(r, 2 * k + 1)] -= c2.0;
        sys[(r + 1, 2 * k + 1)] -= c2.1;
        rhs[r] = p.0;
        rhs[r + 1] = p.1;
    }
    let x = sys
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| VekuaError::BoundaryDenominator(Mode::new(rep.clone(), m, n).to_string()))?;
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..segs {
        let seg = rk4_on_grid(&mat, |j| fpair[j], (x[2 * k], x[2 * k + 1]), grid, 2 * k * len, len);
        out.extend_from_slice(&seg[..len]);
    }
    out.push(out[0]);
    Ok(out)
}

/// Spectral derivative in `t` of samples on the closed grid. The Nyquist mode is dropped.
pub fn spectral_derivative(samples: &[C], planner: &mut FftPlanner<f64>) -> Vec<C> {
    let n = samples.len() - 1;
    let mut buf: Vec<C> = samples[..n].to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (j, v) in buf.iter_mut().enumerate() {
        let k = if j < n / 2 {
            j as f64
        } else if j == n / 2 {
            0.0
        } else {
            j as f64 - n as f64
        };
        *v *= ci() * k / n as f64;
    }
    if n % 2 == 0 {
        buf[n / 2] = cz();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.push(buf[0]);
    buf
}

/// `(F₁, F₂)` per node for a mode of `f`: the coefficient and the signed conjugate partner.
pub fn forcing_pair(f: &TimeCoefficientField, mode: &Mode) -> Vec<(C, C)> {
    let (pm, phase) = mode.partner();
    let len = f.grid() + 1;
    let zero = vec![cz(); len];
    let a = f.samples(&mode.rep, mode.row, mode.col).unwrap_or(&zero);
    let b = f.samples(&pm.rep, pm.row, pm.col).unwrap_or(&zero);
    a.iter().zip(b).map(|(x, y)| (*x, y.conj() * phase)).collect()
}

/// Samples `Pu` for a time field: spectral `∂ₜ`, then the mode-wise multipliers.
pub fn apply_timedep(op: &VekuaTimeOp, u: &TimeCoefficientField) -> Result<TimeCoefficientField> {
    if u.grid() != op.grid() {
        return Err(VekuaError::Config(format!("field grid {} differs from operator grid {}", u.grid(), op.grid())));
    }
    let pr = &op.profiles;
    let mut modes = BTreeSet::new();
    for (rep, row, col, _) in u.iter() {
        let m = Mode::new(rep.clone(), row, col);
        modes.insert(m.partner().0);
        modes.insert(m);
    }
    let mut planner = FftPlanner::new();
    let mut out = TimeCoefficientField::new(u.group().clone(), u.grid())?;
    let mut sigmas: BTreeMap<RepPoint, Vec<C>> = BTreeMap::new();
    for m in modes {
        if !sigmas.contains_key(&m.rep) {
            sigmas.insert(m.rep.clone(), op.d.eval(&m.rep)?);
        }
        let sigma = sigmas[&m.rep][m.row];
        let (pm, phase) = m.partner();
        let x = u.samples(&m.rep, m.row, m.col);
        let dx = x.map(|x| spectral_derivative(x, &mut planner));
        let partner = u.samples(&pm.rep, pm.row, pm.col);
        let s: Vec<C> = (0..=u.grid())
            .map(|j| {
                let q = pr.q[j];
                let ubar = partner.map_or(cz(), |p| p[j].conj() * phase);
                let lin = match (x, &dx) {
                    (Some(x), Some(dx)) => {
                        dx[j] - (op.p0 + ci() * op.lambda * q) * sigma * x[j] - (pr.s[j] + ci() * op.delta * q) * x[j]
                    }
                    _ => cz(),
                };
                lin - op.alpha * q * ubar
            })
            .collect();
        out.set_samples(&m.rep, m.row, m.col, s)?;
    }
    Ok(out)
}

/// Per-mode diagnostics of a time-dependent solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeDiagnostic {
    pub mode: Mode,
    pub weight: f64,
    pub rho_re: f64,
    pub rho_im: f64,
    pub den_minus: f64,
    pub den_plus: f64,
    /// `max|w' - Mw - F| / (1 + max|F|)` with finite-difference `w'`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct TimeSolveResult {
    pub u: TimeCoefficientField,
    pub diagnostics: Vec<ModeDiagnostic>,
    pub max_residual: f64,
}

/// Residual tolerance of the finite-difference mode check.
pub const ODE_RESIDUAL_TOL: f64 = 1e-4;

/// Fourth-order finite differences: five-point centered inside, one-sided near the ends.
/// Needs at least five samples.
pub fn fd_derivative(v: &[C], h: f64) -> Vec<C> {
    let n = v.len();
    assert!(n >= 5, "fd_derivative needs five samples");
    let s = 1.0 / (12.0 * h);
    let mut d = vec![cz(); n];
    for j in 2..n - 2 {
        d[j] = (v[j - 2] - 8.0 * v[j - 1] + 8.0 * v[j + 1] - v[j + 2]) * s;
    }
    d[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) * s;
    d[1] = (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) * s;
    let (a, b, c, e, f) = (v[n - 1], v[n - 2], v[n - 3], v[n - 4], v[n - 5]);
    d[n - 2] = (3.0 * a + 10.0 * b - 18.0 * c + 6.0 * e - f) * s;
    d[n - 1] = (25.0 * a - 48.0 * b + 36.0 * c - 16.0 * e + 3.0 * f) * s;
    d
}

fn ode_residual(op: &VekuaTimeOp, sigma: C, sigma_p: C, w: &[(C, C)], f: &[(C, C)]) -> f64 {
    let h = op.profiles.step();
    let x: Vec<C> = w.iter().map(|p| p.0).collect();
    let y: Vec<C> = w.iter().map(|p| p.1).collect();
    let (dx, dy) = (fd_derivative(&x, h), fd_derivative(&y, h));
    let fmax = f.iter().map(|p| p.0.norm().max(p.1.norm())).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for j in 0..w.len() {
        let mw = mat_vec(&op.mode_matrix(sigma, sigma_p, j), w[j]);
        let r0 = dx[j] - mw.0 - f[j].0;
        let r1 = dy[j] - mw.1 - f[j].1;
        worst = worst.max(r0.norm()).max(r1.norm());
    }
    worst / (1.0 + fmax)
}

/// Solves `Pu = f` mode by mode over the support of `f`.
///
/// Every mode is checked first; if any fails a hypothesis or a boundary
/// denominator, nothing is solved and all failures are listed.
pub fn solve_timedep(op: &VekuaTimeOp, f: &TimeCoefficientField, cutoff: f64) -> Result<TimeSolveResult> {
    if f.grid() != op.grid() {
        return Err(VekuaError::Config(format!("rhs grid {} differs from operator grid {}", f.grid(), op.grid())));
    }
    if (op.delta.abs() - op.alpha.norm()).abs() <= op.zero_tol {
        return Err(VekuaError::Hypothesis { which: 'a', mode: "all".into() });
    }
    if let Some(r) = f.support().find(|r| r.weight() > cutoff * (1.0 + 1e-12)) {
        return Err(VekuaError::Config(format!("rhs has support at {r} beyond cutoff {cutoff}")));
    }
    let modes: Vec<Mode> = f
        .iter()
        .map(|(rep, row, col, _)| Mode::new(rep.clone(), row, col).canonical())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut failures = Vec::new();
    for m in &modes {
        let sigma = op.sigma(&m.rep, m.row)?;
        let sigma_p = partner_sigma(op, &m.rep, m.row)?;
        if !splits(sigma, sigma_p) {
            failures.push(format!("{m}: mode matrix does not split (conj σ' ≠ σ)"));
            continue;
        }
        let Some(rho) = rho_for(op, sigma) else {
            failures.push(format!("{m}: hypothesis b) violated"));
            continue;
        };
        let (d1, d2) = op.boundary_denominators(sigma, rho);
        if d1.norm() <= op.zero_tol || d2.norm() <= op.zero_tol {
            failures.push(format!("{m}: boundary denominator vanishes"));
        }
    }
    if !failures.is_empty() {
        return Err(VekuaError::ModeFailures(failures));
    }

    let solved: Vec<(Mode, ModeSolutionT, ModeDiagnostic)> = modes
        .par_iter()
        .map(|m| {
            let fp = forcing_pair(f, m);
            let sigma = op.sigma(&m.rep, m.row)?;
            let sigma_p = partner_sigma(op, &m.rep, m.row)?;
            let diag = mode_diagonalize(op, &m.rep, m.row)?;
            let gp: Vec<(C, C)> = fp.iter().map(|v| mat_vec(&diag.t_inv, *v)).collect();
            let sol = solve_mode_closed(op, &m.rep, m.row, m.col, &gp)?;
            let residual = ode_residual(op, sigma, sigma_p, &sol.w, &fp);
            let dg = ModeDiagnostic {
                mode: m.clone(),
                weight: m.rep.weight(),
                rho_re: sol.diag.rho.re,
                rho_im: sol.diag.rho.im,
                den_minus: sol.denominators.0.norm(),
                den_plus: sol.denominators.1.norm(),
                residual,
            };
            Ok((m.clone(), sol, dg))
        })
        .collect::<Result<_>>()?;

    let bad: Vec<String> = solved
        .iter()
        .filter(|(_, _, d)| !(d.residual <= ODE_RESIDUAL_TOL))
        .map(|(m, _, d)| format!("{m}: ODE residual {:.3e}", d.residual))
        .collect();
    if !bad.is_empty() {
        return Err(VekuaError::ModeFailures(bad));
    }

    let mut u = TimeCoefficientField::new(f.group().clone(), f.grid())?;
    let mut diagnostics = Vec::with_capacity(solved.len());
    for (m, sol, dg) in solved {
        let (pm, phase) = m.partner();
        u.set_samples(&m.rep, m.row, m.col, sol.u_hat.clone())?;
        if pm != m {
            u.set_samples(&pm.rep, pm.row, pm.col, sol.w.iter().map(|p| p.1.conj() * phase).collect())?;
        }
        diagnostics.push(dg);
    }
    let max_residual = diagnostics.iter().map(|d| d.residual).fold(0.0, f64::max);
    Ok(TimeSolveResult { u, diagnostics, max_residual })
}

/// Decay fit of per-rep `sup_t` moduli.
pub fn time_decay_fit(u: &TimeCoefficientField) -> Result<PowerLawFit> {
    let v: BTreeMap<RepPoint, f64> = u.sup_profile().into_iter().collect();
    fit_power_law(&v, FitMode::Decay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::GroupSpec;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn circle_op(text: &str, p0: f64, lambda: f64, delta: f64, alpha: C, q: ProfileSpec, grid: usize) -> VekuaTimeOp {
        let g = GroupSpec::circle();
        let pr = build_profiles(&q, &ProfileSpec::Const { value: 0.0 }, grid).unwrap();
        VekuaTimeOp::new(DiagonalSymbol::parse(text, &g).unwrap(), p0, lambda, delta, alpha, pr).unwrap()
    }

    #[test]
    fn profiles_one_minus_cos() {
        let pr = build_profiles(&ProfileSpec::OneMinusCos { scale: 1.0 }, &ProfileSpec::Const { value: 0.0 }, 512).unwrap();
        assert!((pr.q0 - 2.0 * PI).abs() < 1e-12);
        for j in 0..=512 {
            let t = pr.time(j);
            assert!((pr.cum_q[j] - (t - t.sin())).abs() < 1e-10, "j={j}");
        }
        assert_eq!(pr.s0, 0.0);
        assert_eq!(pr.cum_q[0], 0.0);
        assert_eq!(pr.cum_q[512], pr.q0);
        assert_eq!(pr.cum_q_shifted[512], 0.0);
        assert_eq!(pr.cum_q_shifted[0], -pr.q0);
        for j in 0..=512 {
            assert!((pr.cum_q_shifted[j] - pr.cum_q[j] + pr.q0).abs() <= 1e-12 * pr.q0);
        }
    }

    #[test]
    fn profiles_errors_and_linear() {
        let zero = ProfileSpec::Const { value: 0.0 };
        assert!(build_profiles(&zero, &zero, 64).is_err());
        assert!(build_profiles(&ProfileSpec::Const { value: -1.0 }, &zero, 64).is_err());
        assert!(build_profiles(&ProfileSpec::Const { value: 1.0 }, &zero, 63).is_err());
        let pr = build_profiles(&ProfileSpec::Const { value: 1.0 }, &zero, 64).unwrap();
        for j in 0..=64 {
            assert!((pr.cum_q[j] - pr.time(j)).abs() < 1e-13);
            assert!((pr.cum_q_shifted[j] - (pr.time(j) - 2.0 * PI)).abs() < 1e-13);
        }
    }

    #[test]
    fn profile_spec_json() {
        let p: ProfileSpec = serde_json::from_str(r#"{"form":"1-cos"}"#).unwrap();
        assert_eq!(p, ProfileSpec::OneMinusCos { scale: 1.0 });
        let p: ProfileSpec = serde_json::from_str(r#"{"form":"cos","amp":0.1}"#).unwrap();
        assert_eq!(p, ProfileSpec::Cos { offset: 0.0, amp: 0.1, freq: 1 });
    }

    #[test]
    fn rho_examples() {
        let q = ProfileSpec::OneMinusCos { scale: 1.0 };
        let o = circle_op("0", 0.0, 0.0, 0.5, c(1.0, 0.0), q.clone(), 64);
        let r = compute_rho(&o, &RepPoint::circle(3), 0).unwrap();
        assert!((r - c(3f64.sqrt() / 2.0, 0.0)).norm() < 1e-15);
        let o = circle_op("0", 0.0, 0.0, 0.0, c(0.6, 0.8), q.clone(), 64);
        assert!((compute_rho(&o, &RepPoint::circle(0), 0).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        // |μ| > |α|: purely imaginary branch with Im ≥ 0
        let o = circle_op("0", 0.0, 0.0, 2.0, c(1.0, 0.0), q.clone(), 64);
        let r = compute_rho(&o, &RepPoint::circle(0), 0).unwrap();
        assert_eq!(r.re, 0.0);
        assert!((r.im - 3f64.sqrt()).abs() < 1e-15);
        let o = circle_op("0", 0.0, 0.0, 1.0, c(0.0, 1.0), q, 64);
        assert!(matches!(compute_rho(&o, &RepPoint::circle(0), 0), Err(VekuaError::Hypothesis { which: 'b', .. })));
    }

    #[test]
    fn diagonalize_examples() {
        let q = ProfileSpec::OneMinusCos { scale: 1.0 };
        let o = circle_op("0", 0.0, 0.0, 0.0, c(1.0, 0.0), q.clone(), 64);
        let d = mode_diagonalize(&o, &RepPoint::circle(0), 0).unwrap();
        assert_eq!(d.mtilde, [[cz(), c(1.0, 0.0)], [c(1.0, 0.0), cz()]]);
        assert_eq!(d.rho, c(1.0, 0.0));
        assert_eq!(d.t_mat, [[c(1.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(-1.0, 0.0)]]);
        let o = circle_op("0", 0.0, 0.0, 0.0, c(0.0, 1.0), q, 64);
        let d = mode_diagonalize(&o, &RepPoint::circle(0), 0).unwrap();
        assert_eq!(d.mtilde, [[cz(), c(0.0, 1.0)], [c(0.0, -1.0), cz()]]);
        assert_eq!(d.rho, c(1.0, 0.0));
    }

    #[test]
    fn hypothesis_examples() {
        let q = ProfileSpec::OneMinusCos { scale: 1.0 };
        let o = circle_op("0", 0.0, 0.0, 0.5, c(1.0, 0.0), q.clone(), 512);
        let r = check_hypotheses(&o, 10.0).unwrap();
        assert!(r.all_ok());
        let want = (1.0 - (-(3f64.sqrt()) * PI).exp()).abs();
        assert!((r.e_min.unwrap() - want).abs() < 1e-8, "{:?}", r.e_min);
        assert!(!r.d_required);

        let o = circle_op("0", 0.0, 0.0, 1.0, c(1.0, 0.0), q.clone(), 64);
        assert!(!check_hypotheses(&o, 3.0).unwrap().a_ok);

        let s3 = GroupSpec::sphere3();
        let pr = build_profiles(&q, &ProfileSpec::Const { value: 0.0 }, 64).unwrap();
        let o = VekuaTimeOp::new(DiagonalSymbol::parse("d0", &s3).unwrap(), 1.0, 0.0, 0.5, c(1.0, 0.0), pr).unwrap();
        let r = check_hypotheses(&o, 20.0).unwrap();
        assert!(r.d_required && !r.d_ok);
        assert!(!r.d_fit.unwrap().offending.is_empty());
    }

    #[test]
    fn closed_form_zero_forcing() {
        let o = circle_op("1i*Dt", 0.3, 0.2, 0.5, c(1.0, 0.3), ProfileSpec::OneMinusCos { scale: 1.0 }, 64);
        let sol = solve_mode_closed(&o, &RepPoint::circle(2), 0, 0, &vec![(cz(), cz()); 65]).unwrap();
        assert!(sol.u_hat.iter().all(|z| *z == cz()));
    }

    #[test]
    fn closed_form_constant_coefficients() {
        // q ≡ 1, σ = 0, λ = 0, δ = ½, α = 1: z₁' = ρz₁ + 1 with z₁(0) = z₁(2π)
        let grid = 4096;
        let o = circle_op("0", 0.0, 0.0, 0.5, c(1.0, 0.0), ProfileSpec::Const { value: 1.0 }, grid);
        let g = vec![(c(1.0, 0.0), cz()); grid + 1];
        let sol = solve_mode_closed(&o, &RepPoint::circle(0), 0, 0, &g).unwrap();
        // the periodic solution is the constant -1/ρ
        let rho = 3f64.sqrt() / 2.0;
        for z in &sol.z1 {
            assert!((z - c(-1.0 / rho, 0.0)).norm() < 1e-6);
        }
        assert!(sol.z2.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn rk4_scalar_exponential() {
        let one = c(1.0, 0.0);
        let w = rk4_on_grid(|_| [[one, cz()], [cz(), cz()]], |_| (cz(), cz()), (one, one), 4096, 0, 2048);
        let end = w.last().unwrap();
        assert!((end.0.re / (2.0 * PI).exp() - 1.0).abs() < 1e-6);
        assert_eq!(end.1, one);
        let w = rk4_on_grid(|_| [[cz(); 2]; 2], |_| (cz(), cz()), (c(0.3, 1.0), c(2.0, -1.0)), 64, 0, 32);
        assert!(w.iter().all(|p| *p == (c(0.3, 1.0), c(2.0, -1.0))));
    }

    #[test]
    fn closed_form_agrees_with_shooting() {
        let grid = 2048;
        let o = circle_op("1i*Dt + 0.2", 0.4, 0.3, 0.4, c(0.8, -0.5), ProfileSpec::OneMinusCos { scale: 0.7 }, grid);
        let rep = RepPoint::circle(3);
        let diag = mode_diagonalize(&o, &rep, 0).unwrap();
        let fp: Vec<(C, C)> = (0..=grid)
            .map(|j| {
                let t = o.profiles.time(j);
                (c(t.cos(), 0.5 * (2.0 * t).sin()), c(0.3, -t.sin()))
            })
            .collect();
        let gp: Vec<(C, C)> = fp.iter().map(|v| mat_vec(&diag.t_inv, *v)).collect();
        let sol = solve_mode_closed(&o, &rep, 0, 0, &gp).unwrap();
        let rk = shoot_periodic_rk(&o, &rep, 0, 0, &fp).unwrap();
        let dev = rk
            .iter()
            .enumerate()
            .map(|(i, w)| (w.0 - sol.w[2 * i].0).norm().max((w.1 - sol.w[2 * i].1).norm()))
            .fold(0.0, f64::max);
        assert!(dev < 1e-5, "{dev}");
        // periodicity relation on z
        assert!((sol.z1[0] - sol.kappa * sol.z1[grid]).norm() < 1e-10);
        assert!((sol.z2[0] - sol.kappa * sol.z2[grid]).norm() < 1e-10);
    }

    #[test]
    fn spectral_derivative_of_trig() {
        let n = 64;
        let s: Vec<C> = (0..=n).map(|j| {
            let t = 2.0 * PI * j as f64 / n as f64;
            c((3.0 * t).sin(), (5.0 * t).cos())
        }).collect();
        let d = spectral_derivative(&s, &mut FftPlanner::new());
        for (j, v) in d.iter().enumerate() {
            let t = 2.0 * PI * j as f64 / n as f64;
            assert!((v - c(3.0 * (3.0 * t).cos(), -5.0 * (5.0 * t).sin())).norm() < 1e-12);
        }
    }

    #[test]
    fn fd_derivative_exact_on_quartics() {
        let h = 0.01;
        let v: Vec<C> = (0..50).map(|j| c((j as f64 * h).powi(4), -(j as f64 * h).powi(3))).collect();
        let d = fd_derivative(&v, h);
        for (j, x) in d.iter().enumerate() {
            let t = j as f64 * h;
            assert!((x - c(4.0 * t.powi(3), -3.0 * t * t)).norm() < 1e-10, "j={j}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn diagonalization_identities(lam in -2.0f64..2.0, delta in -2.0f64..2.0, ar in -2.0f64..2.0, ai in -2.0f64..2.0,
                                      sr in -3.0f64..3.0, si in -3.0f64..3.0) {
            let alpha = c(ar, ai);
            prop_assume!(alpha.norm() > 0.05);
            let sigma = c(sr, si);
            let mu = lam * sigma + delta;
            prop_assume!((mu.norm() - alpha.norm()).abs() > 1e-3);
            let rho = (alpha.norm_sqr() - mu * mu).sqrt();
            prop_assume!(rho.norm() > 1e-3);
            let d = diagonalize(RepPoint::circle(0), 0, sigma, mu, rho, alpha);
            prop_assert!((d.rho * d.rho - (alpha.norm_sqr() - mu * mu)).norm() <= 1e-12 * (1.0 + alpha.norm_sqr() + mu.norm_sqr()));
            let id = mat_mul(&d.t_mat, &d.t_inv);
            let dd = mat_mul(&mat_mul(&d.t_inv, &d.mtilde), &d.t_mat);
            let scale = 1.0 + alpha.norm() + mu.norm() + rho.norm();
            for i in 0..2 {
                for j in 0..2 {
                    let e = if i == j { c(1.0, 0.0) } else { cz() };
                    prop_assert!((id[i][j] - e).norm() <= 1e-12 * scale / rho.norm().min(1.0));
                    let want = if i != j { cz() } else if i == 0 { rho } else { -rho };
                    prop_assert!((dd[i][j] - want).norm() <= 1e-12 * scale * scale / rho.norm().min(1.0));
                }
            }
        }

        #[test]
        fn kernel_factor_is_contractive(delta in -0.9f64..0.9, lam in -1.0f64..1.0, k in -10i64..10) {
            let o = circle_op("1i*Dt", 0.2, lam, delta, c(1.0, 0.0), ProfileSpec::OneMinusCos { scale: 1.0 }, 128);
            if let Ok(rho) = compute_rho(&o, &RepPoint::circle(k), 0) {
                prop_assert!(rho.re >= 0.0);
                let qt = &o.profiles.cum_q_shifted;
                for t in (0..=128).step_by(8) {
                    for tau in (t..=128).step_by(8) {
                        prop_assert!((rho * (qt[t] - qt[tau])).exp().norm() <= 1.0 + 1e-15);
                    }
                }
            }
        }
    }
}
