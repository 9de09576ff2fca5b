//! Constant-coefficient Vekua operators `Pu = Lu - q·u - p·ū` with a
//! diagonal `L`.
//!
//! Each coefficient `x = û(ξ)_{kl}` is coupled by the conjugation to one
//! partner coefficient `û(ξ̄)_{k'l'}`. Writing `y = ±conj û(ξ̄)_{k'l'}` (the
//! sign is the conjugation phase), the pair satisfies
//!
//! ```text
//! [ σ - q        -p          ] [x]   [ f̂(ξ)_{kl}             ]
//! [ -p̄           conj σ' - q̄ ] [y] = [ ±conj f̂(ξ̄)_{k'l'}     ]
//! ```
//!
//! with `σ = σ_k(ξ)` and `σ' = σ_{k'}(ξ̄)`. The matrix is always assembled
//! from the operator itself, never from a closed-form determinant.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dual::{conjugate_rep, enumerate_reps, RepPoint};
use crate::error::{Result, VekuaError};
use crate::field::{
    apply_multiplier, conj_field, field_combine, fit_power_law, CMatrix, CoefficientField, FitMode, PowerLawFit,
};
use crate::symbol::{check_diagonal_compat, CompatReport, DiagonalSymbol};
use crate::TRUNCATION_CAVEAT;

pub const DEFAULT_ZERO_TOL: f64 = 1e-12;
/// Largest decay order of `|Δ|` still read as a tempered small-divisor bound.
pub const DEFAULT_MAX_ORDER: f64 = 8.0;

pub const ADMISSIBLE_TOL: f64 = 1e-10;

fn cz() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

#[derive(Debug, Clone)]
pub struct VekuaConstOp {
    pub l: DiagonalSymbol,
    pub p: Complex64,
    pub q: Complex64,
    /// Base of the scale-aware singularity threshold.
    pub zero_tol: f64,
}

impl VekuaConstOp {
    pub fn new(l: DiagonalSymbol, p: Complex64, q: Complex64) -> Result<Self> {
        if p == cz() || !p.is_finite() || !q.is_finite() {
            return Err(VekuaError::Config("p must be finite and nonzero, q finite".into()));
        }
        Ok(VekuaConstOp { l, p, q, zero_tol: DEFAULT_ZERO_TOL })
    }

    pub fn with_zero_tol(mut self, tol: f64) -> Self {
        self.zero_tol = tol;
        self
    }

    /// `|Δ|` at or below this counts as an exact zero: `tol·max(1, ⟨ξ⟩^{2K})`.
    pub fn zero_tol_at(&self, rep: &RepPoint) -> f64 {
        self.zero_tol * rep.weight().powi(2 * self.l.order() as i32).max(1.0)
    }

    /// Whether `L` satisfies the diagonal conjugation rule up to `cutoff`.
    /// Failure is reported, not fatal: the structural systems stay exact either way.
    pub fn compat_report(&self, cutoff: f64) -> Result<CompatReport> {
        check_diagonal_compat(&self.l, cutoff)
    }
}

/// A coefficient position `(ξ, row, col)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Mode {
    pub rep: RepPoint,
    pub row: usize,
    pub col: usize,
}

impl Mode {
    pub fn new(rep: RepPoint, row: usize, col: usize) -> Self {
        Mode { rep, row, col }
    }

    pub fn diagonal(rep: RepPoint, row: usize) -> Self {
        Mode { rep, row, col: row }
    }

    /// The coefficient coupled to this one by conjugation, with its sign.
    pub fn partner(&self) -> (Mode, f64) {
        let rule = conjugate_rep(&self.rep);
        let phase = rule.phase(self.row, self.col);
        (Mode { row: rule.entry_map(self.row), col: rule.entry_map(self.col), rep: rule.target }, phase)
    }

    pub fn is_self_partner(&self) -> bool {
        self.partner().0 == *self
    }

    /// The member of the coupled pair that is solved for both.
    pub fn canonical(&self) -> Mode {
        let p = self.partner().0;
        if p < *self {
            p
        } else {
            self.clone()
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let r = self.rep.entry(self.row);
        let c = self.rep.entry(self.col);
        if r.twice_m.is_empty() {
            write!(f, "{}", self.rep)
        } else {
            let half = |v: &[i64]| v.iter().map(|t| fmt_half(*t)).collect::<Vec<_>>().join(",");
            write!(f, "{}[{};{}]", self.rep, half(&r.twice_m), half(&c.twice_m))
        }
    }
}

fn fmt_half(t: i64) -> String {
    if t % 2 == 0 {
        (t / 2).to_string()
    } else {
        format!("{t}/2")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSystem2x2 {
    pub mode: Mode,
    pub partner: Mode,
    /// Conjugation sign linking `y` to the stored partner coefficient.
    pub phase: f64,
    pub a: [[Complex64; 2]; 2],
    pub det: Complex64,
}

/// Result of one coupled solve, as stored coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSolution {
    pub u: Complex64,
    pub u_partner: Complex64,
    pub singular: bool,
}

impl ModeSystem2x2 {
    /// Right-hand side in system form from the stored coefficients of `f`.
    pub fn rhs(&self, f_mode: Complex64, f_partner: Complex64) -> (Complex64, Complex64) {
        (f_mode, f_partner.conj() * self.phase)
    }

    /// `a₂₂·f₁ + p·f₂`, which must vanish for a singular system to be solvable.
    pub fn admissibility_residual(&self, f1: Complex64, f2: Complex64) -> Complex64 {
        self.a[1][1] * f1 - self.a[0][1] * f2
    }

    /// Cramer's rule, or the fixed selection on the solution line when `|Δ| ≤ zero_tol`.
    pub fn solve(&self, f_mode: Complex64, f_partner: Complex64, zero_tol: f64) -> Result<ModeSolution> {
        let (f1, f2) = self.rhs(f_mode, f_partner);
        let [[a11, a12], [a21, a22]] = self.a;
        let (x, y, singular) = if self.det.norm() > zero_tol {
            ((f1 * a22 - a12 * f2) / self.det, (a11 * f2 - a21 * f1) / self.det, false)
        } else {
            let r = self.admissibility_residual(f1, f2);
            if r.norm() > ADMISSIBLE_TOL * (1.0 + f1.norm() + f2.norm()) {
                return Err(VekuaError::Inadmissible(vec![format!(
                    "{}: (σ-q̄)f̂ + p·(partner) = {r} ≠ 0",
                    self.mode
                )]));
            }
            if self.partner == self.mode {
                // y is tied to conj(x); take the minimal-norm point of the line
                let x = if a11 == cz() { cz() } else { f1 / (2.0 * a11) };
                (x, x.conj(), true)
            } else {
                // a₁₂ = -p, so y = -f₁/p
                (cz(), f1 / a12, true)
            }
        };
        Ok(ModeSolution { u: x, u_partner: y.conj() * self.phase, singular })
    }
}

/// Assembles the coupled system at `(rep, row, col)` from `P̂u` at the mode and at its partner.
pub fn build_mode_system(op: &VekuaConstOp, rep: &RepPoint, row: usize, col: usize) -> Result<ModeSystem2x2> {
    let mode = Mode::new(rep.clone(), row, col);
    let (partner, phase) = mode.partner();
    let sigma = op.l.eval(rep)?[row];
    let sigma_p = op.l.eval(&partner.rep)?[partner.row];
    // row 1: P̂u(ξ)_{kl} = (σ-q)x - p·y
    // row 2: phase·conj(P̂u(ξ̄)_{k'l'}) = -p̄·x + (conj σ' - q̄)·y
    let a = [[sigma - op.q, -op.p], [-op.p.conj(), sigma_p.conj() - op.q.conj()]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    Ok(ModeSystem2x2 { mode, partner, phase, a, det })
}

/// `Δ_k(ξ)`. It does not depend on the column.
pub fn discriminant(op: &VekuaConstOp, rep: &RepPoint, row: usize) -> Result<Complex64> {
    Ok(build_mode_system(op, rep, row, row)?.det)
}

/// The textbook determinant `σ² - 2σ·Re q + |q|² - |p|²`, valid only where `σ(ξ̄)[k'] = conj σ(ξ)[k]`.
pub fn discriminant_closed_form(sigma: Complex64, p: Complex64, q: Complex64) -> Complex64 {
    sigma * sigma - 2.0 * sigma * q.re + q.norm_sqr() - p.norm_sqr()
}

/// Solves one coupled pair given the stored right-hand side coefficients.
pub fn cramer_solve_mode(
    op: &VekuaConstOp,
    rep: &RepPoint,
    row: usize,
    col: usize,
    fhat_pair: (Complex64, Complex64),
) -> Result<ModeSolution> {
    let sys = build_mode_system(op, rep, row, col)?;
    sys.solve(fhat_pair.0, fhat_pair.1, op.zero_tol_at(rep))
}

/// `Lu - q·u - p·ū`.
pub fn apply_vekua(op: &VekuaConstOp, u: &CoefficientField) -> Result<CoefficientField> {
    let lu = apply_multiplier(&op.l, u)?;
    let a = field_combine(Complex64::new(1.0, 0.0), &lu, -op.q, u)?;
    field_combine(Complex64::new(1.0, 0.0), &a, -op.p, &conj_field(u))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityViolation {
    pub mode: Mode,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub violations: Vec<AdmissibilityViolation>,
}

fn pairs_of(reps: &BTreeSet<RepPoint>) -> Vec<Mode> {
    let mut out = Vec::new();
    for rep in reps {
        let d = rep.dim();
        for row in 0..d {
            for col in 0..d {
                let m = Mode::new(rep.clone(), row, col);
                if m.canonical() == m {
                    out.push(m);
                }
            }
        }
    }
    out
}

fn rhs_pair(f: &CoefficientField, sys: &ModeSystem2x2) -> (Complex64, Complex64) {
    let a = f.entry(&sys.mode.rep, sys.mode.row, sys.mode.col);
    let b = f.entry(&sys.partner.rep, sys.partner.row, sys.partner.col);
    (a, b)
}

/// Checks the compatibility relation at every singular mode up to `cutoff` and on the support of `f`.
pub fn is_admissible(op: &VekuaConstOp, f: &CoefficientField, cutoff: f64) -> Result<AdmissibilityReport> {
    let mut reps: BTreeSet<RepPoint> = enumerate_reps(f.group(), cutoff)?.into_iter().collect();
    reps.extend(f.support().cloned());
    let modes = pairs_of(&reps);
    let violations: Vec<AdmissibilityViolation> = modes
        .par_iter()
        .map(|m| -> Result<Option<AdmissibilityViolation>> {
            let sys = build_mode_system(op, &m.rep, m.row, m.col)?;
            if sys.det.norm() > op.zero_tol_at(&m.rep) {
                return Ok(None);
            }
            let (fa, fb) = rhs_pair(f, &sys);
            let (f1, f2) = sys.rhs(fa, fb);
            let r = sys.admissibility_residual(f1, f2).norm();
            Ok((r > ADMISSIBLE_TOL * (1.0 + f1.norm() + f2.norm()))
                .then(|| AdmissibilityViolation { mode: m.clone(), residual: r }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(AdmissibilityReport { admissible: violations.is_empty(), violations })
}

/// Solves `Pu = f` mode by mode over the support of `f`.
pub fn solve_const(op: &VekuaConstOp, f: &CoefficientField, cutoff: f64) -> Result<CoefficientField> {
    if let Some(r) = f.support().find(|r| r.weight() > cutoff * (1.0 + 1e-12)) {
        return Err(VekuaError::Config(format!("rhs has support at {r} beyond cutoff {cutoff}")));
    }
    let reps: BTreeSet<RepPoint> = f.support().cloned().collect();
    let modes = pairs_of(&reps);
    let solved: Vec<std::result::Result<(ModeSystem2x2, ModeSolution), String>> = modes
        .par_iter()
        .map(|m| {
            let sys = build_mode_system(op, &m.rep, m.row, m.col).map_err(|e| e.to_string())?;
            let (fa, fb) = rhs_pair(f, &sys);
            let sol = sys.solve(fa, fb, op.zero_tol_at(&m.rep)).map_err(|e| match e {
                VekuaError::Inadmissible(v) => v.join("; "),
                other => other.to_string(),
            })?;
            Ok((sys, sol))
        })
        .collect();
    let failures: Vec<String> = solved.iter().filter_map(|r| r.as_ref().err().cloned()).collect();
    if !failures.is_empty() {
        return Err(VekuaError::Inadmissible(failures));
    }
    let mut u = CoefficientField::new(f.group().clone());
    for r in &reps {
        u.insert(r.clone(), CMatrix::zeros(r.dim()))?;
    }
    for (sys, sol) in solved.into_iter().flatten() {
        u.set_entry(&sys.mode.rep, sys.mode.row, sys.mode.col, sol.u)?;
        if sys.partner != sys.mode {
            u.set_entry(&sys.partner.rep, sys.partner.row, sys.partner.col, sol.u_partner)?;
        }
    }
    Ok(u)
}

/// `max|Pu - f| / max(1, max|f|)`.
pub fn relative_residual(op: &VekuaConstOp, u: &CoefficientField, f: &CoefficientField) -> Result<f64> {
    let pu = apply_vekua(op, u)?;
    let diff = field_combine(Complex64::new(1.0, 0.0), &pu, Complex64::new(-1.0, 0.0), f)?;
    Ok(diff.max_norm() / f.max_norm().max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GhVerdict {
    GhPlausible,
    GhFailZeroSetInfinite,
    /// Finite zero set, but nonzero `|Δ|` decays faster than any tolerated order.
    GhFailSmallDivisors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GsVerdict {
    GsPlausible,
    GsFail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscZero {
    pub rep: RepPoint,
    pub row: usize,
    pub twice_m: Vec<i64>,
    pub abs_disc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellStat {
    pub weight: f64,
    pub modes: usize,
    pub zero_count: usize,
    /// Smallest nonzero `|Δ|` on the shell.
    pub min_abs_disc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiophantineReport {
    pub cutoff: f64,
    pub zero_tol: f64,
    pub max_order: f64,
    pub modes_scanned: usize,
    pub zeros: Vec<DiscZero>,
    pub shells: Vec<ShellStat>,
    /// Smallest nonzero `|Δ|` and where it occurs.
    pub min_abs_disc: Option<f64>,
    pub min_mode: Option<(RepPoint, usize)>,
    /// Lower-bound fit over all modes; shells whose minimum is a zero drop out and are counted.
    pub dc_fit: Option<PowerLawFit>,
    /// Lower-bound fit over nonzero `|Δ|` only.
    pub dcprime_fit: Option<PowerLawFit>,
    pub gh_verdict: GhVerdict,
    pub gs_verdict: GsVerdict,
    pub caveat: &'static str,
}

impl DiophantineReport {
    pub fn zero_set(&self) -> BTreeSet<(RepPoint, usize)> {
        self.zeros.iter().map(|z| (z.rep.clone(), z.row)).collect()
    }

    pub fn shells_csv_rows(&self) -> Vec<(f64, Option<f64>, usize)> {
        self.shells.iter().map(|s| (s.weight, s.min_abs_disc, s.zero_count)).collect()
    }
}

/// Scans every mode with `⟨ξ⟩ ≤ cutoff`, classifying exact zeros and fitting small-divisor bounds.
pub fn scan_diophantine(op: &VekuaConstOp, cutoff: f64) -> Result<DiophantineReport> {
    scan_diophantine_with(op, cutoff, DEFAULT_MAX_ORDER)
}

pub fn scan_diophantine_with(op: &VekuaConstOp, cutoff: f64, max_order: f64) -> Result<DiophantineReport> {
    let reps = enumerate_reps(op.l.group(), cutoff)?;
    let per_rep: Vec<Vec<(usize, Complex64, bool)>> = reps
        .par_iter()
        .map(|rep| {
            let tol = op.zero_tol_at(rep);
            (0..rep.dim())
                .map(|row| discriminant(op, rep, row).map(|d| (row, d, d.norm() <= tol)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut zeros = Vec::new();
    let mut shells: BTreeMap<u64, ShellStat> = BTreeMap::new();
    let mut min_abs: Option<(f64, RepPoint, usize)> = None;
    let mut modes_scanned = 0;
    for (rep, rows) in reps.iter().zip(&per_rep) {
        let shell = shells.entry(rep.weight_sq_x4()).or_insert(ShellStat {
            weight: rep.weight(),
            modes: 0,
            zero_count: 0,
            min_abs_disc: None,
        });
        for &(row, d, is_zero) in rows {
            modes_scanned += 1;
            shell.modes += 1;
            if is_zero {
                shell.zero_count += 1;
                zeros.push(DiscZero { rep: rep.clone(), row, twice_m: rep.entry(row).twice_m, abs_disc: d.norm() });
                continue;
            }
            let a = d.norm();
            shell.min_abs_disc = Some(shell.min_abs_disc.map_or(a, |m| m.min(a)));
            if min_abs.as_ref().is_none_or(|(m, _, _)| a < *m) {
                min_abs = Some((a, rep.clone(), row));
            }
        }
    }
    let shells: Vec<ShellStat> = shells.into_values().collect();

    let dc_pts: Vec<(f64, f64)> =
        shells.iter().map(|s| (s.weight, if s.zero_count > 0 { 0.0 } else { s.min_abs_disc.unwrap_or(0.0) })).collect();
    let dcp_pts: Vec<(f64, f64)> =
        shells.iter().filter_map(|s| s.min_abs_disc.map(|m| (s.weight, m))).collect();
    let dc_fit = crate::field::fit_power_law_xy(&dc_pts, FitMode::LowerBound).ok();
    let dcprime_fit = crate::field::fit_power_law_xy(&dcp_pts, FitMode::LowerBound).ok();

    let top = 0.5 * (1.0 + cutoff);
    let top_zero_shells = shells.iter().filter(|s| s.weight >= top && s.zero_count > 0).count();
    let too_steep = |fit: &Option<PowerLawFit>| fit.as_ref().is_some_and(|f| !f.identically_zero && f.exponent < -max_order);
    let gh_verdict = if top_zero_shells >= 3 {
        GhVerdict::GhFailZeroSetInfinite
    } else if too_steep(&dcprime_fit) {
        GhVerdict::GhFailSmallDivisors
    } else {
        GhVerdict::GhPlausible
    };
    let gs_verdict = if too_steep(&dcprime_fit) { GsVerdict::GsFail } else { GsVerdict::GsPlausible };

    Ok(DiophantineReport {
        cutoff,
        zero_tol: op.zero_tol,
        max_order,
        modes_scanned,
        zeros,
        shells,
        min_abs_disc: min_abs.as_ref().map(|m| m.0),
        min_mode: min_abs.map(|m| (m.1, m.2)),
        dc_fit,
        dcprime_fit,
        gh_verdict,
        gs_verdict,
        caveat: TRUNCATION_CAVEAT,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WitnessKind {
    GhZero,
    GhNecessity { c_re: f64, c_im: f64 },
    GsFail,
}

impl WitnessKind {
    pub fn gh_necessity(c: Complex64) -> Self {
        WitnessKind::GhNecessity { c_re: c.re, c_im: c.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessRow {
    pub mode: Mode,
    pub weight: f64,
    pub abs_disc: f64,
    pub abs_u: f64,
}

#[derive(Debug, Clone)]
pub struct WitnessBundle {
    pub kind: WitnessKind,
    pub u: CoefficientField,
    /// Right-hand side, for the kinds that build one.
    pub f: Option<CoefficientField>,
    pub rows: Vec<WitnessRow>,
    pub skipped: Vec<(Mode, String)>,
}

/// Builds the witness of `kind` over the given modes. Modes failing the kind's precondition are skipped.
pub fn make_witness(op: &VekuaConstOp, kind: WitnessKind, modes: &[Mode]) -> Result<WitnessBundle> {
    let group = op.l.group().clone();
    let mut u = CoefficientField::new(group.clone());
    let mut f = CoefficientField::new(group);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut used = BTreeSet::new();
    for m in modes {
        if m.row >= m.rep.dim() || m.col >= m.rep.dim() {
            skipped.push((m.clone(), "entry out of range".into()));
            continue;
        }
        if !used.insert(m.canonical()) {
            skipped.push((m.clone(), "pair already used".into()));
            continue;
        }
        let sys = build_mode_system(op, &m.rep, m.row, m.col)?;
        let tol = op.zero_tol_at(&m.rep);
        let [[a11, _], [_, a22]] = sys.a;
        let p = op.p;
        let self_partner = sys.partner == sys.mode;
        let abs_disc = sys.det.norm();
        let set_pair = |fld: &mut CoefficientField, x: Complex64, partner: Complex64| -> Result<()> {
            fld.set_entry(&sys.mode.rep, sys.mode.row, sys.mode.col, x)?;
            if !self_partner {
                fld.set_entry(&sys.partner.rep, sys.partner.row, sys.partner.col, partner)?;
            }
            Ok(())
        };
        match kind {
            WitnessKind::GhZero => {
                if abs_disc > tol {
                    skipped.push((m.clone(), format!("|Δ| = {abs_disc:e} is not zero")));
                    continue;
                }
                let x = if self_partner {
                    // a₁₁x = p·conj(x) with |a₁₁| = |p|
                    if a11 == cz() {
                        Complex64::new(1.0, 0.0)
                    } else {
                        (p / a11).sqrt() * p.norm()
                    }
                } else {
                    a22
                };
                // (x, y) = (a₂₂, p̄) spans the kernel; the stored partner is phase·conj(y)
                set_pair(&mut u, x, p * sys.phase)?;
                rows.push(WitnessRow { mode: m.clone(), weight: m.rep.weight(), abs_disc, abs_u: x.norm() });
            }
            WitnessKind::GhNecessity { c_re, c_im } => {
                let c = Complex64::new(c_re, c_im);
                let x = a22 * c + p * c.conj();
                let partner = (a11.conj() * c + p * c.conj()) * sys.phase;
                set_pair(&mut u, x, partner)?;
                set_pair(&mut f, c * sys.det, c * sys.det.conj() * sys.phase)?;
                rows.push(WitnessRow { mode: m.clone(), weight: m.rep.weight(), abs_disc, abs_u: x.norm() });
            }
            WitnessKind::GsFail => {
                if abs_disc <= tol {
                    skipped.push((m.clone(), "singular mode".into()));
                    continue;
                }
                if self_partner {
                    skipped.push((m.clone(), "mode is its own conjugate partner".into()));
                    continue;
                }
                let fp = Complex64::new(1.0, 0.0) / p.conj();
                f.set_entry(&sys.partner.rep, sys.partner.row, sys.partner.col, fp)?;
                let sol = sys.solve(cz(), fp, tol)?;
                set_pair(&mut u, sol.u, sol.u_partner)?;
                rows.push(WitnessRow { mode: m.clone(), weight: m.rep.weight(), abs_disc, abs_u: sol.u.norm() });
            }
        }
    }
    let f = match kind {
        WitnessKind::GhZero => None,
        _ => Some(f),
    };
    Ok(WitnessBundle { kind, u, f, rows, skipped })
}

/// Picks up to `n` modes qualifying for `kind`, scanning in enumeration order.
///
/// Zero witnesses take singular diagonal modes. The other kinds take, per
/// weight shell, the smallest nonzero `|Δ|` on a diagonal mode that is not
/// its own partner, keeping only shells that set a new record low.
pub fn select_witness_modes(op: &VekuaConstOp, kind: WitnessKind, cutoff: f64, n: usize) -> Result<Vec<Mode>> {
    let reps = enumerate_reps(op.l.group(), cutoff)?;
    let mut out = Vec::new();
    let mut used = BTreeSet::new();
    match kind {
        WitnessKind::GhZero => {
            for rep in &reps {
                let tol = op.zero_tol_at(rep);
                for row in 0..rep.dim() {
                    let m = Mode::diagonal(rep.clone(), row);
                    if discriminant(op, rep, row)?.norm() <= tol && used.insert(m.canonical()) {
                        out.push(m);
                        if out.len() == n {
                            return Ok(out);
                        }
                    }
                }
            }
        }
        _ => {
            let mut record = f64::INFINITY;
            let mut shells: BTreeMap<u64, (f64, Mode)> = BTreeMap::new();
            for rep in &reps {
                let tol = op.zero_tol_at(rep);
                for row in 0..rep.dim() {
                    let m = Mode::diagonal(rep.clone(), row);
                    let a = discriminant(op, rep, row)?.norm();
                    if a <= tol || m.is_self_partner() || m.canonical() != m {
                        continue;
                    }
                    let e = shells.entry(rep.weight_sq_x4()).or_insert((a, m.clone()));
                    if a < e.0 {
                        *e = (a, m);
                    }
                }
            }
            for (_, (a, m)) in shells {
                if a < record {
                    record = a;
                    out.push(m);
                    if out.len() == n {
                        break;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Decay fit of per-rep sup moduli of a field.
pub fn decay_fit(u: &CoefficientField) -> Result<PowerLawFit> {
    let v: BTreeMap<RepPoint, f64> = u.sup_profile().into_iter().collect();
    fit_power_law(&v, FitMode::Decay)
}
