//! Coefficient fields: finitely supported maps from representation classes
//! to `d_ξ × d_ξ` complex matrices, with everything outside the support
//! treated as exactly zero.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dual::{conjugate_rep, GroupSpec, RepPoint};
use crate::error::{Result, VekuaError};
use crate::symbol::DiagonalSymbol;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMatrix::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(VekuaError::Config(format!("matrix is not square ({dim} rows)")));
        }
        Ok(CMatrix { dim, data: rows.into_iter().flatten().collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.dim + col] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        self.data.chunks(self.dim.max(1)).map(|r| r.to_vec()).collect()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

/// A finitely supported coefficient field whose support is closed under conjugation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    group: GroupSpec,
    entries: BTreeMap<RepPoint, CMatrix>,
}

impl CoefficientField {
    pub fn new(group: GroupSpec) -> Self {
        CoefficientField { group, entries: BTreeMap::new() }
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    /// Stores `mat` at `rep`, adding a zero matrix at `ξ̄` if nothing is stored there.
    pub fn insert(&mut self, rep: RepPoint, mat: CMatrix) -> Result<()> {
        if !rep.belongs_to(&self.group) {
            return Err(VekuaError::GroupMismatch(format!("rep {rep} is not a class of {}", self.group)));
        }
        if mat.dim() != rep.dim() {
            return Err(VekuaError::Config(format!(
                "matrix at {rep} is {0}×{0}, expected {1}×{1}",
                mat.dim(),
                rep.dim()
            )));
        }
        let partner = conjugate_rep(&rep).target;
        if partner != rep && !self.entries.contains_key(&partner) {
            self.entries.insert(partner.clone(), CMatrix::zeros(partner.dim()));
        }
        self.entries.insert(rep, mat);
        Ok(())
    }

    /// Sets a single entry, creating a zero matrix first when needed.
    pub fn set_entry(&mut self, rep: &RepPoint, row: usize, col: usize, v: Complex64) -> Result<()> {
        if !self.entries.contains_key(rep) {
            self.insert(rep.clone(), CMatrix::zeros(rep.dim()))?;
        }
        self.entries.get_mut(rep).expect("just inserted").set(row, col, v);
        Ok(())
    }

    pub fn get(&self, rep: &RepPoint) -> Option<&CMatrix> {
        self.entries.get(rep)
    }

    /// Entry value, zero outside the support.
    pub fn entry(&self, rep: &RepPoint, row: usize, col: usize) -> Complex64 {
        self.entries.get(rep).map_or(Complex64::new(0.0, 0.0), |m| m.get(row, col))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RepPoint, &CMatrix)> {
        self.entries.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &RepPoint> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sup of all coefficient moduli.
    pub fn max_norm(&self) -> f64 {
        self.entries.values().map(CMatrix::max_abs).fold(0.0, f64::max)
    }

    /// Per-rep sup of coefficient moduli, in enumeration order.
    pub fn sup_profile(&self) -> Vec<(RepPoint, f64)> {
        self.entries.iter().map(|(r, m)| (r.clone(), m.max_abs())).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(CMatrix::is_zero)
    }

    fn check_group(&self, other: &GroupSpec) -> Result<()> {
        if &self.group != other {
            return Err(VekuaError::GroupMismatch(format!("{} vs {}", self.group, other)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let recs: Vec<FieldRecord> = self
            .entries
            .iter()
            .map(|(rep, m)| FieldRecord {
                rep: rep.to_indices(),
                matrix: m.rows().into_iter().map(|r| r.into_iter().map(Cx::from).collect()).collect(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&recs)?)
    }

    pub fn from_json(text: &str, group: &GroupSpec) -> Result<Self> {
        let recs: Vec<FieldRecord> = serde_json::from_str(text)?;
        let mut out = CoefficientField::new(group.clone());
        for rec in recs {
            let rep = RepPoint::from_indices(group, &rec.rep)?;
            let rows = rec.matrix.into_iter().map(|r| r.into_iter().map(Complex64::from).collect()).collect();
            out.insert(rep, CMatrix::from_rows(rows)?)?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, group: &GroupSpec) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?, group)
    }
}

/// JSON form of a complex number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Cx {
    fn from(z: Complex64) -> Self {
        Cx { re: z.re, im: z.im }
    }
}

impl From<Cx> for Complex64 {
    fn from(c: Cx) -> Self {
        Complex64::new(c.re, c.im)
    }
}

#[derive(Serialize, Deserialize)]
struct FieldRecord {
    rep: Vec<i64>,
    matrix: Vec<Vec<Cx>>,
}

/// Coefficients of `ū`: `v̂(ξ)_{ij} = phase(i,j)·conj(û(ξ̄)_{i'j'})` with `i' = d-1-i`.
pub fn conj_field(u: &CoefficientField) -> CoefficientField {
    let mut out = CoefficientField::new(u.group.clone());
    for rep in u.entries.keys() {
        let rule = conjugate_rep(rep);
        let d = rep.dim();
        let mut m = CMatrix::zeros(d);
        if let Some(src) = u.entries.get(&rule.target) {
            for i in 0..d {
                for j in 0..d {
                    let v = src.get(rule.entry_map(i), rule.entry_map(j)).conj() * rule.phase(i, j);
                    m.set(i, j, v);
                }
            }
        }
        out.entries.insert(rep.clone(), m);
    }
    out
}

/// Row action of a diagonal symbol: `ŵ(ξ)_{mn} = σ_m(ξ)·û(ξ)_{mn}`.
pub fn apply_multiplier(sigma: &DiagonalSymbol, u: &CoefficientField) -> Result<CoefficientField> {
    u.check_group(sigma.group())?;
    let mut out = CoefficientField::new(u.group.clone());
    for (rep, src) in &u.entries {
        let s = sigma.eval(rep)?;
        let d = rep.dim();
        let mut m = CMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, s[i] * src.get(i, j));
            }
        }
        out.entries.insert(rep.clone(), m);
    }
    Ok(out)
}

/// `a·u + b·v` over the union of supports.
pub fn field_combine(a: Complex64, u: &CoefficientField, b: Complex64, v: &CoefficientField) -> Result<CoefficientField> {
    u.check_group(&v.group)?;
    let mut out = CoefficientField::new(u.group.clone());
    for rep in u.entries.keys().chain(v.entries.keys()) {
        if out.entries.contains_key(rep) {
            continue;
        }
        let d = rep.dim();
        let mut m = CMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, a * u.entry(rep, i, j) + b * v.entry(rep, i, j));
            }
        }
        out.entries.insert(rep.clone(), m);
    }
    Ok(out)
}

/// A field whose coefficients are sampled on the closed uniform grid `t_j = 2πj/T`, `j = 0..=T`.
///
/// Storage is sparse per entry; unstored entries are zero. A rep may be
/// present with no stored entries (the partner of a stored rep).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeCoefficientField {
    group: GroupSpec,
    grid: usize,
    entries: BTreeMap<RepPoint, BTreeMap<(usize, usize), Vec<Complex64>>>,
}

impl TimeCoefficientField {
    pub fn new(group: GroupSpec, grid: usize) -> Result<Self> {
        check_grid(grid)?;
        Ok(TimeCoefficientField { group, grid, entries: BTreeMap::new() })
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    fn register(&mut self, rep: &RepPoint) -> Result<()> {
        if !rep.belongs_to(&self.group) {
            return Err(VekuaError::GroupMismatch(format!("rep {rep} is not a class of {}", self.group)));
        }
        let partner = conjugate_rep(rep).target;
        self.entries.entry(partner).or_default();
        self.entries.entry(rep.clone()).or_default();
        Ok(())
    }

    /// Samples of entry `(row, col)` at `rep`, if stored.
    pub fn samples(&self, rep: &RepPoint, row: usize, col: usize) -> Option<&[Complex64]> {
        self.entries.get(rep).and_then(|b| b.get(&(row, col))).map(Vec::as_slice)
    }

    pub fn set_samples(&mut self, rep: &RepPoint, row: usize, col: usize, s: Vec<Complex64>) -> Result<()> {
        if s.len() != self.grid + 1 {
            return Err(VekuaError::Config(format!("expected {} samples, got {}", self.grid + 1, s.len())));
        }
        let d = rep.dim();
        if row >= d || col >= d {
            return Err(VekuaError::Config(format!("entry ({row}, {col}) out of range at {rep}")));
        }
        self.register(rep)?;
        self.entries.get_mut(rep).expect("registered").insert((row, col), s);
        Ok(())
    }

    /// Stored entries as `(rep, row, col, samples)`.
    pub fn iter(&self) -> impl Iterator<Item = (&RepPoint, usize, usize, &[Complex64])> {
        self.entries.iter().flat_map(|(r, b)| b.iter().map(move |(&(i, j), s)| (r, i, j, s.as_slice())))
    }

    pub fn support(&self) -> impl Iterator<Item = &RepPoint> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.iter().flat_map(|e| e.3).map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Per-rep `sup_t max_entry |û(t,ξ)|`.
    pub fn sup_profile(&self) -> Vec<(RepPoint, f64)> {
        self.entries
            .iter()
            .map(|(r, b)| (r.clone(), b.values().flatten().map(|z| z.norm()).fold(0.0, f64::max)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let recs: Vec<TimeRecord> = self
            .entries
            .iter()
            .map(|(rep, b)| TimeRecord {
                rep: rep.to_indices(),
                grid: self.grid,
                entries: b
                    .iter()
                    .map(|(&(row, col), s)| TimeEntry { row, col, samples: s.iter().copied().map(Cx::from).collect() })
                    .collect(),
            })
            .collect();
        Ok(serde_json::to_string(&recs)?)
    }

    /// Parses a time field; an empty file yields an empty field on `default_grid`.
    pub fn from_json(text: &str, group: &GroupSpec, default_grid: usize) -> Result<Self> {
        let recs: Vec<TimeRecord> = serde_json::from_str(text)?;
        let grid = recs.first().map_or(default_grid, |r| r.grid);
        let mut out = TimeCoefficientField::new(group.clone(), grid)?;
        for rec in recs {
            if rec.grid != grid {
                return Err(VekuaError::Config(format!("mixed grids {} and {}", grid, rec.grid)));
            }
            let rep = RepPoint::from_indices(group, &rec.rep)?;
            out.register(&rep)?;
            for e in rec.entries {
                out.set_samples(&rep, e.row, e.col, e.samples.into_iter().map(Complex64::from).collect())?;
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, group: &GroupSpec, default_grid: usize) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?, group, default_grid)
    }
}

pub(crate) fn check_grid(grid: usize) -> Result<()> {
    if grid < 4 || grid % 2 != 0 {
        return Err(VekuaError::Config(format!("time grid must be even and ≥ 4, got {grid}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TimeRecord {
    rep: Vec<i64>,
    grid: usize,
    #[serde(default)]
    entries: Vec<TimeEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TimeEntry {
    row: usize,
    col: usize,
    samples: Vec<Cx>,
}

/// Which bound a power-law fit certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Upper envelope; the exponent is a growth order.
    UpperGrowth,
    /// Upper envelope; a negative exponent is a decay order.
    Decay,
    /// Lower envelope, for small-divisor bounds.
    LowerBound,
}

/// `value ≲ C·⟨ξ⟩^exponent` (or `≳` for lower-bound fits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub constant: f64,
    pub exponent: f64,
    /// Largest log-scale gap between the bound and a sample.
    pub max_residual: f64,
    pub samples: usize,
    /// Exact zeros left out of the log fit.
    pub excluded_zeros: usize,
    pub identically_zero: bool,
}

impl PowerLawFit {
    pub fn bound_at(&self, x: f64) -> f64 {
        self.constant * x.powf(self.exponent)
    }
}

/// Fits `value ~ C·weight^e` over reps. See [`fit_power_law_xy`].
pub fn fit_power_law(values: &BTreeMap<RepPoint, f64>, mode: FitMode) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = values.iter().map(|(r, v)| (r.weight(), *v)).collect();
    fit_power_law_xy(&pts, mode)
}

/// Log-log least squares on the per-abscissa envelope, tail half only.
///
/// Samples sharing an abscissa form a shell; the shell max (or min for
/// lower bounds) is the envelope. The slope comes from shells in the upper
/// half of the abscissa range, since asymptotic orders are what matter and
/// lower-order terms bend the head. The constant is then moved so the
/// bound holds for every sample.
pub fn fit_power_law_xy(points: &[(f64, f64)], mode: FitMode) -> Result<PowerLawFit> {
    if points.iter().any(|&(x, v)| !(x > 0.0) || !(v >= 0.0) || !x.is_finite() || !v.is_finite()) {
        return Err(VekuaError::Fit("abscissae must be positive and values finite and nonnegative".into()));
    }
    let excluded_zeros = points.iter().filter(|p| p.1 == 0.0).count();
    let nonzero: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    if nonzero.is_empty() {
        if points.is_empty() {
            return Err(VekuaError::Fit("no samples".into()));
        }
        return Ok(PowerLawFit {
            constant: 0.0,
            exponent: 0.0,
            max_residual: 0.0,
            samples: 0,
            excluded_zeros,
            identically_zero: true,
        });
    }

    let mut shells: BTreeMap<u64, f64> = BTreeMap::new();
    for &(x, v) in &nonzero {
        let e = shells.entry(x.to_bits()).or_insert(v);
        *e = match mode {
            FitMode::LowerBound => e.min(v),
            _ => e.max(v),
        };
    }
    if shells.len() < 3 {
        return Err(VekuaError::Fit(format!("need at least 3 distinct weights, got {}", shells.len())));
    }
    let env: Vec<(f64, f64)> = shells.iter().map(|(b, v)| (f64::from_bits(*b).ln(), v.ln())).collect();
    let lo = env.first().unwrap().0.exp();
    let hi = env.last().unwrap().0.exp();
    let mid = 0.5 * (lo + hi);
    let tail: Vec<(f64, f64)> = env.iter().copied().filter(|p| p.0.exp() >= mid).collect();
    let used = if tail.len() >= 3 { &tail } else { &env };

    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    let offsets = nonzero.iter().map(|&(x, v)| v.ln() - exponent * x.ln());
    let log_c = match mode {
        FitMode::LowerBound => offsets.fold(f64::INFINITY, f64::min),
        _ => offsets.fold(f64::NEG_INFINITY, f64::max),
    };
    let max_residual = nonzero
        .iter()
        .map(|&(x, v)| (log_c + exponent * x.ln() - v.ln()).abs())
        .fold(0.0, f64::max);

    Ok(PowerLawFit {
        constant: log_c.exp(),
        exponent,
        max_residual,
        samples: nonzero.len(),
        excluded_zeros,
        identically_zero: false,
    })
}
