//! Diagonal left-invariant symbols, the operator-expression language, and
//! the 3-sphere ladder actions on coefficient fields.
//!
//! Expressions are sums of terms `coeff * gen @ factor ^ power` where `gen`
//! is `d0` (the diagonal generator of a sphere factor, `σ_m = m`) or `Dt`
//! (a circle derivative, `σ(k) = k`). Terms without a generator are
//! constants. Parenthesized groups must be constant, e.g. `(1.5-2i)*d0^2`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dual::{conjugate_rep, enumerate_reps, FactorKind, GroupSpec, RepPoint};
use crate::error::{ParseError, Result, VekuaError};
use crate::field::{fit_power_law, CMatrix, CoefficientField, Cx, FitMode, PowerLawFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Generator {
    D0,
    Dt,
}

impl Generator {
    fn name(self) -> &'static str {
        match self {
            Generator::D0 => "d0",
            Generator::Dt => "Dt",
        }
    }

    fn kind(self) -> FactorKind {
        match self {
            Generator::D0 => FactorKind::Sphere3,
            Generator::Dt => FactorKind::Circle,
        }
    }
}

/// `gen @ factor ^ power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial {
    pub factor: usize,
    pub generator: Generator,
    pub power: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coeff: Complex64,
    /// `None` for a constant term.
    pub mono: Option<Monomial>,
}

/// A parsed expression, or a table of symbol vectors per rep.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolExpr {
    pub terms: Vec<Term>,
    pub tabulated: Option<BTreeMap<RepPoint, Vec<Complex64>>>,
}

impl SymbolExpr {
    /// Merges like terms, drops zero coefficients, and sorts: constants first, then by monomial.
    fn normalize(terms: Vec<Term>) -> Vec<Term> {
        let mut acc: BTreeMap<Option<Monomial>, Complex64> = BTreeMap::new();
        for t in terms {
            *acc.entry(t.mono).or_insert(Complex64::new(0.0, 0.0)) += t.coeff;
        }
        acc.into_iter()
            .filter(|(_, c)| *c != Complex64::new(0.0, 0.0))
            .map(|(mono, coeff)| Term { coeff, mono })
            .collect()
    }

    /// Highest generator power, 0 for constants.
    pub fn max_power(&self) -> u32 {
        self.terms.iter().filter_map(|t| t.mono.map(|m| m.power)).max().unwrap_or(0)
    }
}

fn fmt_complex(z: Complex64) -> String {
    if z.im.is_sign_negative() {
        format!("({}-{}i)", z.re, -z.im)
    } else {
        format!("({}+{}i)", z.re, z.im)
    }
}

impl fmt::Display for SymbolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.tabulated.is_some() {
            return write!(f, "<table>");
        }
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| match t.mono {
                None => fmt_complex(t.coeff),
                Some(m) => format!("{}*{}@{}^{}", fmt_complex(t.coeff), m.generator.name(), m.factor, m.power),
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Parses an operator expression against `group`.
pub fn parse_symbol(text: &str, group: &GroupSpec) -> std::result::Result<SymbolExpr, ParseError> {
    let mut p = Parser { chars: text.chars().collect(), pos: 0, group };
    let terms = p.expr(false)?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.err(format!("unexpected character {:?}", p.chars[p.pos])));
    }
    Ok(SymbolExpr { terms: SymbolExpr::normalize(terms), tabulated: None })
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    group: &'a GroupSpec,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self, in_parens: bool) -> std::result::Result<Vec<Term>, ParseError> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        match self.peek() {
            Some('-') => {
                sign = -1.0;
                self.pos += 1;
            }
            Some('+') => self.pos += 1,
            _ => {}
        }
        loop {
            let mut t = self.term()?;
            t.coeff *= sign;
            terms.push(t);
            match self.peek() {
                Some('+') => sign = 1.0,
                Some('-') => sign = -1.0,
                Some(')') if in_parens => return Ok(terms),
                None => return Ok(terms),
                Some(c) => return Err(self.err(format!("expected '+' or '-', found {c:?}"))),
            }
            self.pos += 1;
        }
    }

    fn term(&mut self) -> std::result::Result<Term, ParseError> {
        let mut coeff = Complex64::new(1.0, 0.0);
        let mut mono: Option<Monomial> = None;
        let mut first = true;
        loop {
            let start = self.pos;
            match self.peek() {
                // unary sign, as in "1+-2i"
                Some(s @ ('-' | '+')) if first => {
                    self.pos += 1;
                    if s == '-' {
                        coeff = -coeff;
                    }
                    continue;
                }
                Some(c) if c.is_ascii_digit() || c == '.' => coeff *= self.number()?,
                Some('i') => {
                    self.pos += 1;
                    coeff *= Complex64::new(0.0, 1.0);
                }
                Some('(') => {
                    self.pos += 1;
                    let inner = self.expr(true)?;
                    if self.peek() != Some(')') {
                        return Err(self.err("expected ')'"));
                    }
                    self.pos += 1;
                    if inner.iter().any(|t| t.mono.is_some()) {
                        return Err(ParseError { pos: start, msg: "parenthesized group must be a constant".into() });
                    }
                    coeff *= inner.iter().map(|t| t.coeff).sum::<Complex64>();
                }
                Some('d') | Some('D') => {
                    let m = self.generator()?;
                    if mono.is_some() {
                        return Err(ParseError { pos: start, msg: "at most one generator per term".into() });
                    }
                    mono = Some(m);
                }
                Some(c) if first => return Err(self.err(format!("expected a term, found {c:?}"))),
                None if first => return Err(self.err("unexpected end of input")),
                _ => return Ok(Term { coeff, mono }),
            }
            first = false;
            if self.peek() == Some('*') {
                self.pos += 1;
                if self.peek().is_none() {
                    return Err(self.err("unexpected end of input after '*'"));
                }
                first = true;
            }
        }
    }

    fn number(&mut self) -> std::result::Result<Complex64, ParseError> {
        let start = self.pos;
        let mut end = self.pos;
        let at = |i: usize| self.chars.get(i).copied();
        while at(end).is_some_and(|c| c.is_ascii_digit() || c == '.') {
            end += 1;
        }
        if matches!(at(end), Some('e') | Some('E')) {
            let mut e = end + 1;
            if matches!(at(e), Some('+') | Some('-')) {
                e += 1;
            }
            if at(e).is_some_and(|c| c.is_ascii_digit()) {
                while at(e).is_some_and(|c| c.is_ascii_digit()) {
                    e += 1;
                }
                end = e;
            }
        }
        let text: String = self.chars[start..end].iter().collect();
        let v: f64 = text
            .parse()
            .map_err(|_| ParseError { pos: start, msg: format!("malformed number {text:?}") })?;
        if !v.is_finite() {
            return Err(ParseError { pos: start, msg: format!("number {text:?} is not finite") });
        }
        self.pos = end;
        if at(end) == Some('i') {
            self.pos += 1;
            return Ok(Complex64::new(0.0, v));
        }
        Ok(Complex64::new(v, 0.0))
    }

    fn generator(&mut self) -> std::result::Result<Monomial, ParseError> {
        let start = self.pos;
        let name: String = self.chars[start..].iter().take(2).collect();
        let generator = match name.as_str() {
            "d0" => Generator::D0,
            "Dt" => Generator::Dt,
            _ => {
                let word: String = self.chars[start..].iter().take_while(|c| c.is_alphanumeric()).collect();
                return Err(ParseError { pos: start, msg: format!("unknown generator {word:?}") });
            }
        };
        self.pos += 2;
        if self.chars.get(self.pos).is_some_and(|c| c.is_alphanumeric()) {
            let word: String = self.chars[start..].iter().take_while(|c| c.is_alphanumeric()).collect();
            return Err(ParseError { pos: start, msg: format!("unknown generator {word:?}") });
        }
        let kind = generator.kind();
        let factor = if self.peek() == Some('@') {
            self.pos += 1;
            let fpos = self.pos;
            self.skip_ws();
            let idx = self.uint()?;
            let idx = usize::try_from(idx).map_err(|_| ParseError { pos: fpos, msg: "factor index too large".into() })?;
            match self.group.factors().get(idx) {
                None => {
                    return Err(ParseError {
                        pos: fpos,
                        msg: format!("factor index {idx} out of range for {}", self.group),
                    })
                }
                Some(k) if *k != kind => return Err(kind_error(generator, start)),
                Some(_) => idx,
            }
        } else {
            let matching: Vec<usize> =
                self.group.factors().iter().enumerate().filter(|(_, k)| **k == kind).map(|(i, _)| i).collect();
            match matching.as_slice() {
                [] => return Err(kind_error(generator, start)),
                [only] => *only,
                _ => {
                    return Err(ParseError {
                        pos: start,
                        msg: format!("{} is ambiguous here, name the factor with '@'", generator.name()),
                    })
                }
            }
        };
        let mut power = 1;
        if self.peek() == Some('^') {
            self.pos += 1;
            self.skip_ws();
            let ppos = self.pos;
            let p = self.uint()?;
            if p == 0 || p > 64 {
                return Err(ParseError { pos: ppos, msg: format!("power must be between 1 and 64, got {p}") });
            }
            power = p as u32;
        }
        Ok(Monomial { factor, generator, power })
    }

    fn uint(&mut self) -> std::result::Result<u64, ParseError> {
        let start = self.pos;
        while self.chars.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse().map_err(|_| ParseError { pos: start, msg: "expected a nonnegative integer".into() })
    }
}

fn kind_error(g: Generator, pos: usize) -> ParseError {
    let msg = match g {
        Generator::D0 => "d0 requires a sphere3 factor",
        Generator::Dt => "Dt requires a circle factor",
    };
    ParseError { pos, msg: msg.into() }
}

/// Diagonal entries `σ_m(ξ)` of a symbol at `rep`.
pub fn eval_symbol(expr: &SymbolExpr, rep: &RepPoint) -> Result<Vec<Complex64>> {
    if let Some(table) = &expr.tabulated {
        return table.get(rep).cloned().ok_or_else(|| VekuaError::SymbolUndefined(rep.to_string()));
    }
    let d = rep.dim();
    let mut out = vec![Complex64::new(0.0, 0.0); d];
    for t in &expr.terms {
        match t.mono {
            None => out.iter_mut().for_each(|s| *s += t.coeff),
            Some(m) => {
                for (i, s) in out.iter_mut().enumerate() {
                    let g = match m.generator {
                        Generator::D0 => rep.m_at(i, m.factor),
                        Generator::Dt => rep.k_at(m.factor).map(|k| k as f64),
                    }
                    .ok_or_else(|| VekuaError::GroupMismatch(format!("rep {rep} lacks factor {}", m.factor)))?;
                    *s += t.coeff * g.powi(m.power as i32);
                }
            }
        }
    }
    Ok(out)
}

/// A diagonal symbol bound to a group, with its growth order `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSymbol {
    group: GroupSpec,
    expr: SymbolExpr,
    order: u32,
}

impl DiagonalSymbol {
    pub fn parse(text: &str, group: &GroupSpec) -> Result<Self> {
        let expr = parse_symbol(text, group)?;
        Ok(DiagonalSymbol { group: group.clone(), order: expr.max_power(), expr })
    }

    pub fn from_expr(expr: SymbolExpr, group: &GroupSpec) -> Result<Self> {
        if let Some(table) = expr.tabulated.clone() {
            return Self::from_table(group, table);
        }
        for t in &expr.terms {
            if let Some(m) = t.mono {
                if group.factors().get(m.factor) != Some(&m.generator.kind()) {
                    return Err(VekuaError::GroupMismatch(format!("{} @ {} on {group}", m.generator.name(), m.factor)));
                }
            }
        }
        Ok(DiagonalSymbol { group: group.clone(), order: expr.max_power(), expr })
    }

    /// A tabulated symbol. Its order is the rounded-up fitted growth exponent.
    pub fn from_table(group: &GroupSpec, table: BTreeMap<RepPoint, Vec<Complex64>>) -> Result<Self> {
        for (rep, v) in &table {
            if !rep.belongs_to(group) || v.len() != rep.dim() {
                return Err(VekuaError::Config(format!("table entry at {rep} does not fit {group}")));
            }
        }
        let sup: BTreeMap<RepPoint, f64> =
            table.iter().map(|(r, v)| (r.clone(), v.iter().map(|z| z.norm()).fold(0.0, f64::max))).collect();
        let order = match fit_power_law(&sup, FitMode::UpperGrowth) {
            Ok(fit) if !fit.identically_zero => fit.exponent.max(0.0).ceil() as u32,
            _ => 0,
        };
        Ok(DiagonalSymbol { group: group.clone(), expr: SymbolExpr { terms: vec![], tabulated: Some(table) }, order })
    }

    pub fn table_from_json(text: &str, group: &GroupSpec) -> Result<Self> {
        let recs: Vec<TableRecord> = serde_json::from_str(text)?;
        let mut table = BTreeMap::new();
        for rec in recs {
            let rep = RepPoint::from_indices(group, &rec.rep)?;
            table.insert(rep, rec.diag.into_iter().map(Complex64::from).collect());
        }
        Self::from_table(group, table)
    }

    pub fn load_table(path: &Path, group: &GroupSpec) -> Result<Self> {
        Self::table_from_json(&fs::read_to_string(path)?, group)
    }

    pub fn table_to_json(&self) -> Result<String> {
        let Some(table) = &self.expr.tabulated else {
            return Err(VekuaError::Config("symbol is not tabulated".into()));
        };
        let recs: Vec<TableRecord> = table
            .iter()
            .map(|(r, v)| TableRecord { rep: r.to_indices(), diag: v.iter().copied().map(Cx::from).collect() })
            .collect();
        Ok(serde_json::to_string_pretty(&recs)?)
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn expr(&self) -> &SymbolExpr {
        &self.expr
    }

    /// Growth order `K` used to scale zero tolerances.
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn eval(&self, rep: &RepPoint) -> Result<Vec<Complex64>> {
        if !rep.belongs_to(&self.group) {
            return Err(VekuaError::GroupMismatch(format!("rep {rep} is not a class of {}", self.group)));
        }
        eval_symbol(&self.expr, rep)
    }
}

#[derive(Serialize, Deserialize)]
struct TableRecord {
    rep: Vec<i64>,
    diag: Vec<Cx>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatViolation {
    pub rep: RepPoint,
    pub entry: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatReport {
    pub compat: bool,
    /// `None` when fewer than three weight shells are available.
    pub growth: Option<PowerLawFit>,
    pub violations: Vec<CompatViolation>,
}

/// Checks `σ(ξ̄)[m'] = conj σ(ξ)[m]` at every rep up to `cutoff` and fits the growth bound.
pub fn check_diagonal_compat(sym: &DiagonalSymbol, cutoff: f64) -> Result<CompatReport> {
    let reps = enumerate_reps(&sym.group, cutoff)?;
    let mut violations = Vec::new();
    let mut sup = BTreeMap::new();
    for rep in &reps {
        let here = match sym.eval(rep) {
            Ok(v) => v,
            Err(_) if sym.expr.tabulated.is_some() => continue,
            Err(e) => return Err(e),
        };
        sup.insert(rep.clone(), here.iter().map(|z| z.norm()).fold(0.0, f64::max));
        let rule = conjugate_rep(rep);
        let there = match sym.eval(&rule.target) {
            Ok(v) => v,
            Err(_) => {
                violations.push(CompatViolation {
                    rep: rep.clone(),
                    entry: 0,
                    detail: format!("symbol undefined at conjugate {}", rule.target),
                });
                continue;
            }
        };
        for (m, s) in here.iter().enumerate() {
            let other = there[rule.entry_map(m)];
            if (other - s.conj()).norm() > 1e-12 * (1.0 + s.norm()) {
                violations.push(CompatViolation {
                    rep: rep.clone(),
                    entry: m,
                    detail: format!("σ at conjugate = {other}, conj σ = {}", s.conj()),
                });
            }
        }
    }
    let growth = fit_power_law(&sup, FitMode::UpperGrowth).ok();
    Ok(CompatReport { compat: violations.is_empty(), growth, violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Plus,
    Minus,
    Zero,
}

/// Weight of the ladder step leaving row `m` of spin `ℓ` (both given doubled).
pub fn ladder_weight(which: Ladder, twice_ell: u32, twice_m: i64) -> f64 {
    let l = twice_ell as f64 / 2.0;
    let m = twice_m as f64 / 2.0;
    match which {
        Ladder::Plus => -((l - m) * (l + m + 1.0)).max(0.0).sqrt(),
        Ladder::Minus => -((l + m) * (l - m + 1.0)).max(0.0).sqrt(),
        Ladder::Zero => m,
    }
}

/// Coefficients of `∂₊u`, `∂₋u` or `∂₀u` on a sphere factor.
///
/// The ladder acts on the row index: row `m` moves to `m ± 1` with the
/// square-root weight, and steps leaving `J_ℓ` vanish. This is the row
/// convention shared with [`crate::field::apply_multiplier`].
pub fn apply_ladder(u: &CoefficientField, which: Ladder, factor: usize) -> Result<CoefficientField> {
    let group = u.group();
    if group.factors().get(factor) != Some(&FactorKind::Sphere3) {
        return Err(VekuaError::Config(format!("factor {factor} of {group} is not a sphere3 factor")));
    }
    let slot = group.factors()[..factor].iter().filter(|k| **k == FactorKind::Sphere3).count();
    let mut out = CoefficientField::new(group.clone());
    for (rep, src) in u.iter() {
        let d = rep.dim();
        let t = rep.twice_ell_at(factor).expect("sphere factor");
        let mut m = CMatrix::zeros(d);
        for row in 0..d {
            let mut e = rep.entry(row);
            let tm = e.twice_m[slot];
            let w = ladder_weight(which, t, tm);
            e.twice_m[slot] += match which {
                Ladder::Plus => 2,
                Ladder::Minus => -2,
                Ladder::Zero => 0,
            };
            let Some(dest) = rep.linear_index(&e) else { continue };
            for col in 0..d {
                m.set(dest, col, m.get(dest, col) + w * src.get(row, col));
            }
        }
        out.insert(rep.clone(), m)?;
    }
    Ok(out)
}
