//! Supported groups and their truncated unitary duals.
//!
//! A group is an ordered product of circles and 3-spheres. Representation
//! classes are stored with exact integer data: a circle factor carries its
//! frequency `k`, a 3-sphere factor carries `2ℓ` so half-integer spins stay
//! exact. Matrix entries of a representation are addressed by a row-major
//! linear index over the sphere factors, each factor running `m = -ℓ..=ℓ`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VekuaError};

/// Kind of a single group factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FactorKind {
    #[serde(rename = "t1")]
    Circle,
    #[serde(rename = "s3")]
    Sphere3,
}

impl FactorKind {
    pub fn tag(self) -> &'static str {
        match self {
            FactorKind::Circle => "t1",
            FactorKind::Sphere3 => "s3",
        }
    }
}

/// An ordered product of circle and 3-sphere factors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<FactorKind>", into = "Vec<FactorKind>")]
pub struct GroupSpec {
    factors: Vec<FactorKind>,
}

impl TryFrom<Vec<FactorKind>> for GroupSpec {
    type Error = VekuaError;

    fn try_from(factors: Vec<FactorKind>) -> Result<Self> {
        GroupSpec::new(factors)
    }
}

impl From<GroupSpec> for Vec<FactorKind> {
    fn from(g: GroupSpec) -> Self {
        g.factors
    }
}

impl GroupSpec {
    pub fn new(factors: Vec<FactorKind>) -> Result<Self> {
        if factors.is_empty() {
            return Err(VekuaError::Config("group spec needs at least one factor".into()));
        }
        Ok(GroupSpec { factors })
    }

    pub fn circle() -> Self {
        GroupSpec { factors: vec![FactorKind::Circle] }
    }

    pub fn sphere3() -> Self {
        GroupSpec { factors: vec![FactorKind::Sphere3] }
    }

    /// Parses factor tags such as `["s3", "t1"]`.
    pub fn from_tags<S: AsRef<str>>(tags: &[S]) -> Result<Self> {
        let factors = tags
            .iter()
            .map(|t| match t.as_ref() {
                "t1" => Ok(FactorKind::Circle),
                "s3" => Ok(FactorKind::Sphere3),
                other => Err(VekuaError::Config(format!("unknown group factor tag {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        GroupSpec::new(factors)
    }

    pub fn factors(&self) -> &[FactorKind] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// True when no factor is a 3-sphere; then no class is self-dual except the trivial one.
    pub fn is_torus(&self) -> bool {
        self.factors.iter().all(|f| *f == FactorKind::Circle)
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tags: Vec<_> = self.factors.iter().map(|k| k.tag()).collect();
        write!(f, "{}", tags.join("×"))
    }
}

/// Index data of one factor of a representation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RepIndex {
    /// Character `e^{ikt}` of a circle factor.
    Circle(i64),
    /// Spin-ℓ representation of a 3-sphere factor, stored as `2ℓ`.
    Sphere3(u32),
}

impl RepIndex {
    fn kind(self) -> FactorKind {
        match self {
            RepIndex::Circle(_) => FactorKind::Circle,
            RepIndex::Sphere3(_) => FactorKind::Sphere3,
        }
    }

    // circle: (|k|, negative last); sphere: 2ℓ
    fn order_key(self) -> (u64, bool) {
        match self {
            RepIndex::Circle(k) => (k.unsigned_abs(), k < 0),
            RepIndex::Sphere3(t) => (t as u64, false),
        }
    }

    fn weight_sq_x4(self) -> u64 {
        match self {
            RepIndex::Circle(k) => 4 * k.unsigned_abs() * k.unsigned_abs(),
            RepIndex::Sphere3(t) => t as u64 * (t as u64 + 2),
        }
    }
}

/// A representation class of the dual.
///
/// Ordering is weight-major, then lexicographic over the factors, so a
/// `BTreeMap<RepPoint, _>` iterates in enumeration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RepPoint {
    parts: Vec<RepIndex>,
}

impl RepPoint {
    pub fn new(parts: Vec<RepIndex>) -> Self {
        RepPoint { parts }
    }

    pub fn circle(k: i64) -> Self {
        RepPoint { parts: vec![RepIndex::Circle(k)] }
    }

    pub fn sphere3(twice_ell: u32) -> Self {
        RepPoint { parts: vec![RepIndex::Sphere3(twice_ell)] }
    }

    pub fn parts(&self) -> &[RepIndex] {
        &self.parts
    }

    /// Builds a rep from its serialized integer form for the given group.
    pub fn from_indices(group: &GroupSpec, idx: &[i64]) -> Result<Self> {
        if idx.len() != group.len() {
            return Err(VekuaError::Config(format!(
                "rep {idx:?} has {} indices, group {group} has {} factors",
                idx.len(),
                group.len()
            )));
        }
        let parts = group
            .factors()
            .iter()
            .zip(idx)
            .map(|(kind, &v)| match kind {
                FactorKind::Circle => Ok(RepIndex::Circle(v)),
                FactorKind::Sphere3 => u32::try_from(v)
                    .map(RepIndex::Sphere3)
                    .map_err(|_| VekuaError::Config(format!("sphere3 index 2ℓ = {v} must be nonnegative"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RepPoint { parts })
    }

    /// Serialized integer form: `2ℓ` per sphere factor, `k` per circle factor.
    pub fn to_indices(&self) -> Vec<i64> {
        self.parts
            .iter()
            .map(|p| match *p {
                RepIndex::Circle(k) => k,
                RepIndex::Sphere3(t) => t as i64,
            })
            .collect()
    }

    pub fn belongs_to(&self, group: &GroupSpec) -> bool {
        self.parts.len() == group.len() && self.parts.iter().zip(group.factors()).all(|(p, k)| p.kind() == *k)
    }

    /// Dimension `d_ξ`.
    pub fn dim(&self) -> usize {
        self.parts
            .iter()
            .map(|p| match *p {
                RepIndex::Circle(_) => 1,
                RepIndex::Sphere3(t) => t as usize + 1,
            })
            .product()
    }

    /// `4·⟨ξ⟩²`, an exact integer.
    pub fn weight_sq_x4(&self) -> u64 {
        4 + self.parts.iter().map(|p| p.weight_sq_x4()).sum::<u64>()
    }

    /// `⟨ξ⟩ = (1 + Σk² + Σℓ(ℓ+1))^{1/2}`.
    pub fn weight(&self) -> f64 {
        (self.weight_sq_x4() as f64 / 4.0).sqrt()
    }

    /// Doubled entry indices `2m` per sphere factor for a linear row/column index.
    pub fn entry(&self, linear: usize) -> EntryIndex {
        let mut rem = linear;
        let mut twice_m = Vec::new();
        for p in self.parts.iter().rev() {
            if let RepIndex::Sphere3(t) = *p {
                let radix = t as usize + 1;
                let digit = rem % radix;
                rem /= radix;
                twice_m.push(2 * digit as i64 - t as i64);
            }
        }
        twice_m.reverse();
        EntryIndex { twice_m }
    }

    /// Inverse of [`RepPoint::entry`].
    pub fn linear_index(&self, entry: &EntryIndex) -> Option<usize> {
        let mut linear = 0usize;
        let mut it = entry.twice_m.iter();
        for p in &self.parts {
            if let RepIndex::Sphere3(t) = *p {
                let tm = *it.next()?;
                let t = t as i64;
                if tm.abs() > t || (tm + t) % 2 != 0 {
                    return None;
                }
                linear = linear * (t as usize + 1) + ((tm + t) / 2) as usize;
            }
        }
        if it.next().is_some() {
            return None;
        }
        Some(linear)
    }

    /// Entry index `m` of a given sphere factor, as a real number.
    pub fn m_at(&self, linear: usize, factor: usize) -> Option<f64> {
        let mut rem = linear;
        let mut found = None;
        for (i, p) in self.parts.iter().enumerate().rev() {
            if let RepIndex::Sphere3(t) = *p {
                let radix = t as usize + 1;
                let digit = rem % radix;
                rem /= radix;
                if i == factor {
                    found = Some((2 * digit as i64 - t as i64) as f64 / 2.0);
                }
            }
        }
        found
    }

    /// Circle frequency at a given factor.
    pub fn k_at(&self, factor: usize) -> Option<i64> {
        match self.parts.get(factor)? {
            RepIndex::Circle(k) => Some(*k),
            RepIndex::Sphere3(_) => None,
        }
    }

    /// Twice the spin at a given sphere factor.
    pub fn twice_ell_at(&self, factor: usize) -> Option<u32> {
        match self.parts.get(factor)? {
            RepIndex::Sphere3(t) => Some(*t),
            RepIndex::Circle(_) => None,
        }
    }
}

impl Ord for RepPoint {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight_sq_x4().cmp(&other.weight_sq_x4()).then_with(|| {
            let a = self.parts.iter().map(|p| p.order_key());
            let b = other.parts.iter().map(|p| p.order_key());
            a.cmp(b)
        })
    }
}

impl PartialOrd for RepPoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for RepPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match *p {
                RepIndex::Circle(k) => write!(f, "k={k}")?,
                RepIndex::Sphere3(t) if t % 2 == 0 => write!(f, "ℓ={}", t / 2)?,
                RepIndex::Sphere3(t) => write!(f, "ℓ={t}/2")?,
            }
        }
        write!(f, ")")
    }
}

impl Serialize for RepPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_indices().serialize(s)
    }
}

/// Doubled entry indices, one per sphere factor; circle factors carry none.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntryIndex {
    pub twice_m: Vec<i64>,
}

impl EntryIndex {
    pub fn negated(&self) -> EntryIndex {
        EntryIndex { twice_m: self.twice_m.iter().map(|m| -m).collect() }
    }
}

/// Conjugation data of a class: `ξ̄`, the entry map, and the sign attached to each entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjRule {
    pub source: RepPoint,
    pub target: RepPoint,
    pub self_dual: bool,
}

impl ConjRule {
    /// Entry `m ↦ -m` on every sphere factor. In linear form this is `i ↦ d-1-i`.
    pub fn entry_map(&self, linear: usize) -> usize {
        self.source.dim() - 1 - linear
    }

    /// `(-1)^{m-n}` summed over sphere factors.
    pub fn phase(&self, row: usize, col: usize) -> f64 {
        let r = self.source.entry(row);
        let c = self.source.entry(col);
        let diff: i64 = r.twice_m.iter().zip(&c.twice_m).map(|(a, b)| (a - b) / 2).sum();
        if diff.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Conjugate class of `rep`: circle frequencies negate, sphere spins are self-dual.
pub fn conjugate_rep(rep: &RepPoint) -> ConjRule {
    let target = RepPoint {
        parts: rep
            .parts
            .iter()
            .map(|p| match *p {
                RepIndex::Circle(k) => RepIndex::Circle(-k),
                s => s,
            })
            .collect(),
    };
    ConjRule { self_dual: target == *rep, source: rep.clone(), target }
}

/// Every class with `⟨ξ⟩ ≤ weight_cutoff`, in enumeration order.
pub fn enumerate_reps(group: &GroupSpec, weight_cutoff: f64) -> Result<Vec<RepPoint>> {
    if group.is_empty() {
        return Err(VekuaError::Config("group spec needs at least one factor".into()));
    }
    if !(weight_cutoff >= 1.0) || !weight_cutoff.is_finite() {
        return Err(VekuaError::Config(format!("weight cutoff must be ≥ 1, got {weight_cutoff}")));
    }
    // integer budget for Σ 4k² + Σ t(t+2), with a relative slack for cutoffs given as rounded decimals
    let budget = (4.0 * (weight_cutoff * weight_cutoff - 1.0) * (1.0 + 1e-12) + 1e-9).floor() as u64;

    let mut out = Vec::new();
    let mut parts = Vec::with_capacity(group.len());
    fill(group.factors(), budget, &mut parts, &mut out);
    out.sort();
    Ok(out)
}

fn fill(factors: &[FactorKind], budget: u64, parts: &mut Vec<RepIndex>, out: &mut Vec<RepPoint>) {
    let Some((first, rest)) = factors.split_first() else {
        out.push(RepPoint { parts: parts.clone() });
        return;
    };
    match first {
        FactorKind::Circle => {
            let mut k = 0i64;
            while 4 * (k as u64) * (k as u64) <= budget {
                let used = 4 * (k as u64) * (k as u64);
                for s in if k == 0 { vec![0] } else { vec![k, -k] } {
                    parts.push(RepIndex::Circle(s));
                    fill(rest, budget - used, parts, out);
                    parts.pop();
                }
                k += 1;
            }
        }
        FactorKind::Sphere3 => {
            let mut t = 0u64;
            while t * (t + 2) <= budget {
                parts.push(RepIndex::Sphere3(t as u32));
                fill(rest, budget - t * (t + 2), parts, out);
                parts.pop();
                t += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s3t1() -> GroupSpec {
        GroupSpec::from_tags(&["s3", "t1"]).unwrap()
    }

    #[test]
    fn circle_cutoff_one_and_a_half() {
        let reps = enumerate_reps(&GroupSpec::circle(), 1.5).unwrap();
        let ks: Vec<i64> = reps.iter().map(|r| r.k_at(0).unwrap()).collect();
        assert_eq!(ks, vec![0, 1, -1]);
        assert!((reps[1].weight() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn circle_cutoff_one_is_trivial_only() {
        let reps = enumerate_reps(&GroupSpec::circle(), 1.0).unwrap();
        assert_eq!(reps, vec![RepPoint::circle(0)]);
    }

    #[test]
    fn sphere_cutoff_two() {
        let reps = enumerate_reps(&GroupSpec::sphere3(), 2.0).unwrap();
        assert_eq!(reps.len(), 3);
        let dims: Vec<usize> = reps.iter().map(|r| r.dim()).collect();
        assert_eq!(dims, vec![1, 2, 3]);
        assert_eq!(reps[0].weight(), 1.0);
        assert!((reps[1].weight() - 1.75f64.sqrt()).abs() < 1e-15);
        assert!((reps[2].weight() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bad_cutoff_and_empty_group() {
        assert!(enumerate_reps(&GroupSpec::circle(), 0.5).is_err());
        assert!(GroupSpec::new(vec![]).is_err());
        assert!(GroupSpec::from_tags(&["s2"]).is_err());
    }

    #[test]
    fn conjugate_circle() {
        let c = conjugate_rep(&RepPoint::circle(3));
        assert_eq!(c.target, RepPoint::circle(-3));
        assert!(!c.self_dual);
        assert_eq!(c.phase(0, 0), 1.0);
        assert_eq!(c.entry_map(0), 0);
    }

    #[test]
    fn conjugate_sphere_spin_one() {
        let rep = RepPoint::sphere3(2);
        let c = conjugate_rep(&rep);
        assert!(c.self_dual);
        // entry (m, n) = (1, 0) -> (-1, 0), sign (-1)^{1-0}
        let row = rep.linear_index(&EntryIndex { twice_m: vec![2] }).unwrap();
        let col = rep.linear_index(&EntryIndex { twice_m: vec![0] }).unwrap();
        assert_eq!(rep.entry(c.entry_map(row)).twice_m, vec![-2]);
        assert_eq!(rep.entry(c.entry_map(col)).twice_m, vec![0]);
        assert_eq!(c.phase(row, col), -1.0);
    }

    #[test]
    fn conjugate_product() {
        let g = s3t1();
        let rep = RepPoint::from_indices(&g, &[1, 2]).unwrap();
        let c = conjugate_rep(&rep);
        assert_eq!(c.target.to_indices(), vec![1, -2]);
        assert!(!c.self_dual);
    }

    #[test]
    fn entry_round_trip() {
        let g = GroupSpec::from_tags(&["s3", "t1", "s3"]).unwrap();
        let rep = RepPoint::from_indices(&g, &[3, -1, 2]).unwrap();
        assert_eq!(rep.dim(), 12);
        for i in 0..rep.dim() {
            let e = rep.entry(i);
            assert_eq!(rep.linear_index(&e), Some(i));
            assert_eq!(rep.entry(rep.dim() - 1 - i), e.negated());
        }
        assert_eq!(rep.m_at(0, 0), Some(-1.5));
        assert_eq!(rep.m_at(0, 2), Some(-1.0));
        assert_eq!(rep.m_at(11, 2), Some(1.0));
        assert_eq!(rep.m_at(0, 1), None);
    }

    #[test]
    fn enumeration_is_closed_sorted_and_unique() {
        let g = s3t1();
        for cutoff in [1.0, 2.5, 7.3, 12.0] {
            let reps = enumerate_reps(&g, cutoff).unwrap();
            let set: std::collections::BTreeSet<_> = reps.iter().cloned().collect();
            assert_eq!(set.len(), reps.len());
            assert!(reps.windows(2).all(|w| w[0] < w[1]));
            for r in &reps {
                assert!(r.weight() <= cutoff * (1.0 + 1e-12));
                let c = conjugate_rep(r);
                assert!(set.contains(&c.target));
            }
        }
    }

    #[test]
    fn group_serde_tags() {
        let g: GroupSpec = serde_json::from_str(r#"["s3","t1"]"#).unwrap();
        assert_eq!(g, s3t1());
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"["s3","t1"]"#);
        assert!(serde_json::from_str::<GroupSpec>("[]").is_err());
    }
}
