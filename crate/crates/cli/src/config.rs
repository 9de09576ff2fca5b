//! Operator configs. A config carries exactly one operator block: `"L"` for a
//! constant-coefficient operator or `"D"` for a time-dependent one.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vekua::constvekua::VekuaConstOp;
use vekua::dual::GroupSpec;
use vekua::field::Cx;
use vekua::odevekua::{build_profiles, ProfileSpec, VekuaTimeOp};
use vekua::symbol::DiagonalSymbol;
use vekua::{Result, VekuaError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SymbolSource {
    Expr(String),
    Table { table: PathBuf },
}

impl SymbolSource {
    /// Table paths are taken relative to `base`.
    pub fn build(&self, group: &GroupSpec, base: &Path) -> Result<DiagonalSymbol> {
        match self {
            SymbolSource::Expr(text) => DiagonalSymbol::parse(text, group),
            SymbolSource::Table { table } => DiagonalSymbol::load_table(&base.join(table), group),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstConfig {
    pub group: GroupSpec,
    #[serde(rename = "L")]
    pub l: SymbolSource,
    pub p: Cx,
    pub q: Cx,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<f64>,
}

fn zero_profile() -> ProfileSpec {
    ProfileSpec::Const { value: 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub group: GroupSpec,
    #[serde(rename = "D")]
    pub d: SymbolSource,
    pub p0: f64,
    pub lambda: f64,
    pub delta: f64,
    pub alpha: Cx,
    pub q: ProfileSpec,
    #[serde(default = "zero_profile")]
    pub s: ProfileSpec,
    pub grid: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CliConfig {
    Constant(ConstConfig),
    TimeDependent(TimeConfig),
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let obj = raw.as_object().ok_or_else(|| VekuaError::Config("config must be a JSON object".into()))?;
        match (obj.contains_key("L"), obj.contains_key("D")) {
            // reparse the text so serde errors keep their line/column
            (true, false) => Ok(CliConfig::Constant(serde_json::from_str(text)?)),
            (false, true) => Ok(CliConfig::TimeDependent(serde_json::from_str(text)?)),
            (true, true) => Err(VekuaError::Config("config has both \"L\" and \"D\"; exactly one operator block is allowed".into())),
            (false, false) => Err(VekuaError::Config(
                "config needs an operator block: \"L\" (constant) or \"D\" (time-dependent)".into(),
            )),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn group(&self) -> &GroupSpec {
        match self {
            CliConfig::Constant(c) => &c.group,
            CliConfig::TimeDependent(c) => &c.group,
        }
    }

    pub fn cutoff(&self) -> Option<f64> {
        match self {
            CliConfig::Constant(c) => c.cutoff,
            CliConfig::TimeDependent(c) => c.cutoff,
        }
    }

    pub fn zero_tol(&self) -> Option<f64> {
        match self {
            CliConfig::Constant(c) => c.zero_tol,
            CliConfig::TimeDependent(c) => c.zero_tol,
        }
    }

    pub fn max_order(&self) -> Option<f64> {
        match self {
            CliConfig::Constant(c) => c.max_order,
            CliConfig::TimeDependent(c) => c.max_order,
        }
    }
}

impl ConstConfig {
    pub fn operator(&self, base: &Path, zero_tol: Option<f64>) -> Result<VekuaConstOp> {
        let l = self.l.build(&self.group, base)?;
        let op = VekuaConstOp::new(l, self.p.into(), self.q.into())?;
        Ok(match zero_tol.or(self.zero_tol) {
            Some(t) => op.with_zero_tol(t),
            None => op,
        })
    }
}

impl TimeConfig {
    pub fn operator(&self, base: &Path, grid: Option<usize>, zero_tol: Option<f64>) -> Result<VekuaTimeOp> {
        let d = self.d.build(&self.group, base)?;
        let profiles = build_profiles(&self.q, &self.s, grid.unwrap_or(self.grid))?;
        let mut op = VekuaTimeOp::new(d, self.p0, self.lambda, self.delta, self.alpha.into(), profiles)?;
        if let Some(t) = zero_tol.or(self.zero_tol) {
            op = op.with_zero_tol(t);
        }
        if let Some(m) = self.max_order {
            op.max_order = m;
        }
        Ok(op)
    }
}
