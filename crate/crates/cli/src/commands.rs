use std::fs::{self, File};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use vekua::constvekua::{
    apply_vekua, decay_fit, is_admissible, make_witness, relative_residual, scan_diophantine_with,
    select_witness_modes, solve_const, AdmissibilityViolation, Mode, VekuaConstOp, WitnessKind, WitnessRow,
    ADMISSIBLE_TOL, DEFAULT_MAX_ORDER, DEFAULT_ZERO_TOL,
};
use vekua::field::{field_combine, CoefficientField, PowerLawFit, TimeCoefficientField};
use vekua::odevekua::{check_hypotheses, solve_timedep, time_decay_fit, HypothesisReport, ODE_RESIDUAL_TOL};
use vekua::symbol::CompatReport;
use vekua::{Result, VekuaError, TRUNCATION_CAVEAT};

use crate::config::{CliConfig, ConstConfig, TimeConfig};
use crate::{exit, Common, Kind};

#[derive(Serialize)]
struct Tolerances {
    zero_tol: f64,
    max_order: f64,
    admissible_tol: f64,
    ode_residual_tol: f64,
}

/// Fields shared by every JSON report.
#[derive(Serialize)]
struct Header {
    version: &'static str,
    command: &'static str,
    config: PathBuf,
    cutoff: f64,
    tolerances: Tolerances,
    caveat: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    compat_warning: Option<String>,
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    #[serde(flatten)]
    header: Header,
    result: T,
}

struct Loaded {
    cfg: CliConfig,
    base: PathBuf,
}

fn load(common: &Common) -> Result<Loaded> {
    let cfg = CliConfig::load(&common.config)
        .map_err(|e| VekuaError::Config(format!("{}: {e}", common.config.display())))?;
    let base = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { cfg, base })
}

fn constant(l: &Loaded, command: &str) -> Result<ConstConfig> {
    match &l.cfg {
        CliConfig::Constant(c) => Ok(c.clone()),
        CliConfig::TimeDependent(_) => Err(VekuaError::Config(format!("`{command}` needs a constant operator block \"L\""))),
    }
}

fn time_dependent(l: &Loaded, command: &str) -> Result<TimeConfig> {
    match &l.cfg {
        CliConfig::TimeDependent(c) => Ok(c.clone()),
        CliConfig::Constant(_) => Err(VekuaError::Config(format!("`{command}` needs a time-dependent operator block \"D\""))),
    }
}

fn cutoff(common: &Common, cfg: &CliConfig, fallback: Option<f64>) -> Result<f64> {
    let c = common
        .cutoff
        .or(cfg.cutoff())
        .or(fallback)
        .ok_or_else(|| VekuaError::Config("no cutoff: pass --cutoff or set \"cutoff\" in the config".into()))?;
    if !(c >= 1.0) || !c.is_finite() {
        return Err(VekuaError::Config(format!("cutoff must be a finite number >= 1, got {c}")));
    }
    Ok(c)
}

fn header(common: &Common, cfg: &CliConfig, command: &'static str, cutoff: f64, zero_tol: f64) -> Header {
    Header {
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: common.config.clone(),
        cutoff,
        tolerances: Tolerances {
            zero_tol,
            max_order: cfg.max_order().unwrap_or(DEFAULT_MAX_ORDER),
            admissible_tol: ADMISSIBLE_TOL,
            ode_residual_tol: ODE_RESIDUAL_TOL,
        },
        caveat: TRUNCATION_CAVEAT,
        compat_warning: None,
    }
}

fn compat_warning(op: &VekuaConstOp, cutoff: f64) -> Result<Option<String>> {
    let CompatReport { compat, violations, .. } = op.compat_report(cutoff)?;
    Ok((!compat).then(|| {
        let first = violations.first().map(|v| format!(", first at {} entry {}: {}", v.rep, v.entry, v.detail));
        format!("symbol is not conjugation-compatible ({} violations{})", violations.len(), first.unwrap_or_default())
    }))
}

fn out_path(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// `dir/name.json` → `dir/name.<suffix>`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> VekuaError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => VekuaError::Io(io),
        other => VekuaError::Config(format!("csv: {other:?}")),
    }
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn mode_label(m: &Mode) -> String {
    format!("{}[{},{}]", m.rep, m.row, m.col)
}

#[derive(Serialize)]
struct ShellRow {
    weight: f64,
    min_abs_disc: Option<f64>,
    zero_count: usize,
}

pub fn classify(common: &Common) -> Result<u8> {
    let l = load(common)?;
    let c = constant(&l, "classify")?;
    let op = c.operator(&l.base, common.zero_tol)?;
    let cutoff = cutoff(common, &l.cfg, None)?;
    let max_order = c.max_order.unwrap_or(DEFAULT_MAX_ORDER);
    let report = scan_diophantine_with(&op, cutoff, max_order)?;

    let out = out_path(common, "classify.json");
    let mut h = header(common, &l.cfg, "classify", cutoff, op.zero_tol);
    h.compat_warning = compat_warning(&op, cutoff)?;
    if let Some(w) = &h.compat_warning {
        eprintln!("warning: {w}");
    }
    write_json(&out, &Report { header: h, result: &report })?;
    let csv_path = sibling(&out, "shells.csv");
    write_csv(
        &csv_path,
        report.shells_csv_rows().into_iter().map(|(weight, min_abs_disc, zero_count)| ShellRow {
            weight,
            min_abs_disc,
            zero_count,
        }),
    )?;

    println!(
        "{} modes, {} zeros, min|Δ| = {}, {:?}, {:?} ({})",
        report.modes_scanned,
        report.zeros.len(),
        report.min_abs_disc.map_or("n/a".into(), |v| format!("{v:e}")),
        report.gh_verdict,
        report.gs_verdict,
        TRUNCATION_CAVEAT
    );
    Ok(if report.zeros.is_empty() { exit::OK } else { exit::ZEROS })
}

#[derive(Serialize)]
struct ConstSolveSummary {
    solution: PathBuf,
    modes: usize,
    relative_residual: f64,
    decay: Option<PowerLawFit>,
}

#[derive(Serialize)]
struct InadmissibleSummary<'a> {
    admissible: bool,
    violations: &'a [AdmissibilityViolation],
}

pub fn solve(common: &Common, rhs: &Path, grid: Option<usize>) -> Result<u8> {
    let l = load(common)?;
    match &l.cfg {
        CliConfig::Constant(c) => solve_constant(common, &l, c, rhs),
        CliConfig::TimeDependent(t) => solve_time(common, &l, t, rhs, grid),
    }
}

fn solve_constant(common: &Common, l: &Loaded, c: &ConstConfig, rhs: &Path) -> Result<u8> {
    let op = c.operator(&l.base, common.zero_tol)?;
    let f = CoefficientField::load(rhs, &c.group)?;
    let support_max = f.support().map(|r| r.weight()).fold(1.0, f64::max);
    let cutoff = cutoff(common, &l.cfg, Some(support_max))?;
    let out = out_path(common, "solution.json");
    let summary_path = sibling(&out, "summary.json");
    let mut h = header(common, &l.cfg, "solve", cutoff, op.zero_tol);
    h.compat_warning = compat_warning(&op, cutoff)?;

    let adm = is_admissible(&op, &f, cutoff)?;
    if !adm.admissible {
        write_json(&summary_path, &Report { header: h, result: InadmissibleSummary { admissible: false, violations: &adm.violations } })?;
        let modes: Vec<String> = adm.violations.iter().map(|v| format!("{} (residual {:e})", mode_label(&v.mode), v.residual)).collect();
        return Err(VekuaError::Inadmissible(modes));
    }
    let u = solve_const(&op, &f, cutoff)?;
    u.save(&out)?;
    let residual = relative_residual(&op, &u, &f)?;
    let decay = if u.is_zero() { None } else { decay_fit(&u).ok() };
    let body = ConstSolveSummary { solution: out.clone(), modes: u.len(), relative_residual: residual, decay };
    println!("solved {} reps, relative residual {:e}", body.modes, residual);
    write_json(&summary_path, &Report { header: h, result: body })?;
    Ok(exit::OK)
}

#[derive(Serialize)]
struct TimeSolveSummary<'a> {
    solution: Option<PathBuf>,
    max_residual: Option<f64>,
    decay: Option<PowerLawFit>,
    error: Option<String>,
    hypotheses: &'a HypothesisReport,
}

fn solve_time(common: &Common, l: &Loaded, t: &TimeConfig, rhs: &Path, grid: Option<usize>) -> Result<u8> {
    let op = t.operator(&l.base, grid, common.zero_tol)?;
    let f = TimeCoefficientField::load(rhs, &t.group, op.grid())?;
    let support_max = f.support().map(|r| r.weight()).fold(1.0, f64::max);
    let cutoff = cutoff(common, &l.cfg, Some(support_max))?;
    let out = out_path(common, "solution.json");
    let summary_path = sibling(&out, "summary.json");
    let hyp = check_hypotheses(&op, cutoff)?;
    let h = header(common, &l.cfg, "solve", cutoff, op.zero_tol);

    match solve_timedep(&op, &f, cutoff) {
        Ok(res) => {
            res.u.save(&out)?;
            write_csv(
                &sibling(&out, "modes.csv"),
                res.diagnostics.iter().map(|d| ModeCsv {
                    mode: mode_label(&d.mode),
                    weight: d.weight,
                    rho_re: d.rho_re,
                    rho_im: d.rho_im,
                    den_minus: d.den_minus,
                    den_plus: d.den_plus,
                    residual: d.residual,
                }),
            )?;
            let decay = if res.u.is_empty() { None } else { time_decay_fit(&res.u).ok() };
            println!("solved {} modes, max ODE residual {:e}", res.diagnostics.len(), res.max_residual);
            let body = TimeSolveSummary {
                solution: Some(out.clone()),
                max_residual: Some(res.max_residual),
                decay,
                error: None,
                hypotheses: &hyp,
            };
            write_json(&summary_path, &Report { header: h, result: body })?;
            Ok(exit::OK)
        }
        Err(e) => {
            let body = TimeSolveSummary { solution: None, max_residual: None, decay: None, error: Some(e.to_string()), hypotheses: &hyp };
            write_json(&summary_path, &Report { header: h, result: body })?;
            Err(e)
        }
    }
}

#[derive(Serialize)]
struct ModeCsv {
    mode: String,
    weight: f64,
    rho_re: f64,
    rho_im: f64,
    den_minus: f64,
    den_plus: f64,
    residual: f64,
}

#[derive(Serialize)]
struct WitnessSummary {
    kind: WitnessKind,
    requested: usize,
    modes_used: usize,
    skipped: Vec<(String, String)>,
    u: PathBuf,
    f: Option<PathBuf>,
    /// `‖Pu‖∞` for zero witnesses, `‖Pu − f‖∞` otherwise.
    residual_norm: f64,
    abs_u_increasing: bool,
    rows: Vec<WitnessRow>,
}

fn parse_coeff(text: &str) -> Result<Complex64> {
    let bad = || VekuaError::Config(format!("--coeff must be \"re,im\", got {text:?}"));
    let (re, im) = text.split_once(',').ok_or_else(bad)?;
    let re: f64 = re.trim().parse().map_err(|_| bad())?;
    let im: f64 = im.trim().parse().map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}

pub fn witness(common: &Common, kind: Kind, n: usize, coeff: &str) -> Result<u8> {
    let l = load(common)?;
    let c = constant(&l, "witness")?;
    let op = c.operator(&l.base, common.zero_tol)?;
    let cutoff = cutoff(common, &l.cfg, None)?;
    let kind = match kind {
        Kind::GhZero => WitnessKind::GhZero,
        Kind::GhNecessity => WitnessKind::gh_necessity(parse_coeff(coeff)?),
        Kind::GsFail => WitnessKind::GsFail,
    };
    let modes = select_witness_modes(&op, kind, cutoff, n)?;
    if modes.is_empty() {
        eprintln!("no qualifying modes with weight <= {cutoff}");
        return Ok(exit::NO_WITNESS);
    }
    let bundle = make_witness(&op, kind, &modes)?;
    let out = out_path(common, "witness.json");
    bundle.u.save(&out)?;
    let pu = apply_vekua(&op, &bundle.u)?;
    let (f_path, residual_norm) = match &bundle.f {
        Some(f) => {
            let p = sibling(&out, "rhs.json");
            f.save(&p)?;
            let one = Complex64::new(1.0, 0.0);
            (Some(p), field_combine(one, &pu, -one, f)?.max_norm())
        }
        None => (None, pu.max_norm()),
    };
    let abs_u_increasing = bundle.rows.windows(2).all(|w| w[1].abs_u > w[0].abs_u);
    let body = WitnessSummary {
        kind,
        requested: n,
        modes_used: bundle.rows.len(),
        skipped: bundle.skipped.iter().map(|(m, why)| (mode_label(m), why.clone())).collect(),
        u: out.clone(),
        f: f_path,
        residual_norm,
        abs_u_increasing,
        rows: bundle.rows,
    };
    println!("{} witness modes, residual norm {:e}", body.modes_used, residual_norm);
    let h = header(common, &l.cfg, "witness", cutoff, op.zero_tol);
    write_json(&sibling(&out, "verify.json"), &Report { header: h, result: body })?;
    Ok(exit::OK)
}

pub fn ode_check(common: &Common, grid: Option<usize>) -> Result<u8> {
    let l = load(common)?;
    let t = time_dependent(&l, "ode-check")?;
    let op = t.operator(&l.base, grid, common.zero_tol)?;
    let cutoff = cutoff(common, &l.cfg, None)?;
    let report = check_hypotheses(&op, cutoff)?;
    let h = header(common, &l.cfg, "ode-check", cutoff, op.zero_tol);
    write_json(&out_path(common, "hypotheses.json"), &Report { header: h, result: &report })?;
    let flag = |ok: bool| if ok { "ok" } else { "FAIL" };
    println!(
        "a {} b {} c {} d {}{} e {} split {} ({} modes, {})",
        flag(report.a_ok),
        flag(report.b_ok),
        flag(report.c_ok),
        flag(report.d_ok),
        if report.d_required { "" } else { " (not required)" },
        flag(report.e_ok),
        flag(report.split_ok),
        report.modes_scanned,
        TRUNCATION_CAVEAT
    );
    Ok(if report.all_ok() { exit::OK } else { exit::HYPOTHESIS })
}

#[derive(Serialize)]
struct DecaySummary {
    field: PathBuf,
    time_dependent: bool,
    reps: usize,
    max_norm: f64,
    fit: PowerLawFit,
}

pub fn decay(common: &Common, field: &Path, grid: Option<usize>) -> Result<u8> {
    let l = load(common)?;
    let group = l.cfg.group().clone();
    let (time_dependent, reps, max_norm, fit) = match &l.cfg {
        CliConfig::Constant(_) => {
            let u = CoefficientField::load(field, &group)?;
            (false, u.len(), u.max_norm(), decay_fit(&u)?)
        }
        CliConfig::TimeDependent(t) => {
            let u = TimeCoefficientField::load(field, &group, grid.unwrap_or(t.grid))?;
            (true, u.support().count(), u.max_norm(), time_decay_fit(&u)?)
        }
    };
    let cutoff = common.cutoff.or(l.cfg.cutoff()).unwrap_or(f64::NAN);
    let h = header(common, &l.cfg, "decay", cutoff, common.zero_tol.or(l.cfg.zero_tol()).unwrap_or(DEFAULT_ZERO_TOL));
    println!("|u| <= {:e} * <xi>^{:.4} over {reps} reps", fit.constant, fit.exponent);
    if let Some(out) = &common.out {
        write_json(out, &Report { header: h, result: DecaySummary { field: field.to_path_buf(), time_dependent, reps, max_norm, fit } })?;
    }
    Ok(exit::OK)
}
