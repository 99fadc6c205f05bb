//! Run modes, artifact layout and offline verification behind the
//! `fastdiff` binary.
//!
//! A run directory holds the CSV outputs of one mode plus `manifest.json`,
//! which records the canonical configuration, its hash and the SHA-256 of
//! every file written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    check_hypothesis_b2, density_bound_csv, fit_density_bound, hypothesis_csv, hypothesis_sweep, initial_trace_test,
    log_spaced_desc, threshold_sweep, IntegralFamily, TestFunction, DENSITY_BOUND_HEADER, HYPOTHESIS_HEADER,
    THRESHOLD_SWEEP,
};
use crate::config::{parse_pairs, Mode, SolverConfig};
use crate::error::{Error, Result};
use crate::exact::{FastDiffusionParams, IntegralValue};
use crate::io::{fmt_f64, read_csv_mixed, sha256_hex, CsvTable, ParsedCsv};
use crate::kde::{density_csv, DENSITY_HEADER};
use crate::mckean::{errors_csv, exact_values, solve, Dynamics, ERRORS_HEADER, KAPPA};
use crate::sde::export_snapshots;

pub const MANIFEST: &str = "manifest.json";

/// Process exit code for an error: 2 config, 3 numerical, 4 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } => 2,
        Error::NonFinite { .. }
        | Error::DegenerateCloud(_)
        | Error::MassLoss { .. }
        | Error::GridMismatch(_)
        | Error::Quadrature(_) => 3,
        Error::Io { .. } | Error::Json(_) => 4,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub mode: String,
    /// Resolved configuration, one entry per key.
    pub config: BTreeMap<String, String>,
    /// Canonical configuration text; `fastdiff run` on it reproduces the run.
    pub config_text: String,
    pub config_hash: String,
    pub seed: u64,
    pub bandwidth_multiplier: f64,
    /// SHA-256 of every artifact, by file name.
    pub files: BTreeMap<String, String>,
    pub summary: serde_json::Value,
}

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

struct Artifacts {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        let hash = table.write(&self.dir.join(name))?;
        self.files.insert(name.to_string(), hash);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        let path = self.dir.join(name);
        fs::write(&path, text.as_bytes()).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(())
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let path = self.dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }
}

/// File name of the density snapshot at requested time `t`.
pub fn density_file_name(t: f64) -> String {
    format!("density_t{t}.csv")
}

/// Reads a config file and executes it.
pub fn run_file(path: &Path, overrides: &[String]) -> Result<RunOutcome> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    run(&SolverConfig::from_text(&text, overrides)?)
}

/// Executes the configured mode and writes its artifacts.
pub fn run(cfg: &SolverConfig) -> Result<RunOutcome> {
    let params = cfg.params()?;
    let mut out = Artifacts::new(&cfg.output_dir)?;
    let summary = match cfg.mode {
        Mode::Mckean | Mode::Oracle => run_particles(cfg, &params, &mut out)?,
        Mode::DensityBound => run_density_bound(cfg, &params, &mut out)?,
        Mode::HypothesisCheck => run_hypothesis(cfg, &params, &mut out)?,
        Mode::ExactTable => run_exact_table(cfg, &params, &mut out)?,
    };
    let config_text = cfg.canonical_text();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode: cfg.mode.to_string(),
        config: parse_pairs(&config_text)?,
        config_hash: cfg.hash(),
        config_text,
        seed: cfg.seed,
        bandwidth_multiplier: cfg.bandwidth_multiplier,
        files: out.files,
        summary,
    };
    let path = out.dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(RunOutcome { dir: out.dir, manifest })
}

fn run_particles(cfg: &SolverConfig, params: &FastDiffusionParams, out: &mut Artifacts) -> Result<serde_json::Value> {
    let dynamics = if cfg.mode == Mode::Mckean {
        Dynamics::McKean
    } else {
        Dynamics::Oracle
    };
    let mc = cfg.mckean()?;
    let report = solve(&mc, dynamics)?;
    out.csv("errors.csv", &errors_csv(&report.errors))?;
    let mut snapshot_errors = Vec::new();
    for (field, &t) in report.snapshots.iter().zip(&cfg.snapshots) {
        let exact = exact_values(params, &field.grid, field.time, KAPPA)?;
        out.csv(&density_file_name(t), &density_csv(field, Some(&exact)))?;
        let e = report.errors.iter().find(|e| e.time == field.time).copied();
        snapshot_errors.push(json!({ "time": t, "error": e, "bandwidth": field.bandwidth }));
    }
    if cfg.export_particles {
        export_snapshots(&out.dir.join("particles.csv"), &report.particles, cfg.seed, &cfg.hash())?;
        out.record("particles.csv")?;
        out.record("particles.json")?;
    }
    let t0 = 0.1 * cfg.horizon;
    let diagnostics = check_hypothesis_b2(params, KAPPA, t0, cfg.horizon)?;
    out.json(
        "report.json",
        &json!({
            "report": report,
            "cap": report.cap_summary(),
            "diagnostic_integrals": diagnostics,
        }),
    )?;
    let l2: Vec<f64> = report.errors.iter().map(|e| e.l2).collect();
    Ok(json!({
        "dynamics": dynamics,
        "steps": report.steps,
        "median_l2": report.median_l2(),
        "max_l2": l2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "min_l2": l2.iter().copied().fold(f64::INFINITY, f64::min),
        "final_mass": report.errors.last().map(|e| e.mass),
        "snapshots": snapshot_errors,
        "cap": report.cap_summary(),
    }))
}

fn run_density_bound(
    cfg: &SolverConfig,
    params: &FastDiffusionParams,
    out: &mut Artifacts,
) -> Result<serde_json::Value> {
    let s_list = log_spaced_desc(cfg.s_min, cfg.s_max, cfg.s_count);
    let fit = fit_density_bound(params, cfg.kappa, &cfg.x0_list, &s_list, cfg.n, cfg.dt, cfg.seed)?;
    out.csv("density_bound.csv", &density_bound_csv(&fit))?;
    let summary = json!({
        "m": fit.m,
        "kappa": fit.kappa,
        "n": fit.n,
        "dt": fit.dt,
        "x0_list": fit.x0_list,
        "s_list": fit.s_list,
        "fits": fit.fits,
        "k_global": fit.k_global,
        "k_ratio": fit.k_ratio,
        "envelope_holds": fit.envelope_holds(),
        "failed_cells": fit.cells.iter().filter(|c| c.sup_density.is_none()).count(),
    });
    out.json("fit_summary.json", &summary)?;
    Ok(summary)
}

const THRESHOLD_HEADER: [&str; 7] = [
    "m",
    "family",
    "expected",
    "reduced_verdict",
    "reduced_value",
    "direct_value",
    "match",
];
const TRACE_HEADER: [&str; 5] = ["gamma", "t", "value", "gamma_at_zero", "error_bound"];

fn verdict(v: IntegralValue) -> (&'static str, String) {
    match v {
        IntegralValue::Finite(x) => ("finite", fmt_f64(x)),
        IntegralValue::Divergent => ("divergent", String::new()),
    }
}

fn family_name(f: IntegralFamily) -> &'static str {
    match f {
        IntegralFamily::PowerM => "power_m",
        IntegralFamily::PowerTwoM => "power_2m",
        IntegralFamily::FourthMoment => "fourth_moment",
    }
}

fn gamma_name(g: TestFunction) -> &'static str {
    match g {
        TestFunction::Cos => "cos",
        TestFunction::Lorentzian => "lorentzian",
        TestFunction::ArctanSquash => "arctan_squash",
        TestFunction::Sin => "sin",
        TestFunction::One => "one",
    }
}

fn run_hypothesis(cfg: &SolverConfig, params: &FastDiffusionParams, out: &mut Artifacts) -> Result<serde_json::Value> {
    let reports = hypothesis_sweep(params, cfg.kappa, cfg.horizon)?;
    out.csv("hypothesis_report.csv", &hypothesis_csv(&reports))?;

    let rows = threshold_sweep(&THRESHOLD_SWEEP, cfg.horizon)?;
    let mut table = CsvTable::new(&THRESHOLD_HEADER);
    for r in &rows {
        let (rv, rval) = verdict(r.reduced);
        let (_, dval) = verdict(r.direct);
        table.row(&[
            fmt_f64(r.m),
            family_name(r.family).to_string(),
            if r.expected_finite { "finite" } else { "divergent" }.to_string(),
            rv.to_string(),
            rval,
            dval,
            r.verdicts_match().to_string(),
        ]);
    }
    out.csv("threshold_sweep.csv", &table)?;

    let ts: Vec<f64> = (1..=6).map(|k| 10f64.powi(-k)).collect();
    let mut trace = CsvTable::new(&TRACE_HEADER);
    for g in TestFunction::ALL {
        for row in initial_trace_test(params, g, &ts)? {
            trace.row(&[
                gamma_name(g).to_string(),
                fmt_f64(row.t),
                fmt_f64(row.value),
                fmt_f64(row.gamma_at_zero),
                fmt_f64(row.error_bound),
            ]);
        }
    }
    out.csv("initial_trace.csv", &trace)?;

    let max_gap = rows.iter().filter_map(|r| r.relative_gap()).fold(0.0, f64::max);
    Ok(json!({
        "all_items_finite": reports.iter().all(|r| r.all_finite()),
        "threshold_verdicts_match": rows.iter().all(|r| r.verdicts_match()),
        "max_relative_gap": max_gap,
    }))
}

const EXACT_HEADER: [&str; 3] = ["time", "x", "u_exact"];

fn run_exact_table(cfg: &SolverConfig, params: &FastDiffusionParams, out: &mut Artifacts) -> Result<serde_json::Value> {
    let grid = cfg.space_time_grid()?;
    let mut table = CsvTable::new(&EXACT_HEADER);
    for &t in &grid.times {
        let values = exact_values(params, &grid.space, t, cfg.kappa)?;
        for (x, u) in grid.space.nodes().zip(values) {
            table.row_f64(&[t, x, u]);
        }
    }
    out.csv("exact_table.csv", &table)?;
    Ok(json!({ "rows": grid.times.len() * grid.space.nx }))
}

/// Outcome of [`verify`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<String>,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, pass: impl Into<String>, fail: impl FnOnce() -> String) {
        if ok {
            self.checks.push(pass.into());
        } else {
            self.failures.push(fail());
        }
    }
}

/// Re-checks a run directory offline.
pub fn verify(dir: &Path) -> VerifyReport {
    let mut rep = VerifyReport::default();
    let path = dir.join(MANIFEST);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(_) => {
            rep.failures.push(format!("no manifest: {} not found", path.display()));
            return rep;
        }
    };
    let manifest: Manifest = match serde_json::from_str(&text) {
        Ok(m) => m,
        Err(e) => {
            rep.failures.push(format!("manifest.json is not a valid manifest: {e}"));
            return rep;
        }
    };
    let cfg = match SolverConfig::from_text(&manifest.config_text, &[]) {
        Ok(c) => c,
        Err(e) => {
            rep.failures.push(format!("manifest config does not parse: {e}"));
            return rep;
        }
    };
    rep.check(cfg.hash() == manifest.config_hash, "config hash matches", || {
        "config_hash does not match config_text".into()
    });

    let mut missing = Vec::new();
    for (name, hash) in &manifest.files {
        match fs::read(dir.join(name)) {
            Ok(bytes) => {
                let actual = sha256_hex(&bytes);
                rep.check(actual == *hash, format!("{name}: hash matches"), || {
                    format!("{name}: hash mismatch (manifest {hash}, file {actual})")
                });
            }
            Err(_) => missing.push(name.clone()),
        }
    }
    let expected: Vec<String> = match cfg.mode {
        Mode::Mckean | Mode::Oracle => std::iter::once("errors.csv".to_string())
            .chain(cfg.snapshots.iter().map(|&t| density_file_name(t)))
            .collect(),
        Mode::DensityBound => vec!["density_bound.csv".into(), "fit_summary.json".into()],
        Mode::HypothesisCheck => vec!["hypothesis_report.csv".into(), "threshold_sweep.csv".into()],
        Mode::ExactTable => vec!["exact_table.csv".into()],
    };
    for name in &expected {
        if !manifest.files.contains_key(name) && !missing.contains(name) {
            missing.push(name.clone());
        }
    }
    if !missing.is_empty() {
        rep.failures.push(format!("missing artifacts: {}", missing.join(", ")));
    }

    match cfg.mode {
        Mode::Mckean | Mode::Oracle => verify_particles(dir, &cfg, &mut rep),
        Mode::DensityBound => verify_density_bound(dir, &mut rep),
        Mode::HypothesisCheck => verify_hypothesis(dir, &mut rep),
        Mode::ExactTable => verify_exact_table(dir, &cfg, &mut rep),
    }
    rep
}

fn load(dir: &Path, name: &str, header: &[&str], rep: &mut VerifyReport) -> Option<ParsedCsv> {
    load_mixed(dir, name, header, &[], rep)
}

fn load_mixed(
    dir: &Path,
    name: &str,
    header: &[&str],
    text_columns: &[&str],
    rep: &mut VerifyReport,
) -> Option<ParsedCsv> {
    let path = dir.join(name);
    if !path.exists() {
        return None;
    }
    match read_csv_mixed(&path, header, text_columns) {
        Ok(csv) => {
            rep.checks.push(format!("{name}: schema ok"));
            Some(csv)
        }
        Err(e) => {
            rep.failures.push(format!("{name}: {e}"));
            None
        }
    }
}

fn column(csv: &ParsedCsv, name: &str) -> Vec<f64> {
    csv.column(name).unwrap_or_default()
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1]))
        .sum()
}

const MASS_RANGE: (f64, f64) = (0.9, 1.001);

fn verify_particles(dir: &Path, cfg: &SolverConfig, rep: &mut VerifyReport) {
    let (lo, hi) = (cfg.verify_l2_min, cfg.verify_l2_max);
    let mut series = Vec::new();
    if let Some(csv) = load(dir, "errors.csv", &ERRORS_HEADER, rep) {
        let (time, l2, mass) = (column(&csv, "time"), column(&csv, "l2"), column(&csv, "mass"));
        for i in 0..time.len() {
            rep.check(
                l2[i] >= lo && l2[i] <= hi,
                format!("errors.csv: l2 at t={} within [{lo}, {hi}]", time[i]),
                || {
                    format!(
                        "errors.csv: l2 = {} at t = {} outside [verify_l2_min = {lo}, verify_l2_max = {hi}]",
                        l2[i], time[i]
                    )
                },
            );
            rep.check(
                mass[i] >= MASS_RANGE.0 && mass[i] <= MASS_RANGE.1,
                format!("errors.csv: mass at t={} ok", time[i]),
                || format!("errors.csv: mass = {} at t = {} outside [0.9, 1.001]", mass[i], time[i]),
            );
        }
        series = time.into_iter().zip(l2).collect::<Vec<_>>();
    }
    for &t in &cfg.snapshots {
        let name = density_file_name(t);
        let Some(csv) = load(dir, &name, &DENSITY_HEADER, rep) else {
            continue;
        };
        let (time, x) = (column(&csv, "time"), column(&csv, "x"));
        let (est, exact) = (column(&csv, "u_estimated"), column(&csv, "u_exact"));
        let finite_nonneg = |v: &[f64]| v.iter().all(|u| u.is_finite() && *u >= 0.0);
        rep.check(
            finite_nonneg(&est) && finite_nonneg(&exact),
            format!("{name}: values non-negative"),
            || format!("{name}: negative or non-finite density values"),
        );
        let mass = trapezoid(&x, &est);
        rep.check(
            mass >= MASS_RANGE.0 && mass <= MASS_RANGE.1,
            format!("{name}: mass ok"),
            || format!("{name}: mass {mass} outside [0.9, 1.001]"),
        );
        // The density file and the error series must agree.
        if x.len() >= 2 {
            let dx = x[1] - x[0];
            let l2 = (est.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * dx).sqrt();
            if let Some(&(_, recorded)) = series.iter().find(|(s, _)| Some(s) == time.first()) {
                rep.check(
                    (l2 - recorded).abs() <= 1e-9 * recorded.max(1e-12),
                    format!("{name}: l2 matches errors.csv"),
                    || format!("{name}: l2 recomputed as {l2}, errors.csv records {recorded}"),
                );
            }
        }
    }
}

fn verify_density_bound(dir: &Path, rep: &mut VerifyReport) {
    if let Some(csv) = load(dir, "density_bound.csv", &DENSITY_BOUND_HEADER, rep) {
        let sup = column(&csv, "sup_density");
        rep.check(
            sup.iter().all(|v| v.is_nan() || (v.is_finite() && *v > 0.0)),
            "density_bound.csv: sup values positive",
            || "density_bound.csv: non-positive or non-finite sup_density".into(),
        );
    }
}

fn verify_hypothesis(dir: &Path, rep: &mut VerifyReport) {
    if let Some(csv) = load_mixed(
        dir,
        "hypothesis_report.csv",
        &HYPOTHESIS_HEADER,
        &["case", "item", "verdict"],
        rep,
    ) {
        let value = column(&csv, "value");
        let verdicts = csv.text_column("verdict").unwrap_or_default();
        let consistent = verdicts.iter().zip(&value).all(|(v, x)| match *v {
            "finite" => x.is_finite() && *x >= 0.0,
            "divergent" => x.is_nan(),
            _ => false,
        });
        rep.check(
            consistent,
            "hypothesis_report.csv: verdicts consistent with values",
            || "hypothesis_report.csv: verdict/value mismatch".into(),
        );
    }
}

fn verify_exact_table(dir: &Path, cfg: &SolverConfig, rep: &mut VerifyReport) {
    let Ok(params) = cfg.params() else { return };
    if let Some(csv) = load(dir, "exact_table.csv", &EXACT_HEADER, rep) {
        let (t, x, u) = (column(&csv, "time"), column(&csv, "x"), column(&csv, "u_exact"));
        rep.check(
            u.iter().all(|v| v.is_finite() && *v >= 0.0),
            "exact_table.csv: values non-negative",
            || "exact_table.csv: negative or non-finite values".into(),
        );
        let stride = (u.len() / 50).max(1);
        let bad = (0..u.len()).step_by(stride).find(|&i| {
            let v = params.density_unchecked(t[i] + cfg.kappa, x[i]);
            ((u[i] - v) / v).abs() > 1e-12
        });
        rep.check(bad.is_none(), "exact_table.csv: spot checks match closed form", || {
            let i = bad.unwrap_or(0);
            format!(
                "exact_table.csv: row {} (t={}, x={}) differs from closed form",
                i + 1,
                t[i],
                x[i]
            )
        });
    }
}
