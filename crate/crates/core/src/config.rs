//! `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Every key has a default, unknown or repeated keys are errors, and the
//! resolved configuration renders back to a canonical text whose SHA-256 is
//! the config hash recorded in each manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::FastDiffusionParams;
use crate::grid::{SpaceTimeGrid, SpatialGrid};
use crate::io::sha256_hex;
use crate::kde::{BandwidthRule, DEFAULT_BANDWIDTH_MULTIPLIER};
use crate::mckean::{McKeanConfig, DEFAULT_CAP_MARGIN, DEFAULT_ERROR_INTERVAL, DEFAULT_FLOOR_FRACTION, KAPPA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Mckean,
    Oracle,
    DensityBound,
    HypothesisCheck,
    ExactTable,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Mckean => "mckean",
            Mode::Oracle => "oracle",
            Mode::DensityBound => "density-bound",
            Mode::HypothesisCheck => "hypothesis-check",
            Mode::ExactTable => "exact-table",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mckean" => Mode::Mckean,
            "oracle" => Mode::Oracle,
            "density-bound" => Mode::DensityBound,
            "hypothesis-check" => Mode::HypothesisCheck,
            "exact-table" => Mode::ExactTable,
            _ => return Err(Error::Config(format!("unknown mode `{s}`"))),
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Recognised keys, in canonical order.
pub const KEYS: [&str; 24] = [
    "mode",
    "m",
    "n",
    "dt",
    "T",
    "x_min",
    "x_max",
    "nx",
    "snapshots",
    "seed",
    "bandwidth_multiplier",
    "density_floor",
    "cap_margin",
    "refresh_every",
    "error_interval",
    "kappa",
    "x0_list",
    "s_min",
    "s_max",
    "s_count",
    "verify_l2_min",
    "verify_l2_max",
    "export_particles",
    "output_dir",
];

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub mode: Mode,
    pub m: f64,
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub snapshots: Vec<f64>,
    pub seed: u64,
    pub bandwidth_multiplier: f64,
    pub density_floor: f64,
    pub cap_margin: f64,
    pub refresh_every: u64,
    pub error_interval: f64,
    pub kappa: f64,
    pub x0_list: Vec<f64>,
    pub s_min: f64,
    pub s_max: f64,
    pub s_count: usize,
    pub verify_l2_min: f64,
    pub verify_l2_max: f64,
    pub export_particles: bool,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

/// Splits config text into raw `key -> value` pairs.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", no + 1)))?;
        insert_pair(&mut out, key.trim(), value.trim(), &format!("line {}", no + 1))?;
    }
    Ok(out)
}

fn insert_pair(map: &mut BTreeMap<String, String>, key: &str, value: &str, at: &str) -> Result<()> {
    if !KEYS.contains(&key) {
        return Err(Error::Config(format!("{at}: unknown key `{key}`")));
    }
    if value.is_empty() {
        return Err(Error::Config(format!("{at}: empty value for `{key}`")));
    }
    if map.insert(key.to_string(), value.to_string()).is_some() {
        return Err(Error::Config(format!("{at}: key `{key}` given twice")));
    }
    Ok(())
}

fn parse_value<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
    }
}

fn parse_list(map: &BTreeMap<String, String>, key: &str, default: &[f64]) -> Result<Vec<f64>> {
    match map.get(key) {
        None => Ok(default.to_vec()),
        Some(v) => v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`")))
            })
            .collect(),
    }
}

fn parse_auto(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match map.get(key).map(String::as_str) {
        None | Some("auto") => Ok(None),
        Some(_) => parse_value(map, key, 0.0).map(Some),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl SolverConfig {
    /// Parses `text`, applies `key=value` overrides and validates.
    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self> {
        let mut map = parse_pairs(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            map.remove(k);
            insert_pair(&mut map, k, v, "override")?;
        }
        Self::from_pairs(&map)
    }

    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        let mode: Mode = map
            .get("mode")
            .ok_or_else(|| Error::Config("missing key `mode`".into()))?
            .parse()?;
        let m = parse_value(map, "m", 0.5)?;
        let params = FastDiffusionParams::new(m).map_err(|e| Error::Config(e.to_string()))?;
        let horizon = parse_value(map, "T", 1.5)?;
        let kappa_default = match mode {
            Mode::Mckean | Mode::Oracle | Mode::DensityBound => KAPPA,
            Mode::HypothesisCheck | Mode::ExactTable => 0.0,
        };
        let kappa = parse_value(map, "kappa", kappa_default)?;
        let density_floor = parse_auto(map, "density_floor")?.unwrap_or(DEFAULT_FLOOR_FRACTION * params.peak(KAPPA));
        let cfg = SolverConfig {
            mode,
            m,
            n: parse_value(map, "n", 50_000)?,
            dt: parse_value(map, "dt", 2e-4)?,
            horizon,
            x_min: parse_value(map, "x_min", -15.0)?,
            x_max: parse_value(map, "x_max", 15.0)?,
            nx: parse_value(map, "nx", 601)?,
            snapshots: parse_list(map, "snapshots", &[0.0, horizon])?,
            seed: parse_value(map, "seed", 1)?,
            bandwidth_multiplier: parse_value(map, "bandwidth_multiplier", DEFAULT_BANDWIDTH_MULTIPLIER)?,
            density_floor,
            cap_margin: parse_value(map, "cap_margin", DEFAULT_CAP_MARGIN)?,
            refresh_every: parse_value(map, "refresh_every", 1)?,
            error_interval: parse_value(map, "error_interval", DEFAULT_ERROR_INTERVAL)?,
            kappa,
            x0_list: parse_list(map, "x0_list", &[0.0, 2.0, 5.0])?,
            s_min: parse_value(map, "s_min", 1e-3)?,
            s_max: parse_value(map, "s_max", 0.1)?,
            s_count: parse_value(map, "s_count", 7)?,
            verify_l2_min: parse_value(map, "verify_l2_min", 1e-4)?,
            verify_l2_max: parse_value(map, "verify_l2_max", 1e-2)?,
            export_particles: parse_value(map, "export_particles", false)?,
            output_dir: PathBuf::from(map.get("output_dir").map(String::as_str).unwrap_or("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if matches!(self.mode, Mode::Mckean | Mode::Oracle) && self.kappa != KAPPA {
            return fail(format!("`kappa` is fixed to {KAPPA} in {} mode", self.mode));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return fail(format!("`kappa` must be >= 0, got {}", self.kappa));
        }
        if self.mode == Mode::DensityBound && self.kappa < 1.0 {
            return fail(format!(
                "`kappa` must be >= 1 in density-bound mode, got {}",
                self.kappa
            ));
        }
        if !(self.s_min > 0.0 && self.s_max > self.s_min && self.s_count >= 2) {
            return fail("need 0 < s_min < s_max and s_count >= 2".into());
        }
        if !(self.verify_l2_min >= 0.0 && self.verify_l2_max > self.verify_l2_min) {
            return fail("need 0 <= verify_l2_min < verify_l2_max".into());
        }
        if self.mode == Mode::ExactTable && self.snapshots.iter().any(|&t| !(t + self.kappa > 0.0)) {
            return fail("exact-table needs snapshot times with t + kappa > 0".into());
        }
        // Solver-level checks, reported as config errors.
        let check = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        check(self.space_time_grid().map(|_| ()))?;
        match self.mode {
            Mode::Mckean | Mode::Oracle => check(self.mckean()?.validate()),
            _ => Ok(()),
        }
    }

    pub fn params(&self) -> Result<FastDiffusionParams> {
        FastDiffusionParams::new(self.m)
    }

    pub fn space_time_grid(&self) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(
            SpatialGrid::new(self.x_min, self.x_max, self.nx)?,
            self.snapshots.clone(),
        )
    }

    pub fn bandwidth_rule(&self) -> BandwidthRule {
        BandwidthRule::Silverman {
            multiplier: self.bandwidth_multiplier,
        }
    }

    pub fn mckean(&self) -> Result<McKeanConfig> {
        let mut c = McKeanConfig::new(
            self.params()?,
            self.n,
            self.dt,
            self.horizon,
            self.space_time_grid()?,
            self.seed,
        );
        c.bandwidth_rule = self.bandwidth_rule();
        c.density_floor = self.density_floor;
        c.cap_margin = self.cap_margin;
        c.refresh_every = self.refresh_every;
        c.error_interval = self.error_interval;
        c.keep_particles = self.export_particles;
        Ok(c)
    }

    /// Canonical `key = value` text of everything except `output_dir`.
    pub fn canonical_text(&self) -> String {
        let values: [(&str, String); 23] = [
            ("mode", self.mode.to_string()),
            ("m", self.m.to_string()),
            ("n", self.n.to_string()),
            ("dt", self.dt.to_string()),
            ("T", self.horizon.to_string()),
            ("x_min", self.x_min.to_string()),
            ("x_max", self.x_max.to_string()),
            ("nx", self.nx.to_string()),
            ("snapshots", join(&self.snapshots)),
            ("seed", self.seed.to_string()),
            ("bandwidth_multiplier", self.bandwidth_multiplier.to_string()),
            ("density_floor", self.density_floor.to_string()),
            ("cap_margin", self.cap_margin.to_string()),
            ("refresh_every", self.refresh_every.to_string()),
            ("error_interval", self.error_interval.to_string()),
            ("kappa", self.kappa.to_string()),
            ("x0_list", join(&self.x0_list)),
            ("s_min", self.s_min.to_string()),
            ("s_max", self.s_max.to_string()),
            ("s_count", self.s_count.to_string()),
            ("verify_l2_min", self.verify_l2_min.to_string()),
            ("verify_l2_max", self.verify_l2_max.to_string()),
            ("export_particles", self.export_particles.to_string()),
        ];
        let mut text = String::new();
        for (k, v) in values {
            text.push_str(k);
            text.push_str(" = ");
            text.push_str(&v);
            text.push('\n');
        }
        text
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_text().as_bytes())
    }
}
