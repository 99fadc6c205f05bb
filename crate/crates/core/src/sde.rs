//! Euler–Maruyama integration of particle ensembles.
//!
//! Each particle follows `dX = sqrt(2) * sigma(t, X) dW + b(t, X) dt`, where
//! `sigma` is the Φ-level coefficient (so the Fokker–Planck equation of the
//! ensemble is `rho_t = (sigma^2 rho)_xx - (b rho)_x`). Gaussian increments
//! come from a counter-based stream keyed by `(seed, step, particle)`, which
//! makes every run bit-reproducible regardless of the number of threads.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{sample_barenblatt, FastDiffusionParams};
use crate::io::{fmt_f64, CsvTable};
use crate::rng::{RngStream, INITIAL_STREAM};

/// Particles per work unit. Fixed so that work partitioning never depends on
/// the thread count.
pub const CHUNK: usize = 4096;

/// Positions of `n` particles at one step of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    positions: Vec<f64>,
    t_start: f64,
    dt: f64,
    step_index: u64,
    seed: u64,
}

impl ParticleCloud {
    pub fn new(positions: Vec<f64>, t_start: f64, dt: f64, seed: u64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("n", "a cloud needs at least one particle"));
        }
        if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                step: 0,
                particle: i,
                position: positions[i],
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
        }
        Ok(ParticleCloud {
            positions,
            t_start,
            dt,
            step_index: 0,
            seed,
        })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `t_start + step_index * dt`, recomputed from the step counter.
    pub fn time(&self) -> f64 {
        self.t_start + self.step_index as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// A coefficient `f(t, x)` supplied by the caller.
pub trait CoefficientField: Send + Sync {
    fn value(&self, time: f64, x: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> CoefficientField for F {
    fn value(&self, time: f64, x: f64) -> f64 {
        self(time, x)
    }
}

#[derive(Clone)]
pub enum CoefficientKind {
    /// `Phi(U(t + kappa, x)) = sqrt(a_bar(t, x))`, the exact Barenblatt
    /// coefficient.
    OracleBarenblatt {
        params: FastDiffusionParams,
        kappa: f64,
    },
    Constant(f64),
    Field(Arc<dyn CoefficientField>),
}

impl fmt::Debug for CoefficientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientKind::OracleBarenblatt { params, kappa } => f
                .debug_struct("OracleBarenblatt")
                .field("m", &params.m())
                .field("kappa", kappa)
                .finish(),
            CoefficientKind::Constant(s) => f.debug_tuple("Constant").field(s).finish(),
            CoefficientKind::Field(_) => f.write_str("Field(..)"),
        }
    }
}

/// Φ-level diffusion coefficient with optional clipping and drift.
#[derive(Clone, Debug)]
pub struct CoefficientSpec {
    pub kind: CoefficientKind,
    /// Ceiling applied to the coefficient.
    pub clip_max: Option<f64>,
    /// Density floor inside Φ; only meaningful for the oracle kind.
    pub clip_floor: Option<f64>,
    pub drift: Option<DriftField>,
}

#[derive(Clone)]
pub struct DriftField(pub Arc<dyn CoefficientField>);

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DriftField(..)")
    }
}

impl CoefficientSpec {
    pub fn oracle(params: FastDiffusionParams, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::invalid("kappa", format!("must be > 0, got {kappa}")));
        }
        Ok(Self::from_kind(CoefficientKind::OracleBarenblatt { params, kappa }))
    }

    pub fn constant(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be >= 0, got {sigma}")));
        }
        Ok(Self::from_kind(CoefficientKind::Constant(sigma)))
    }

    pub fn field(f: impl CoefficientField + 'static) -> Self {
        Self::from_kind(CoefficientKind::Field(Arc::new(f)))
    }

    fn from_kind(kind: CoefficientKind) -> Self {
        CoefficientSpec {
            kind,
            clip_max: None,
            clip_floor: None,
            drift: None,
        }
    }

    pub fn with_clip_max(mut self, cap: f64) -> Result<Self> {
        if !(cap > 0.0) {
            return Err(Error::invalid("clip_max", format!("must be > 0, got {cap}")));
        }
        self.clip_max = Some(cap);
        Ok(self)
    }

    pub fn with_drift(mut self, drift: impl CoefficientField + 'static) -> Self {
        self.drift = Some(DriftField(Arc::new(drift)));
        self
    }

    /// Coefficient at `(time, x)`; `time` is the cloud's clock.
    pub fn sigma(&self, time: f64, x: f64) -> f64 {
        self.at_time(time).sigma(x)
    }

    /// Freezes the time-dependent factors for one step.
    pub(crate) fn at_time(&self, time: f64) -> FrozenCoefficient<'_> {
        let kind = match &self.kind {
            CoefficientKind::OracleBarenblatt { params, kappa } => {
                // a_bar = c0 + c2 y^2 with tau = time + kappa.
                let tau = time + kappa;
                let lift = tau.powf(params.alpha() * (1.0 - params.m()));
                let c0 = params.big_d() * lift;
                let c2 = params.ktilde() * lift * tau.powf(-2.0 * params.alpha());
                let floor_cap = self
                    .clip_floor
                    .map_or(f64::INFINITY, |floor| params.phi(floor, f64::INFINITY));
                Frozen::Oracle { c0, c2, floor_cap }
            }
            CoefficientKind::Constant(s) => Frozen::Constant(*s),
            CoefficientKind::Field(f) => Frozen::Field(f.as_ref(), time),
        };
        FrozenCoefficient {
            kind,
            cap: self.clip_max.unwrap_or(f64::INFINITY),
        }
    }

    #[inline]
    fn drift(&self, time: f64, x: f64) -> f64 {
        match &self.drift {
            Some(d) => d.0.value(time, x),
            None => 0.0,
        }
    }
}

pub(crate) struct FrozenCoefficient<'a> {
    kind: Frozen<'a>,
    cap: f64,
}

enum Frozen<'a> {
    Oracle { c0: f64, c2: f64, floor_cap: f64 },
    Constant(f64),
    Field(&'a dyn CoefficientField, f64),
}

impl FrozenCoefficient<'_> {
    #[inline]
    pub(crate) fn sigma(&self, x: f64) -> f64 {
        let raw = match self.kind {
            // Phi(max(U, floor)) = min(Phi(U), Phi(floor)).
            Frozen::Oracle { c0, c2, floor_cap } => (c0 + c2 * x * x).sqrt().min(floor_cap),
            Frozen::Constant(s) => s,
            Frozen::Field(f, t) => f.value(t, x),
        };
        raw.min(self.cap)
    }
}

fn step_chunk(
    chunk: &mut [f64],
    first: usize,
    coeff: &CoefficientSpec,
    time: f64,
    dt: f64,
    stream: &RngStream,
) -> Option<usize> {
    let mut xi = vec![0.0; chunk.len()];
    stream.fill_normal(first as u64, &mut xi);
    let noise_scale = (2.0 * dt).sqrt();
    let frozen = coeff.at_time(time);
    let mut bad = None;
    for (k, (x, z)) in chunk.iter_mut().zip(xi.iter()).enumerate() {
        let sigma = frozen.sigma(*x);
        let mut next = *x + noise_scale * sigma * z;
        if coeff.drift.is_some() {
            next += coeff.drift(time, *x) * dt;
        }
        *x = next;
        if bad.is_none() && !next.is_finite() {
            bad = Some(first + k);
        }
    }
    bad
}

/// Advances every particle by one Euler–Maruyama step of size `cloud.dt()`:
/// `x <- x + sqrt(2) sigma(t, x) sqrt(dt) xi + b(t, x) dt`.
pub fn euler_step(cloud: &mut ParticleCloud, coeff: &CoefficientSpec) -> Result<()> {
    let time = cloud.time();
    let dt = cloud.dt;
    let step = cloud.step_index;
    let stream = RngStream::new(cloud.seed, step);
    let bad = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            cloud
                .positions
                .par_chunks_mut(CHUNK)
                .enumerate()
                .map(|(c, chunk)| step_chunk(chunk, c * CHUNK, coeff, time, dt, &stream))
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .min()
        }
        #[cfg(not(feature = "parallel"))]
        {
            cloud
                .positions
                .chunks_mut(CHUNK)
                .enumerate()
                .filter_map(|(c, chunk)| step_chunk(chunk, c * CHUNK, coeff, time, dt, &stream))
                .min()
        }
    };
    if let Some(particle) = bad {
        return Err(Error::NonFinite {
            step,
            particle,
            position: cloud.positions[particle],
        });
    }
    cloud.step_index += 1;
    Ok(())
}

/// Step indices at which snapshots are taken: the nearest completed step to
/// each requested time.
pub fn snapshot_steps(times: &[f64], dt: f64) -> Result<Vec<u64>> {
    if times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(Error::invalid("t_grid", "times must be finite and >= 0"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("t_grid", "times must be strictly increasing"));
    }
    let steps: Vec<u64> = times.iter().map(|t| (t / dt).round() as u64).collect();
    if steps.windows(2).any(|w| w[1] == w[0]) {
        return Err(Error::invalid("t_grid", "two snapshot times fall on the same step"));
    }
    Ok(steps)
}

/// Integrates `cloud` with `coeff`, returning a copy at each snapshot step.
pub fn integrate(mut cloud: ParticleCloud, coeff: &CoefficientSpec, steps: &[u64]) -> Result<Vec<ParticleCloud>> {
    let mut out = Vec::with_capacity(steps.len());
    for &target in steps {
        while cloud.step_index < target {
            euler_step(&mut cloud, coeff)?;
        }
        out.push(cloud.clone());
    }
    Ok(out)
}

/// Oracle-coefficient run: particles start from `U(kappa, .)` and move with
/// the exact coefficient `sqrt(2 a_bar)`, so the law at time `t` should be
/// `U(t + kappa, .)`. Snapshot times are measured from the start of the run.
pub fn run_oracle_sde(
    params: &FastDiffusionParams,
    kappa: f64,
    n: usize,
    dt: f64,
    t_grid: &[f64],
    seed: u64,
) -> Result<Vec<ParticleCloud>> {
    let coeff = CoefficientSpec::oracle(*params, kappa)?;
    let steps = snapshot_steps(t_grid, dt)?;
    let start = sample_barenblatt(params, kappa, n, &RngStream::new(seed, INITIAL_STREAM))?;
    let cloud = ParticleCloud::new(start, 0.0, dt, seed)?;
    integrate(cloud, &coeff, &steps)
}

/// All particles start at `x0`; snapshots at the (small) times `s_grid`.
pub fn run_point_start_sde(
    coeff: &CoefficientSpec,
    x0: f64,
    n: usize,
    dt: f64,
    s_grid: &[f64],
    seed: u64,
) -> Result<Vec<ParticleCloud>> {
    if n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    let steps = snapshot_steps(s_grid, dt)?;
    let cloud = ParticleCloud::new(vec![x0; n], 0.0, dt, seed)?;
    integrate(cloud, coeff, &steps)
}

/// Header of the particle snapshot CSV.
pub const SNAPSHOT_HEADER: [&str; 4] = ["step", "time", "particle_index", "position"];

pub fn snapshots_csv(snapshots: &[ParticleCloud]) -> CsvTable {
    let mut table = CsvTable::new(&SNAPSHOT_HEADER);
    for cloud in snapshots {
        let step = cloud.step_index().to_string();
        let time = fmt_f64(cloud.time());
        for (i, &x) in cloud.positions().iter().enumerate() {
            table.row(&[step.clone(), time.clone(), i.to_string(), fmt_f64(x)]);
        }
    }
    table
}

#[derive(Debug, Serialize)]
struct SnapshotManifest<'a> {
    seed: u64,
    config_hash: &'a str,
    snapshot_csv_sha256: String,
    module_versions: [(&'static str, &'static str); 1],
}

/// Writes `path` (CSV) and `path.json` (sidecar manifest).
pub fn export_snapshots(path: &Path, snapshots: &[ParticleCloud], seed: u64, config_hash: &str) -> Result<()> {
    let hash = snapshots_csv(snapshots).write(path)?;
    let manifest = SnapshotManifest {
        seed,
        config_hash,
        snapshot_csv_sha256: hash,
        module_versions: [("fastdiff", env!("CARGO_PKG_VERSION"))],
    };
    let sidecar = path.with_extension("json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))
}
