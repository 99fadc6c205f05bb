//! Self-consistent particle solver for `u_t = (u^m)_xx`.
//!
//! Each step estimates the density `u_hat` of the cloud, sets the Φ-level
//! coefficient to `Φ(max(u_hat, floor))` capped by `margin * sqrt(a_bar)`,
//! and advances the cloud by one Euler–Maruyama step. The initial cloud is
//! drawn from `U(1, .)`, so the exact solution at solver time `t` is
//! `U(t + 1, .)`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{sample_barenblatt, FastDiffusionParams};
use crate::grid::{SpaceTimeGrid, SpatialGrid};
use crate::io::CsvTable;
use crate::kde::{estimate_density, BandwidthRule, DensityField};
use crate::rng::{RngStream, INITIAL_STREAM};
use crate::sde::{euler_step, snapshot_steps, CoefficientKind, CoefficientSpec, ParticleCloud};

/// Time offset between solver time and Barenblatt time.
pub const KAPPA: f64 = 1.0;

/// Default density floor as a fraction of the initial peak.
pub const DEFAULT_FLOOR_FRACTION: f64 = 1e-4;

/// Default envelope margin.
pub const DEFAULT_CAP_MARGIN: f64 = 2.0;

/// Default spacing of the error time series.
pub const DEFAULT_ERROR_INTERVAL: f64 = 0.05;

/// Which coefficient drives the particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    /// Coefficient from the estimated density of the cloud itself.
    McKean,
    /// Exact coefficient `sqrt(a_bar)` of the shifted Barenblatt solution.
    Oracle,
}

#[derive(Debug, Clone, Serialize)]
pub struct McKeanConfig {
    pub params: FastDiffusionParams,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub grid: SpaceTimeGrid,
    pub bandwidth_rule: BandwidthRule,
    pub density_floor: f64,
    pub cap_margin: f64,
    pub refresh_every: u64,
    pub error_interval: f64,
    pub seed: u64,
    /// Keep a copy of the cloud at each snapshot time.
    pub keep_particles: bool,
}

impl McKeanConfig {
    /// Configuration with default bandwidth, floor, cap and refresh.
    pub fn new(params: FastDiffusionParams, n: usize, dt: f64, horizon: f64, grid: SpaceTimeGrid, seed: u64) -> Self {
        McKeanConfig {
            params,
            n,
            dt,
            horizon,
            grid,
            bandwidth_rule: BandwidthRule::default(),
            density_floor: DEFAULT_FLOOR_FRACTION * params.peak(KAPPA),
            cap_margin: DEFAULT_CAP_MARGIN,
            refresh_every: 1,
            error_interval: DEFAULT_ERROR_INTERVAL,
            seed,
            keep_particles: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 100 {
            return Err(Error::invalid(
                "n",
                format!("need at least 100 particles, got {}", self.n),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("T", format!("must be > 0, got {}", self.horizon)));
        }
        if !(self.density_floor > 0.0) {
            return Err(Error::invalid(
                "density_floor",
                format!("must be > 0, got {}", self.density_floor),
            ));
        }
        if !(self.cap_margin >= 1.0 && self.cap_margin.is_finite()) {
            return Err(Error::invalid(
                "cap_margin",
                format!("must be >= 1, got {}", self.cap_margin),
            ));
        }
        if self.refresh_every == 0 {
            return Err(Error::invalid("refresh_every", "must be >= 1"));
        }
        if !(self.error_interval > 0.0) {
            return Err(Error::invalid(
                "error_interval",
                format!("must be > 0, got {}", self.error_interval),
            ));
        }
        if self
            .grid
            .times
            .last()
            .is_some_and(|&t| t > self.horizon + 0.5 * self.dt)
        {
            return Err(Error::invalid("t_grid", "snapshot times beyond the horizon"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    fn error_steps(&self) -> Result<Vec<u64>> {
        let total = self.total_steps();
        let every = ((self.error_interval / self.dt).round() as u64).max(1);
        let mut steps: Vec<u64> = (0..=total).step_by(every as usize).collect();
        steps.extend(snapshot_steps(&self.grid.times, self.dt)?);
        steps.push(total);
        steps.sort_unstable();
        steps.dedup();
        Ok(steps)
    }
}

/// Error of an estimated field against a reference on the same grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub time: f64,
    /// `sqrt(sum (u_hat - v)^2 dx)`.
    pub l2: f64,
    pub linf: f64,
    /// Trapezoidal mass of `u_hat`.
    pub mass: f64,
    /// `l2 / sqrt(window length)`.
    pub rms: f64,
}

/// Compares nodal values with a reference vector.
pub fn compare_fields(field: &DensityField, reference: &[f64]) -> Result<ErrorRecord> {
    if reference.len() != field.values.len() || field.values.len() != field.grid.nx {
        return Err(Error::GridMismatch(format!(
            "{} estimated values, {} reference values, {} nodes",
            field.values.len(),
            reference.len(),
            field.grid.nx
        )));
    }
    let dx = field.grid.dx();
    let mut sq = 0.0;
    let mut linf: f64 = 0.0;
    for (a, b) in field.values.iter().zip(reference) {
        let d = a - b;
        sq += d * d;
        linf = linf.max(d.abs());
    }
    let l2 = (sq * dx).sqrt();
    Ok(ErrorRecord {
        time: field.time,
        l2,
        linf,
        mass: field.mass(),
        rms: l2 / field.grid.length().sqrt(),
    })
}

/// Exact Barenblatt values `U(time + kappa, x)` on a grid.
pub fn exact_values(params: &FastDiffusionParams, grid: &SpatialGrid, time: f64, kappa: f64) -> Result<Vec<f64>> {
    grid.nodes().map(|x| params.shifted_density(kappa, time, x)).collect()
}

/// Error of `field` against `U(field.time + kappa, .)`.
pub fn compare_to_exact(field: &DensityField, params: &FastDiffusionParams, kappa: f64) -> Result<ErrorRecord> {
    if !(field.time + kappa > 0.0) {
        return Err(Error::invalid("kappa", "field.time + kappa must be > 0"));
    }
    compare_fields(field, &exact_values(params, &field.grid, field.time, kappa)?)
}

/// Cloud moments at an error time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRecord {
    pub time: f64,
    pub mean: f64,
    pub second_moment: f64,
}

fn moments(cloud: &ParticleCloud) -> MomentRecord {
    let xs = cloud.positions();
    let n = xs.len() as f64;
    MomentRecord {
        time: cloud.time(),
        mean: xs.iter().sum::<f64>() / n,
        second_moment: xs.iter().map(|x| x * x).sum::<f64>() / n,
    }
}

/// Where the envelope cap bit at one refresh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapRecord {
    pub time: f64,
    /// Grid nodes at which `Φ(max(u_hat, floor))` exceeded the cap.
    pub capped_nodes: usize,
    /// Smallest `|x|` among capped nodes, `inf` when none.
    pub min_abs_x: f64,
}

/// Cap activity over a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapSummary {
    pub refreshes: usize,
    pub refreshes_with_cap: usize,
    pub total_capped_nodes: usize,
    pub min_capped_abs_x: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub dynamics: Dynamics,
    pub steps: u64,
    pub errors: Vec<ErrorRecord>,
    pub moments: Vec<MomentRecord>,
    #[serde(skip)]
    pub snapshots: Vec<DensityField>,
    /// Bandwidth of each snapshot field.
    pub bandwidths: Vec<f64>,
    #[serde(skip)]
    pub cap_activity: Vec<CapRecord>,
    /// Clouds at the snapshot times, when requested.
    #[serde(skip)]
    pub particles: Vec<ParticleCloud>,
}

impl RunReport {
    /// Median of the L2 error series.
    pub fn median_l2(&self) -> f64 {
        let mut v: Vec<f64> = self.errors.iter().map(|e| e.l2).collect();
        v.sort_by(f64::total_cmp);
        let k = v.len();
        if k == 0 {
            return f64::NAN;
        }
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }

    /// Capped nodes summed over all refreshes.
    pub fn total_capped_nodes(&self) -> usize {
        self.cap_activity.iter().map(|c| c.capped_nodes).sum()
    }

    /// Smallest `|x|` at which the cap was ever active.
    pub fn min_capped_abs_x(&self) -> f64 {
        self.cap_activity
            .iter()
            .map(|c| c.min_abs_x)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cap_summary(&self) -> CapSummary {
        let min = self.min_capped_abs_x();
        CapSummary {
            refreshes: self.cap_activity.len(),
            refreshes_with_cap: self.cap_activity.iter().filter(|c| c.capped_nodes > 0).count(),
            total_capped_nodes: self.total_capped_nodes(),
            min_capped_abs_x: min.is_finite().then_some(min),
        }
    }
}

/// Header of `errors.csv`.
pub const ERRORS_HEADER: [&str; 4] = ["time", "l2", "linf", "mass"];

pub fn errors_csv(errors: &[ErrorRecord]) -> CsvTable {
    let mut table = CsvTable::new(&ERRORS_HEADER);
    for e in errors {
        table.row_f64(&[e.time, e.l2, e.linf, e.mass]);
    }
    table
}

/// Coefficient built from one density estimate.
pub struct McKeanCoefficient {
    field: DensityField,
    floor: f64,
    exponent: f64,
    cap_c0: f64,
    cap_c2: f64,
}

impl McKeanCoefficient {
    /// `margin * sqrt(a_bar(time + 1, x)) = margin * sqrt(c0 + c2 x^2)`.
    pub fn new(field: DensityField, params: &FastDiffusionParams, floor: f64, margin: f64) -> Self {
        let tau = field.time + KAPPA;
        let lift = tau.powf(params.alpha() * (1.0 - params.m()));
        let m2 = margin * margin;
        McKeanCoefficient {
            cap_c0: m2 * params.big_d() * lift,
            cap_c2: m2 * params.ktilde() * lift * tau.powf(-2.0 * params.alpha()),
            exponent: 0.5 * (params.m() - 1.0),
            floor,
            field,
        }
    }

    pub fn field(&self) -> &DensityField {
        &self.field
    }

    #[inline]
    fn raw(&self, x: f64) -> f64 {
        self.field.interpolate(x).max(self.floor).powf(self.exponent)
    }

    #[inline]
    fn cap(&self, x: f64) -> f64 {
        (self.cap_c0 + self.cap_c2 * x * x).sqrt()
    }

    /// Φ-level coefficient at `x`.
    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        self.raw(x).min(self.cap(x))
    }

    fn cap_record(&self) -> CapRecord {
        let mut capped_nodes = 0;
        let mut min_abs_x = f64::INFINITY;
        for (i, x) in self.field.grid.nodes().enumerate() {
            let raw = self.field.values[i].max(self.floor).powf(self.exponent);
            if raw > self.cap(x) {
                capped_nodes += 1;
                min_abs_x = min_abs_x.min(x.abs());
            }
        }
        CapRecord {
            time: self.field.time,
            capped_nodes,
            min_abs_x,
        }
    }
}

impl crate::sde::CoefficientField for McKeanCoefficient {
    fn value(&self, _time: f64, x: f64) -> f64 {
        self.sigma(x)
    }
}

/// Step-by-step driver, exposed so callers can inspect the cloud and the
/// coefficient between steps.
pub struct McKeanStepper {
    config: McKeanConfig,
    dynamics: Dynamics,
    cloud: ParticleCloud,
    coefficient: Option<Arc<McKeanCoefficient>>,
    oracle: CoefficientSpec,
    cap_activity: Vec<CapRecord>,
}

impl McKeanStepper {
    pub fn new(config: McKeanConfig, dynamics: Dynamics) -> Result<Self> {
        config.validate()?;
        let start = sample_barenblatt(
            &config.params,
            KAPPA,
            config.n,
            &RngStream::new(config.seed, INITIAL_STREAM),
        )?;
        let cloud = ParticleCloud::new(start, 0.0, config.dt, config.seed)?;
        let oracle = CoefficientSpec::oracle(config.params, KAPPA)?;
        Ok(McKeanStepper {
            config,
            dynamics,
            cloud,
            coefficient: None,
            oracle,
            cap_activity: Vec::new(),
        })
    }

    pub fn config(&self) -> &McKeanConfig {
        &self.config
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    pub fn time(&self) -> f64 {
        self.cloud.time()
    }

    /// KDE of the current cloud on the configured grid.
    pub fn estimate(&self) -> Result<DensityField> {
        estimate_density(&self.cloud, &self.config.grid.space, self.config.bandwidth_rule)
    }

    /// The coefficient that the next step will use, refreshing it if due.
    pub fn coefficient(&mut self) -> Result<Arc<McKeanCoefficient>> {
        let due = self.cloud.step_index().is_multiple_of(self.config.refresh_every);
        match &self.coefficient {
            Some(c) if !due || c.field.time == self.cloud.time() => Ok(c.clone()),
            _ => {
                let field = self.estimate()?;
                self.install(field)
            }
        }
    }

    fn install(&mut self, field: DensityField) -> Result<Arc<McKeanCoefficient>> {
        let mass = field.mass();
        if mass < 0.9 {
            return Err(Error::MassLoss { time: field.time, mass });
        }
        let c = Arc::new(McKeanCoefficient::new(
            field,
            &self.config.params,
            self.config.density_floor,
            self.config.cap_margin,
        ));
        self.cap_activity.push(c.cap_record());
        self.coefficient = Some(c.clone());
        Ok(c)
    }

    /// Φ-level coefficient of the next step at `x`.
    pub fn sigma(&mut self, x: f64) -> Result<f64> {
        Ok(match self.dynamics {
            Dynamics::McKean => self.coefficient()?.sigma(x),
            Dynamics::Oracle => self.oracle.sigma(self.cloud.time(), x),
        })
    }

    pub fn step(&mut self) -> Result<()> {
        match self.dynamics {
            Dynamics::McKean => {
                let c = self.coefficient()?;
                let spec = CoefficientSpec {
                    kind: CoefficientKind::Field(c),
                    clip_max: None,
                    clip_floor: None,
                    drift: None,
                };
                euler_step(&mut self.cloud, &spec)
            }
            Dynamics::Oracle => euler_step(&mut self.cloud, &self.oracle),
        }
    }

    /// Current density estimate, reusing the coefficient's field when it is
    /// up to date.
    fn current_field(&mut self) -> Result<DensityField> {
        if self.dynamics == Dynamics::McKean {
            return Ok(self.coefficient()?.field.clone());
        }
        self.estimate()
    }
}

/// Runs the particle system from `U(1, .)` to the horizon, recording the
/// error series and the density at each snapshot time.
pub fn solve(config: &McKeanConfig, dynamics: Dynamics) -> Result<RunReport> {
    let mut stepper = McKeanStepper::new(config.clone(), dynamics)?;
    let total = config.total_steps();
    let error_steps = config.error_steps()?;
    let snap_steps = snapshot_steps(&config.grid.times, config.dt)?;
    let mut report = RunReport {
        dynamics,
        steps: total,
        errors: Vec::new(),
        moments: Vec::new(),
        snapshots: Vec::new(),
        bandwidths: Vec::new(),
        cap_activity: Vec::new(),
        particles: Vec::new(),
    };
    let mut next_error = error_steps.iter().peekable();
    for step in 0..=total {
        if next_error.peek() == Some(&&step) {
            next_error.next();
            let field = stepper.current_field()?;
            let mass = field.mass();
            if mass < 0.9 {
                return Err(Error::MassLoss { time: field.time, mass });
            }
            report.errors.push(compare_to_exact(&field, &config.params, KAPPA)?);
            report.moments.push(moments(stepper.cloud()));
            if snap_steps.contains(&step) {
                report.bandwidths.push(field.bandwidth);
                report.snapshots.push(field);
                if config.keep_particles {
                    report.particles.push(stepper.cloud().clone());
                }
            }
        }
        if step < total {
            stepper.step()?;
        }
    }
    report.cap_activity = std::mem::take(&mut stepper.cap_activity);
    Ok(report)
}

/// Self-consistent run.
pub fn solve_mckean(config: &McKeanConfig) -> Result<RunReport> {
    solve(config, Dynamics::McKean)
}

/// Same schedule with the exact coefficient.
pub fn solve_oracle(config: &McKeanConfig) -> Result<RunReport> {
    solve(config, Dynamics::Oracle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(values: Vec<f64>, grid: SpatialGrid) -> DensityField {
        DensityField {
            grid,
            values,
            bandwidth: 0.1,
            time: 0.5,
        }
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let grid = SpatialGrid::new(-15.0, 15.0, 601).unwrap();
        let exact = exact_values(&p, &grid, 0.5, 1.0).unwrap();
        let e = compare_to_exact(&field(exact, grid), &p, 1.0).unwrap();
        assert_eq!(e.l2, 0.0);
        assert_eq!(e.linf, 0.0);
    }

    #[test]
    fn constant_offset_closed_form() {
        let grid = SpatialGrid::new(-15.0, 15.0, 601).unwrap();
        let c = 1e-3;
        let e = compare_fields(&field(vec![1.0 + c; 601], grid), &vec![1.0; 601]).unwrap();
        // l2 = c * sqrt(nx dx) = c * sqrt(L) (1 + O(1/nx)).
        let discrete = c * (601.0 * grid.dx()).sqrt();
        assert!((e.l2 - discrete).abs() < 1e-15);
        assert!((e.l2 / (c * 30f64.sqrt()) - 1.0).abs() < 1e-3);
        assert!((e.linf - c).abs() < 1e-15);
        assert!((e.rms - e.l2 / 30f64.sqrt()).abs() < 1e-18);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let grid = SpatialGrid::new(0.0, 1.0, 11).unwrap();
        let err = compare_fields(&field(vec![0.0; 11], grid), &[0.0; 10]);
        assert!(matches!(err, Err(Error::GridMismatch(_))));
    }

    #[test]
    fn config_validation() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let grid = SpaceTimeGrid::new(SpatialGrid::new(-15.0, 15.0, 601).unwrap(), vec![0.0, 0.1]).unwrap();
        let ok = McKeanConfig::new(p, 500, 1e-2, 0.1, grid.clone(), 1);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.n = 50;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.refresh_every = 0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.horizon = 0.05;
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.density_floor = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn error_schedule_includes_snapshots_and_end() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let grid = SpaceTimeGrid::new(SpatialGrid::new(-15.0, 15.0, 601).unwrap(), vec![0.0, 0.03]).unwrap();
        let mut cfg = McKeanConfig::new(p, 500, 1e-2, 0.12, grid, 1);
        cfg.error_interval = 0.05;
        assert_eq!(cfg.error_steps().unwrap(), vec![0, 3, 5, 10, 12]);
    }

    #[test]
    fn coefficient_is_capped_by_envelope() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let grid = SpatialGrid::new(-15.0, 15.0, 601).unwrap();
        let exact = exact_values(&p, &grid, 0.0, 1.0).unwrap();
        let mut f = field(exact, grid);
        f.time = 0.0;
        let c = McKeanCoefficient::new(f, &p, 1e-12, 1.0);
        for x in [-14.0, -3.0, 0.0, 0.7, 9.0] {
            let envelope = p.abar(1.0, 0.0, x).unwrap().sqrt();
            assert!(c.sigma(x) <= envelope * (1.0 + 1e-12));
            // On the exact field the raw coefficient equals the envelope up
            // to interpolation error.
            assert!((c.sigma(x) / envelope - 1.0).abs() < 2e-3, "x={x}");
        }
    }
}
