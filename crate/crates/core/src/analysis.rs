//! Numerical checks of integrability, small-time density bounds and the
//! initial trace of the Barenblatt solution.

use std::f64::consts::FRAC_2_PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{fourth_moment, power_integral, FastDiffusionParams, IntegralValue};
use crate::grid::SpatialGrid;
use crate::io::{fmt_f64, CsvTable};
use crate::kde::{estimate_with_bandwidth, BandwidthRule};
use crate::quadrature::{exp_sinh, gauss_kronrod, tail_decay_exponent, tanh_sinh, Tolerance};
use crate::rng::derive_seed;
use crate::sde::{run_point_start_sde, CoefficientSpec};

const INNER_TOL: Tolerance = Tolerance {
    abs: 1e-15,
    rel: 1e-12,
    max_subdivisions: 4000,
};

// Decay exponents within this margin of 1 count as non-integrable.
const DECAY_MARGIN: f64 = 1e-6;

/// `int_R U(t, x)^r dx` by direct quadrature in `x`: Gauss–Kronrod on the
/// core `[0, 10 l]`, exp–sinh beyond. Divergence is read off the decay of
/// the integrand.
pub fn spatial_power_integral(params: &FastDiffusionParams, r: f64, t: f64) -> Result<IntegralValue> {
    let l = params.length_scale(t);
    let g = |x: f64| params.density_unchecked(t, x).powf(r);
    if tail_decay_exponent(g, 1e6 * l, 1e12 * l) <= 1.0 + DECAY_MARGIN {
        return Ok(IntegralValue::Divergent);
    }
    let core = gauss_kronrod(g, 0.0, 10.0 * l, INNER_TOL);
    let tail = exp_sinh(g, 10.0 * l, l, INNER_TOL);
    if !(core.converged && tail.converged) {
        return Err(Error::Quadrature(format!("spatial integral of U^{r} at t = {t}")));
    }
    Ok(IntegralValue::Finite(2.0 * (core.value + tail.value)))
}

/// `int_{t0}^{t1} int_R U^r dx dt` by tanh–sinh in `t` over the direct
/// spatial quadrature. Divergence in time at `t0 = 0` is read off the
/// growth of the spatial integral as `t -> 0`.
pub fn direct_power_integral(params: &FastDiffusionParams, r: f64, t0: f64, t1: f64) -> Result<IntegralValue> {
    if !(t0 >= 0.0 && t1 > t0) {
        return Err(Error::invalid("times", format!("need 0 <= t0 < t1, got [{t0}, {t1}]")));
    }
    if r <= 0.0 {
        return Ok(IntegralValue::Divergent);
    }
    if !spatial_power_integral(params, r, t1)?.is_finite() {
        return Ok(IntegralValue::Divergent);
    }
    if t0 == 0.0 {
        let s = |t: f64| spatial_power_integral(params, r, t).map(|v| v.value().unwrap_or(f64::INFINITY));
        let (a, b) = (s(1e-8 * t1)?, s(1e-12 * t1)?);
        // S(t) ~ t^-g with g >= 1 is not integrable at 0.
        if (b / a).ln() / 1e4f64.ln() >= 1.0 - DECAY_MARGIN {
            return Ok(IntegralValue::Divergent);
        }
    }
    let failure = std::cell::RefCell::new(None);
    let est = tanh_sinh(
        |t| match spatial_power_integral(params, r, t) {
            Ok(IntegralValue::Finite(v)) => v,
            Ok(IntegralValue::Divergent) => f64::INFINITY,
            Err(e) => {
                failure.borrow_mut().get_or_insert_with(|| e.to_string());
                f64::NAN
            }
        },
        t0,
        t1,
        Tolerance::new(1e-13, 1e-11),
    );
    if let Some(msg) = failure.into_inner() {
        return Err(Error::Quadrature(msg));
    }
    if !est.value.is_finite() {
        return Err(Error::Quadrature(format!("time integral of U^{r}")));
    }
    Ok(IntegralValue::Finite(est.value))
}

/// Direct quadrature of `int_R x^4 U(kappa, x) dx`.
pub fn direct_fourth_moment(params: &FastDiffusionParams, kappa: f64) -> Result<IntegralValue> {
    let l = params.length_scale(kappa);
    let g = |x: f64| x.powi(4) * params.density_unchecked(kappa, x);
    if tail_decay_exponent(g, 1e6 * l, 1e12 * l) <= 1.0 + DECAY_MARGIN {
        return Ok(IntegralValue::Divergent);
    }
    let core = gauss_kronrod(g, 0.0, 10.0 * l, INNER_TOL);
    let tail = exp_sinh(g, 10.0 * l, l, INNER_TOL);
    if !(core.converged && tail.converged) {
        return Err(Error::Quadrature("fourth moment".into()));
    }
    Ok(IntegralValue::Finite(2.0 * (core.value + tail.value)))
}

/// `int_R U(t, x) dx` by direct quadrature.
pub fn profile_mass(params: &FastDiffusionParams, t: f64) -> Result<f64> {
    params.density(t, 0.0)?;
    spatial_power_integral(params, 1.0, t)?
        .value()
        .ok_or_else(|| Error::Quadrature("mass integral flagged divergent".into()))
}

/// The three integrability items for `z = U(. + kappa)`, `a = z^(m-1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub case: String,
    pub m: f64,
    pub kappa: f64,
    pub t0: f64,
    pub horizon: f64,
    /// `int_0^T int |a z| = int_0^T int z^m`.
    pub az_l1: IntegralValue,
    /// `int_{t0}^T int (a z)^2 = int_{t0}^T int z^(2m)`.
    pub az_l2_from_t0: IntegralValue,
    /// `int_{t0}^T int z^2`.
    pub z_l2_from_t0: IntegralValue,
}

impl HypothesisReport {
    pub fn items(&self) -> [(&'static str, IntegralValue); 3] {
        [
            ("az_L1", self.az_l1),
            ("az_L2_from_t0", self.az_l2_from_t0),
            ("z_L2_from_t0", self.z_l2_from_t0),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.items().iter().all(|(_, v)| v.is_finite())
    }
}

fn shifted(params: &FastDiffusionParams, r: f64, kappa: f64, t0: f64, t1: f64, direct: bool) -> Result<IntegralValue> {
    if direct {
        direct_power_integral(params, r, t0 + kappa, t1 + kappa)
    } else {
        power_integral(params, r, t0 + kappa, t1 + kappa)
    }
}

fn hypothesis_report(
    params: &FastDiffusionParams,
    kappa: f64,
    t0: f64,
    horizon: f64,
    direct: bool,
) -> Result<HypothesisReport> {
    if !(kappa >= 0.0) {
        return Err(Error::invalid("kappa", format!("must be >= 0, got {kappa}")));
    }
    if !(t0 > 0.0 && horizon > t0) {
        return Err(Error::invalid(
            "t0",
            format!("need 0 < t0 < T, got t0 = {t0}, T = {horizon}"),
        ));
    }
    let m = params.m();
    Ok(HypothesisReport {
        case: format!("m={m} kappa={kappa} t0={t0} T={horizon}"),
        m,
        kappa,
        t0,
        horizon,
        az_l1: shifted(params, m, kappa, 0.0, horizon, direct)?,
        az_l2_from_t0: shifted(params, 2.0 * m, kappa, t0, horizon, direct)?,
        z_l2_from_t0: shifted(params, 2.0, kappa, t0, horizon, direct)?,
    })
}

/// Integrability items through the self-similar reduction.
pub fn check_hypothesis_b2(
    params: &FastDiffusionParams,
    kappa: f64,
    t0: f64,
    horizon: f64,
) -> Result<HypothesisReport> {
    hypothesis_report(params, kappa, t0, horizon, false)
}

/// The same items by direct two-dimensional quadrature.
pub fn check_hypothesis_b2_direct(
    params: &FastDiffusionParams,
    kappa: f64,
    t0: f64,
    horizon: f64,
) -> Result<HypothesisReport> {
    hypothesis_report(params, kappa, t0, horizon, true)
}

/// Cutoffs `t0 = {0.01, 0.05, 0.1} T`.
pub const T0_FRACTIONS: [f64; 3] = [0.01, 0.05, 0.1];

pub fn hypothesis_sweep(params: &FastDiffusionParams, kappa: f64, horizon: f64) -> Result<Vec<HypothesisReport>> {
    T0_FRACTIONS
        .iter()
        .map(|f| check_hypothesis_b2(params, kappa, f * horizon, horizon))
        .collect()
}

pub const HYPOTHESIS_HEADER: [&str; 8] = ["case", "m", "kappa", "t0", "T", "item", "verdict", "value"];

pub fn hypothesis_csv(reports: &[HypothesisReport]) -> CsvTable {
    let mut table = CsvTable::new(&HYPOTHESIS_HEADER);
    for r in reports {
        for (item, v) in r.items() {
            let (verdict, value) = match v {
                IntegralValue::Finite(x) => ("finite", fmt_f64(x)),
                IntegralValue::Divergent => ("divergent", String::new()),
            };
            table.row(&[
                r.case.clone(),
                fmt_f64(r.m),
                fmt_f64(r.kappa),
                fmt_f64(r.t0),
                fmt_f64(r.horizon),
                item.to_string(),
                verdict.to_string(),
                value,
            ]);
        }
    }
    table
}

/// Integral families whose finiteness switches at a threshold in `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralFamily {
    /// `int_0^T int U^m`, finite iff `m > 1/3`.
    PowerM,
    /// `int_0^T int U^(2m)`, finite iff `m > 1/5`.
    PowerTwoM,
    /// `int x^4 U(kappa, x) dx`, finite iff `m > 3/5`.
    FourthMoment,
}

impl IntegralFamily {
    pub const ALL: [IntegralFamily; 3] = [
        IntegralFamily::PowerM,
        IntegralFamily::PowerTwoM,
        IntegralFamily::FourthMoment,
    ];

    pub fn threshold(self) -> f64 {
        match self {
            IntegralFamily::PowerM => 1.0 / 3.0,
            IntegralFamily::PowerTwoM => 0.2,
            IntegralFamily::FourthMoment => 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub m: f64,
    pub family: IntegralFamily,
    pub expected_finite: bool,
    pub reduced: IntegralValue,
    pub direct: IntegralValue,
}

impl ThresholdRow {
    pub fn verdicts_match(&self) -> bool {
        self.reduced.is_finite() == self.expected_finite && self.direct.is_finite() == self.expected_finite
    }

    /// Relative gap between the two routes when both are finite.
    pub fn relative_gap(&self) -> Option<f64> {
        match (self.reduced, self.direct) {
            (IntegralValue::Finite(a), IntegralValue::Finite(b)) => Some(((a - b) / b).abs()),
            _ => None,
        }
    }
}

/// `m` values of the threshold sweep.
pub const THRESHOLD_SWEEP: [f64; 6] = [0.15, 0.25, 0.4, 0.55, 0.7, 0.9];

/// Verdicts and values of the three families on `[0, horizon]` (`kappa = 0`;
/// the fourth moment is taken at `t = 1`).
pub fn threshold_sweep(ms: &[f64], horizon: f64) -> Result<Vec<ThresholdRow>> {
    let mut rows = Vec::new();
    for &m in ms {
        let p = FastDiffusionParams::new(m)?;
        for family in IntegralFamily::ALL {
            let (reduced, direct) = match family {
                IntegralFamily::PowerM => (
                    power_integral(&p, m, 0.0, horizon)?,
                    direct_power_integral(&p, m, 0.0, horizon)?,
                ),
                IntegralFamily::PowerTwoM => (
                    power_integral(&p, 2.0 * m, 0.0, horizon)?,
                    direct_power_integral(&p, 2.0 * m, 0.0, horizon)?,
                ),
                IntegralFamily::FourthMoment => (fourth_moment(&p, 1.0)?, direct_fourth_moment(&p, 1.0)?),
            };
            rows.push(ThresholdRow {
                m,
                family,
                expected_finite: m > family.threshold(),
                reduced,
                direct,
            });
        }
    }
    Ok(rows)
}

/// One `(x0, s)` cell of the density-bound experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBoundCell {
    pub x0: f64,
    pub s: f64,
    pub seed: u64,
    /// `None` when the estimate failed; the cell is then left out of fits.
    pub sup_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct X0Fit {
    pub x0: f64,
    /// Least-squares slope of `ln sup p_s` against `ln s`.
    pub slope: f64,
    pub slope_std_error: f64,
    /// `max_s sup p_s sqrt(s) / (1 + x0^4)`.
    pub k_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBoundFit {
    pub m: f64,
    pub kappa: f64,
    pub n: usize,
    pub dt: f64,
    pub x0_list: Vec<f64>,
    /// Strictly decreasing.
    pub s_list: Vec<f64>,
    pub cells: Vec<DensityBoundCell>,
    pub fits: Vec<X0Fit>,
    /// Largest `K_hat` over `x0`.
    pub k_global: f64,
    /// `max K_hat / min K_hat`.
    pub k_ratio: f64,
}

impl DensityBoundFit {
    /// `sup p_s <= K_global (1 + x0^4) / sqrt(s)` in every cell.
    pub fn envelope_holds(&self) -> bool {
        self.cells.iter().all(|c| {
            c.sup_density
                .is_none_or(|v| v <= self.k_global * (1.0 + c.x0.powi(4)) / c.s.sqrt() * (1.0 + 1e-12))
        })
    }
}

/// Least-squares slope and its standard error.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let se = if xs.len() > 2 {
        (resid / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, se)
}

/// `count` log-spaced values from `hi` down to `lo`.
pub fn log_spaced_desc(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..count)
        .map(|i| (hi.ln() + (lo.ln() - hi.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect();
    out[0] = hi;
    out[count - 1] = lo;
    out
}

/// Nodes of the local grid used for each snapshot.
pub const LOCAL_GRID_NODES: usize = 401;

fn sup_of_snapshot(positions: &[f64]) -> Result<f64> {
    let n = positions.len() as f64;
    let mean = positions.iter().sum::<f64>() / n;
    let sd = (positions.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateCloud("zero spread".into()));
    }
    let h = BandwidthRule::default().bandwidth(positions)?;
    let grid = SpatialGrid::new(mean - 6.0 * sd, mean + 6.0 * sd, LOCAL_GRID_NODES)?;
    let field = estimate_with_bandwidth(positions, &grid, h);
    Ok(field.values.iter().copied().fold(0.0, f64::max))
}

/// Point-start runs with the coefficient `sqrt(2 a_bar)` and the KDE sup of
/// each snapshot. The run for the `i`-th `x0` uses `derive_seed(seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn fit_density_bound(
    params: &FastDiffusionParams,
    kappa: f64,
    x0_list: &[f64],
    s_list: &[f64],
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<DensityBoundFit> {
    let coeff = CoefficientSpec::oracle(*params, kappa)?;
    fit_density_bound_with(&coeff, params.m(), kappa, x0_list, s_list, n, dt, seed)
}

/// [`fit_density_bound`] for an arbitrary coefficient.
#[allow(clippy::too_many_arguments)]
pub fn fit_density_bound_with(
    coeff: &CoefficientSpec,
    m: f64,
    kappa: f64,
    x0_list: &[f64],
    s_list: &[f64],
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<DensityBoundFit> {
    if x0_list.is_empty() || s_list.len() < 2 {
        return Err(Error::invalid("s_list", "need at least one x0 and two s values"));
    }
    if s_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("s_list", "must be strictly decreasing"));
    }
    if s_list.iter().any(|&s| !(s > 10.0 * dt && s <= 0.1)) {
        return Err(Error::invalid(
            "s_list",
            format!("entries must lie in (10 dt, 0.1] = ({}, 0.1]", 10.0 * dt),
        ));
    }
    if n < 2 {
        return Err(Error::invalid("n", "need at least two particles"));
    }
    let ascending: Vec<f64> = s_list.iter().rev().copied().collect();
    let mut cells = Vec::new();
    let mut fits = Vec::new();
    for (i, &x0) in x0_list.iter().enumerate() {
        let run_seed = derive_seed(seed, i as u64);
        let snaps = run_point_start_sde(coeff, x0, n, dt, &ascending, run_seed)?;
        let mut row: Vec<DensityBoundCell> = snaps
            .iter()
            .zip(&ascending)
            .map(|(cloud, &s)| {
                let (sup_density, failure) = match sup_of_snapshot(cloud.positions()) {
                    Ok(v) => (Some(v), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                DensityBoundCell {
                    x0,
                    s,
                    seed: run_seed,
                    sup_density,
                    failure,
                }
            })
            .collect();
        row.reverse();
        let ok: Vec<&DensityBoundCell> = row.iter().filter(|c| c.sup_density.is_some()).collect();
        let lx: Vec<f64> = ok.iter().map(|c| c.s.ln()).collect();
        let ly: Vec<f64> = ok.iter().map(|c| c.sup_density.unwrap().ln()).collect();
        let (slope, slope_std_error) = if ok.len() >= 2 {
            fit_slope(&lx, &ly)
        } else {
            (f64::NAN, f64::NAN)
        };
        let k_hat = ok
            .iter()
            .map(|c| c.sup_density.unwrap() * c.s.sqrt() / (1.0 + x0.powi(4)))
            .fold(f64::NEG_INFINITY, f64::max);
        fits.push(X0Fit {
            x0,
            slope,
            slope_std_error,
            k_hat,
        });
        cells.extend(row);
    }
    let k_global = fits.iter().map(|f| f.k_hat).fold(f64::NEG_INFINITY, f64::max);
    let k_min = fits.iter().map(|f| f.k_hat).fold(f64::INFINITY, f64::min);
    Ok(DensityBoundFit {
        m,
        kappa,
        n,
        dt,
        x0_list: x0_list.to_vec(),
        s_list: s_list.to_vec(),
        cells,
        fits,
        k_global,
        k_ratio: k_global / k_min,
    })
}

pub const DENSITY_BOUND_HEADER: [&str; 4] = ["x0", "s", "sup_density", "seed"];

pub fn density_bound_csv(fit: &DensityBoundFit) -> CsvTable {
    let mut table = CsvTable::new(&DENSITY_BOUND_HEADER);
    for c in &fit.cells {
        table.row(&[
            fmt_f64(c.x0),
            fmt_f64(c.s),
            c.sup_density.map(fmt_f64).unwrap_or_default(),
            c.seed.to_string(),
        ]);
    }
    table
}

/// Bounded continuous test functions for the initial-trace check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Cos,
    /// `1 / (1 + x^2)`.
    Lorentzian,
    /// `1 - (2/pi) atan(x^2)`.
    ArctanSquash,
    Sin,
    One,
}

impl TestFunction {
    pub const ALL: [TestFunction; 5] = [
        TestFunction::Cos,
        TestFunction::Lorentzian,
        TestFunction::ArctanSquash,
        TestFunction::Sin,
        TestFunction::One,
    ];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            TestFunction::Cos => x.cos(),
            TestFunction::Lorentzian => 1.0 / (1.0 + x * x),
            TestFunction::ArctanSquash => 1.0 - FRAC_2_PI * (x * x).atan(),
            TestFunction::Sin => x.sin(),
            TestFunction::One => 1.0,
        }
    }

    pub fn sup_abs(self) -> f64 {
        1.0
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "cos" => TestFunction::Cos,
            "lorentzian" => TestFunction::Lorentzian,
            "arctan_squash" => TestFunction::ArctanSquash,
            "sin" => TestFunction::Sin,
            "one" => TestFunction::One,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub value: f64,
    pub gamma_at_zero: f64,
    /// Bound on the truncated tail plus the quadrature error estimate.
    pub error_bound: f64,
}

/// `int gamma(x) U(t, x) dx` for each `t`, computed in `y = x / l(t)` as
/// `c int_0^Y (gamma(l y) + gamma(-l y)) (1 + y^2)^-q dy` with the tail
/// beyond `Y` bounded by `sup|gamma|`.
pub fn initial_trace_test(params: &FastDiffusionParams, gamma: TestFunction, t_list: &[f64]) -> Result<Vec<TraceRow>> {
    let q = params.profile_exponent();
    let c = params.big_d().powf(0.5 - q) / params.ktilde().sqrt();
    // c int_Y^inf 2 sup|gamma| y^-2q dy <= 1e-12.
    let tail_target = 1e-12;
    let y_max = (tail_target * (2.0 * q - 1.0) / (2.0 * c * gamma.sup_abs()))
        .powf(1.0 / (1.0 - 2.0 * q))
        .clamp(1e2, 1e8);
    let tail_bound = 2.0 * c * gamma.sup_abs() * y_max.powf(1.0 - 2.0 * q) / (2.0 * q - 1.0);
    t_list
        .iter()
        .map(|&t| {
            params.density(t, 0.0)?;
            let l = params.length_scale(t);
            let f = |y: f64| (gamma.eval(l * y) + gamma.eval(-l * y)) * (1.0 + y * y).powf(-q);
            // Geometric pieces keep each adaptive run short.
            let mut value = 0.0;
            let mut err = 0.0;
            let mut a = 0.0;
            let mut b: f64 = 1.0;
            while a < y_max {
                let est = gauss_kronrod(f, a, b.min(y_max), Tolerance::new(1e-15, 1e-13));
                value += est.value;
                err += est.abs_error;
                a = b;
                b *= 2.0;
            }
            Ok(TraceRow {
                t,
                value: c * value,
                gamma_at_zero: gamma.eval(0.0),
                error_bound: c * err + tail_bound,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unshifted_half_all_finite_and_routes_agree() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let reduced = check_hypothesis_b2(&p, 0.0, 0.1, 1.0).unwrap();
        let direct = check_hypothesis_b2_direct(&p, 0.0, 0.1, 1.0).unwrap();
        assert!(reduced.all_finite());
        for ((_, a), (name, b)) in reduced.items().iter().zip(direct.items()) {
            let (a, b) = (a.value().unwrap(), b.value().unwrap());
            assert!(((a - b) / b).abs() < 1e-6, "{name}: {a} vs {b}");
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn item_ii_diverges_below_one_third() {
        let p = FastDiffusionParams::new(0.3).unwrap();
        let r = check_hypothesis_b2(&p, 0.0, 0.1, 1.0).unwrap();
        assert_eq!(r.az_l1, IntegralValue::Divergent);
        assert!(r.az_l2_from_t0.is_finite());
        assert_eq!(
            check_hypothesis_b2_direct(&p, 0.0, 0.1, 1.0).unwrap().az_l1,
            IntegralValue::Divergent
        );
    }

    #[test]
    fn shift_does_not_rescue_spatial_divergence() {
        // U(t + kappa) is bounded but its tails decay like |x|^(-2/(1-m)).
        let p = FastDiffusionParams::new(0.3).unwrap();
        let r = check_hypothesis_b2(&p, 1.0, 0.1, 1.0).unwrap();
        assert_eq!(r.az_l1, IntegralValue::Divergent);
        assert!(r.z_l2_from_t0.is_finite());
        let p = FastDiffusionParams::new(0.5).unwrap();
        assert!(check_hypothesis_b2(&p, 1.0, 0.1, 1.0).unwrap().all_finite());
    }

    #[test]
    fn t0_sweep_finite_at_each_cutoff() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let reports = hypothesis_sweep(&p, 0.0, 1.5).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(HypothesisReport::all_finite));
        // Smaller t0 means a larger integral of z^2.
        let z: Vec<f64> = reports.iter().map(|r| r.z_l2_from_t0.value().unwrap()).collect();
        assert!(z[0] > z[1] && z[1] > z[2]);
    }

    #[test]
    fn invalid_cutoffs_rejected() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        assert!(check_hypothesis_b2(&p, 0.0, 0.0, 1.0).is_err());
        assert!(check_hypothesis_b2(&p, 0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn slope_fit_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (slope, se) = fit_slope(&xs, &ys);
        assert!((slope + 0.5).abs() < 1e-14);
        assert!(se < 1e-12);
    }

    #[test]
    fn log_spacing() {
        let s = log_spaced_desc(1e-3, 1e-1, 7);
        assert_eq!(s.len(), 7);
        assert!((s[0] - 0.1).abs() < 1e-15 && (s[6] - 1e-3).abs() < 1e-17);
        assert!((s[1] / s[0] - 10f64.powf(-1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn trace_of_constant_and_odd_functions() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let ts = [1.0, 1e-2, 1e-6];
        for row in initial_trace_test(&p, TestFunction::One, &ts).unwrap() {
            assert!((row.value - 1.0).abs() < 1e-9, "{row:?}");
        }
        for row in initial_trace_test(&p, TestFunction::Sin, &ts).unwrap() {
            assert_eq!(row.value, 0.0);
        }
    }

    #[test]
    fn cos_trace_converges_at_rate_t_2alpha() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let ts: Vec<f64> = (1..=6).map(|k| 10f64.powi(-k)).collect();
        let rows = initial_trace_test(&p, TestFunction::Cos, &ts).unwrap();
        let gaps: Vec<f64> = rows.iter().map(|r| (r.value - 1.0).abs()).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps[5] <= 1e-3);
        // The gap is (l^2/2) E[Y^2] to leading order, l^2 ~ t^(2 alpha).
        let c: Vec<f64> = rows
            .iter()
            .zip(&ts)
            .map(|(g, t)| (g.value - 1.0).abs() / t.powf(2.0 * p.alpha()))
            .collect();
        assert!((c[5] / c[3] - 1.0).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn other_test_functions_converge() {
        let p = FastDiffusionParams::new(0.7).unwrap();
        for g in [TestFunction::Lorentzian, TestFunction::ArctanSquash] {
            let rows = initial_trace_test(&p, g, &[1e-1, 1e-3, 1e-6]).unwrap();
            assert!((rows[2].value - 1.0).abs() < 1e-3, "{g:?} {rows:?}");
            assert!((rows[1].value - 1.0).abs() < (rows[0].value - 1.0).abs());
        }
    }

    #[test]
    fn direct_mass_is_one() {
        for m in [0.4, 0.5, 0.7, 0.9] {
            let p = FastDiffusionParams::new(m).unwrap();
            for t in [0.01, 0.1, 1.0, 1.5] {
                let mass = profile_mass(&p, t).unwrap();
                assert!((mass - 1.0).abs() < 1e-8, "m={m} t={t} mass={mass}");
            }
        }
    }
}
