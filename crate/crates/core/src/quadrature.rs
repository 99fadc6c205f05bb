//! Numerical integration.
//!
//! Three schemes cover everything the crate integrates:
//!
//! - [`gauss_kronrod`]: globally adaptive 7/15-point Gauss–Kronrod for
//!   finite intervals with well-behaved integrands.
//! - [`tanh_sinh`]: double-exponential rule on a finite interval, used when
//!   the integrand has algebraic endpoint singularities (e.g. `t^-0.4` at 0).
//! - [`exp_sinh`]: double-exponential rule on `[a, inf)`, which turns the
//!   slow algebraic decay of Barenblatt tails into double-exponential decay
//!   in the transformed variable.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

/// Result of a quadrature call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
    pub converged: bool,
}

/// Stopping rule: stop once the error estimate is below `max(abs, rel*|I|)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-10,
            rel: 1e-12,
            max_subdivisions: 4000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            ..Default::default()
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive Gauss–Kronrod (G7/K15) on `[a, b]`.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Estimate {
    if a == b {
        return Estimate {
            value: 0.0,
            abs_error: 0.0,
            converged: true,
        };
    }
    let first = gk15(&f, a, b);
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    // Segments too narrow to split further are parked here.
    let mut frozen_err = 0.0;
    let mut frozen_value = 0.0;
    heap.push(first);
    let mut splits = 0;
    while total_err > tol.target(total) && splits < tol.max_subdivisions {
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) || (seg.b - seg.a).abs() < 1e-14 * mid.abs() {
            frozen_err += seg.error;
            frozen_value += seg.value;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let left = gk15(&f, seg.a, mid);
        let right = gk15(&f, mid, seg.b);
        total += left.value + right.value - seg.value;
        total_err += left.error + right.error - seg.error;
        heap.push(left);
        heap.push(right);
        splits += 1;
    }
    // Re-sum to shed the drift of the running updates.
    let value = heap.iter().map(|s| s.value).sum::<f64>() + frozen_value;
    let abs_error = heap.iter().map(|s| s.error).sum::<f64>() + frozen_err;
    Estimate {
        value,
        abs_error,
        converged: abs_error <= tol.target(value),
    }
}

const DE_MIN_LEVEL: u32 = 3;
const DE_MAX_LEVEL: u32 = 9;

/// Tanh–sinh rule on `[a, b]`. Abscissae near the endpoints are computed
/// from their distance to the endpoint, so integrands singular at `a` or
/// `b` (but integrable) are handled to full precision.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Estimate {
    if a == b {
        return Estimate {
            value: 0.0,
            abs_error: 0.0,
            converged: true,
        };
    }
    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    // Contribution of the symmetric pair at parameter t (t > 0).
    let pair = |t: f64| -> Option<f64> {
        let u = FRAC_PI_2 * t.sinh();
        let e = (2.0 * u).exp();
        let dist = 2.0 * half / (1.0 + e);
        let weight = half * FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        if !weight.is_finite() || weight == 0.0 {
            return None;
        }
        // Each side is dropped once its abscissa rounds onto the endpoint.
        let xl = a + dist;
        let xr = b - dist;
        match (xl != a, xr != b) {
            (false, false) => None,
            (left, right) => {
                let fl = if left { f(xl) } else { 0.0 };
                let fr = if right { f(xr) } else { 0.0 };
                Some(weight * (fl + fr))
            }
        }
    };
    let t_max = 6.5;
    let mut h = 1.0;
    let mut sum = half * FRAC_PI_2 * f(center);
    let mut t = h;
    while t <= t_max {
        match pair(t) {
            Some(v) => sum += v,
            None => break,
        }
        t += h;
    }
    let mut estimate = sum * h;
    let mut error = f64::INFINITY;
    for level in 1..=DE_MAX_LEVEL {
        h *= 0.5;
        let mut t = h;
        while t <= t_max {
            match pair(t) {
                Some(v) => sum += v,
                None => break,
            }
            t += 2.0 * h;
        }
        let next = sum * h;
        error = (next - estimate).abs();
        estimate = next;
        if level >= DE_MIN_LEVEL && error <= tol.target(estimate) {
            break;
        }
    }
    Estimate {
        value: estimate,
        abs_error: error,
        converged: error <= tol.target(estimate),
    }
}

/// Exp–sinh rule on `[a, inf)` with the substitution
/// `x = a + scale * exp(pi/2 * sinh(t))`.
///
/// `scale` should be the length scale on which `f` varies near `a`.
pub fn exp_sinh<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64, tol: Tolerance) -> Estimate {
    let term = |t: f64| -> Option<f64> {
        let e = (FRAC_PI_2 * t.sinh()).exp();
        let dist = scale * e;
        let x = a + dist;
        if !x.is_finite() || dist == 0.0 || x == a {
            return None;
        }
        let w = FRAC_PI_2 * t.cosh() * dist;
        if !w.is_finite() {
            return None;
        }
        let v = f(x) * w;
        if v.is_finite() {
            Some(v)
        } else {
            None
        }
    };
    // Walk outwards from t0 in steps of `step` until the terms die out.
    let sweep = |t0: f64, step: f64, running: f64| -> f64 {
        let mut acc = 0.0;
        let mut t = t0;
        let mut small = 0;
        while t.abs() <= 8.0 {
            match term(t) {
                Some(v) => {
                    acc += v;
                    if v.abs() <= 1e-18 * (running + acc).abs().max(f64::MIN_POSITIVE) {
                        small += 1;
                        if small >= 3 {
                            break;
                        }
                    } else {
                        small = 0;
                    }
                }
                None => break,
            }
            t += step;
        }
        acc
    };
    let mut h = 1.0;
    let mut sum = term(0.0).unwrap_or(0.0);
    sum += sweep(h, h, sum);
    sum += sweep(-h, -h, sum);
    let mut estimate = sum * h;
    let mut error = f64::INFINITY;
    for level in 1..=DE_MAX_LEVEL {
        h *= 0.5;
        sum += sweep(h, 2.0 * h, sum);
        sum += sweep(-h, -2.0 * h, sum);
        let next = sum * h;
        error = (next - estimate).abs();
        estimate = next;
        if level >= DE_MIN_LEVEL && error <= tol.target(estimate) {
            break;
        }
    }
    Estimate {
        value: estimate,
        abs_error: error,
        converged: error <= tol.target(estimate),
    }
}

/// Power-law decay exponent `tau` of `|f(x)| ~ x^-tau`, measured between
/// `x1` and `x2`. Returns `+inf` when `f` has already vanished at `x1`.
pub fn tail_decay_exponent<F: Fn(f64) -> f64>(f: F, x1: f64, x2: f64) -> f64 {
    let f1 = f(x1).abs();
    let f2 = f(x2).abs();
    if f1 == 0.0 || f2 == 0.0 {
        return f64::INFINITY;
    }
    -(f2 / f1).ln() / (x2 / x1).ln()
}

/// `(1 + y^2)^e`, evaluated without overflowing `y^2` for large `|y|`.
pub fn one_plus_sq_pow(y: f64, e: f64) -> f64 {
    let ay = y.abs();
    if ay <= 1.0 {
        (1.0 + ay * ay).powf(e)
    } else {
        let r = 1.0 / ay;
        (2.0 * e * ay.ln()).exp() * (1.0 + r * r).powf(e)
    }
}
