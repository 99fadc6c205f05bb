//! Space-time integrals of powers of the Barenblatt profile.
//!
//! With `x = t^alpha sqrt(D/k) y` the profile factorises and
//!
//! ```text
//! int_{t0}^{t1} int U^r dx dt
//!     = D^(1/2 - r q) / sqrt(k) * int_{t0}^{t1} t^(alpha (1 - r)) dt * J(r q)
//! J(s) = int_R (1 + y^2)^-s dy,   q = 1/(1-m).
//! ```
//!
//! `J(s)` is finite iff `2s > 1`. Finiteness is decided numerically from the
//! measured tail decay of the integrand, not from that formula.

use serde::Serialize;

use super::FastDiffusionParams;
use crate::error::{Error, Result};
use crate::quadrature::{exp_sinh, one_plus_sq_pow, tail_decay_exponent, Tolerance};

/// Value of an integral that may diverge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "value", rename_all = "lowercase")]
pub enum IntegralValue {
    Finite(f64),
    Divergent,
}

impl IntegralValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, IntegralValue::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            IntegralValue::Finite(v) => Some(*v),
            IntegralValue::Divergent => None,
        }
    }

    fn map(self, f: impl FnOnce(f64) -> f64) -> Self {
        match self {
            IntegralValue::Finite(v) => IntegralValue::Finite(f(v)),
            IntegralValue::Divergent => IntegralValue::Divergent,
        }
    }
}

// Decay exponents within this margin of 1 count as non-integrable.
const DECAY_MARGIN: f64 = 1e-6;

/// `int_R g(y) dy` for an even `g` decaying algebraically, with the
/// divergence verdict taken from the measured decay exponent of `g`.
pub(crate) fn integrate_even_tail<F: Fn(f64) -> f64>(g: F, scale: f64, tol: Tolerance) -> Result<IntegralValue> {
    let tau = tail_decay_exponent(&g, 1e6 * scale, 1e12 * scale);
    if tau <= 1.0 + DECAY_MARGIN {
        return Ok(IntegralValue::Divergent);
    }
    let est = exp_sinh(&g, 0.0, scale, tol);
    if !est.converged || !est.value.is_finite() {
        return Err(Error::Quadrature(format!(
            "half-line integral: value {:e}, error {:e}",
            est.value, est.abs_error
        )));
    }
    Ok(IntegralValue::Finite(2.0 * est.value))
}

/// `J(s) = int_R (1 + y^2)^-s dy` by quadrature.
pub fn reference_integral(s: f64) -> Result<IntegralValue> {
    integrate_even_tail(|y| one_plus_sq_pow(y, -s), 1.0, Tolerance::new(1e-14, 1e-13))
}

fn time_power_integral(gamma: f64, t0: f64, t1: f64) -> IntegralValue {
    if gamma <= -1.0 && t0 == 0.0 {
        return IntegralValue::Divergent;
    }
    if (gamma + 1.0).abs() < 1e-14 {
        return IntegralValue::Finite((t1 / t0).ln());
    }
    let e = gamma + 1.0;
    IntegralValue::Finite((t1.powf(e) - t0.powf(e)) / e)
}

/// `int_{t0}^{t1} int_R U(t,x)^r dx dt` through the self-similar reduction.
pub fn power_integral(params: &FastDiffusionParams, r: f64, t0: f64, t1: f64) -> Result<IntegralValue> {
    if !(t0 >= 0.0 && t1 > t0 && t1.is_finite()) {
        return Err(Error::invalid("times", format!("need 0 <= t0 < t1, got [{t0}, {t1}]")));
    }
    if r.is_nan() {
        return Err(Error::invalid("r", "power is NaN"));
    }
    if r <= 0.0 {
        // U^r does not decay in x.
        return Ok(IntegralValue::Divergent);
    }
    let q = params.profile_exponent();
    let spatial = reference_integral(r * q)?;
    let time = time_power_integral(params.alpha() * (1.0 - r), t0, t1);
    let prefactor = params.big_d().powf(0.5 - r * q) / params.ktilde().sqrt();
    Ok(match (spatial, time) {
        (IntegralValue::Finite(j), IntegralValue::Finite(tau)) => IntegralValue::Finite(prefactor * tau * j),
        _ => IntegralValue::Divergent,
    })
}

/// `int_{t0}^{t1} int_R U^(p(m-1)/2 + 1) dx dt` for `p >= 2`.
pub fn diagnostic_integrals(params: &FastDiffusionParams, p: f64, t0: f64, t1: f64) -> Result<IntegralValue> {
    if !(p >= 2.0) {
        return Err(Error::invalid("p", format!("must be >= 2, got {p}")));
    }
    power_integral(params, 0.5 * p * (params.m() - 1.0) + 1.0, t0, t1)
}

/// `int_R x^4 U(kappa, x) dx`
/// `= D^((3-5m)/(2(1-m))) / k^(5/2) * kappa^(4 alpha) * int_R y^4 (1+y^2)^-q dy`.
pub fn fourth_moment(params: &FastDiffusionParams, kappa: f64) -> Result<IntegralValue> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid("kappa", format!("must be > 0, got {kappa}")));
    }
    let m = params.m();
    let q = params.profile_exponent();
    let y_integral = integrate_even_tail(
        |y: f64| y.powi(4) * one_plus_sq_pow(y, -q),
        1.0,
        Tolerance::new(1e-14, 1e-13),
    )?;
    let prefactor = params.big_d().powf((3.0 - 5.0 * m) / (2.0 * (1.0 - m))) / params.ktilde().powf(2.5)
        * kappa.powf(4.0 * params.alpha());
    Ok(y_integral.map(|v| prefactor * v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_kronrod, tanh_sinh};

    #[test]
    fn reference_integral_closed_forms() {
        // J(1) = pi, J(2) = pi/2, J(3/2) = 2.
        assert!((reference_integral(1.0).unwrap().value().unwrap() - std::f64::consts::PI).abs() < 1e-12);
        assert!((reference_integral(2.0).unwrap().value().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((reference_integral(1.5).unwrap().value().unwrap() - 2.0).abs() < 1e-12);
        // J(0.7) = sqrt(pi) Gamma(0.2)/Gamma(0.7), heavy tail y^-1.4.
        let j = reference_integral(0.7).unwrap().value().unwrap();
        assert!((j - 6.268_653_124_086_036).abs() < 1e-9 * j, "{j}");
        assert_eq!(reference_integral(0.5).unwrap(), IntegralValue::Divergent);
        assert_eq!(reference_integral(0.3).unwrap(), IntegralValue::Divergent);
    }

    #[test]
    fn u_power_m_is_finite_for_one_half() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let v = diagnostic_integrals(&p, 2.0, 0.0, 1.5).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn divergence_flag_small_m() {
        let p = FastDiffusionParams::new(0.25).unwrap();
        assert_eq!(
            diagnostic_integrals(&p, 4.0, 0.0, 1.0).unwrap(),
            IntegralValue::Divergent
        );
        assert!(diagnostic_integrals(&p, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn reduced_matches_direct_double_integral() {
        // Direct route: tanh-sinh in t of the spatial integral of U^m
        // evaluated with Gauss-Kronrod on a compact core plus exp-sinh tails.
        let p = FastDiffusionParams::new(0.5).unwrap();
        let m = p.m();
        let spatial = |t: f64| {
            let l = p.length_scale(t);
            let core = gauss_kronrod(
                |x| p.density_unchecked(t, x).powf(m),
                0.0,
                10.0 * l,
                Tolerance::new(1e-15, 1e-13),
            );
            let tail = exp_sinh(
                |x| p.density_unchecked(t, x).powf(m),
                10.0 * l,
                l,
                Tolerance::new(1e-15, 1e-13),
            );
            2.0 * (core.value + tail.value)
        };
        let direct = tanh_sinh(spatial, 0.0, 1.0, Tolerance::new(1e-13, 1e-11)).value;
        let reduced = diagnostic_integrals(&p, 2.0, 0.0, 1.0).unwrap().value().unwrap();
        assert!(((direct - reduced) / reduced).abs() < 1e-6, "{direct} vs {reduced}");
    }

    #[test]
    fn fourth_moment_cases() {
        let p = FastDiffusionParams::new(0.7).unwrap();
        let v1 = fourth_moment(&p, 1.0).unwrap().value().unwrap();
        // Direct quadrature of x^4 U(1, x).
        let l = p.length_scale(1.0);
        let direct = 2.0
            * exp_sinh(
                |x: f64| x.powi(4) * p.density_unchecked(1.0, x),
                0.0,
                l,
                Tolerance::new(1e-14, 1e-13),
            )
            .value;
        assert!(((v1 - direct) / direct).abs() < 1e-8, "{v1} vs {direct}");
        let v2 = fourth_moment(&p, 2.0).unwrap().value().unwrap();
        assert!((v2 / v1 - 2f64.powf(4.0 * p.alpha())).abs() < 1e-10);

        let half = FastDiffusionParams::new(0.5).unwrap();
        assert_eq!(fourth_moment(&half, 1.0).unwrap(), IntegralValue::Divergent);
        assert!(fourth_moment(&half, 0.0).is_err());
    }
}
