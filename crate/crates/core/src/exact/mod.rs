//! Closed-form Barenblatt solution of `u_t = (u^m)_xx`, `0 < m < 1`, with a
//! Dirac mass at the origin as initial data:
//!
//! ```text
//! U(t, x) = t^-alpha * (D + k x^2 t^-2alpha)^(-1/(1-m))
//! alpha = 1/(m+1),  k = (1-m)/(2m(m+1)),
//! D = (I / sqrt(k))^(2(1-m)/(m+1)),  I = int_{-pi/2}^{pi/2} cos(x)^(2m/(1-m)) dx
//! ```
//!
//! Also provides the time-shifted solution `U(t + kappa, x)`, the
//! coefficient `a_bar = U_bar^(m-1)` of the associated linear SDE, exact
//! sampling and the integrals used by the integrability checks.

mod integrals;
mod sampler;

pub use integrals::{diagnostic_integrals, fourth_moment, power_integral, reference_integral, IntegralValue};
pub use sampler::{sample_barenblatt, BarenblattSampler, QUANTILE_TABLE_SIZE};

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_kronrod, Tolerance};

/// The exponent `m` and the derived constants of the Barenblatt profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FastDiffusionParams {
    m: f64,
    alpha: f64,
    ktilde: f64,
    big_i: f64,
    big_d: f64,
}

impl FastDiffusionParams {
    /// Derives all constants for `m` in (0, 1). `I` is integrated to an
    /// absolute error below 1e-12.
    pub fn new(m: f64) -> Result<Self> {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::invalid("m", format!("must lie in (0, 1), got {m}")));
        }
        let alpha = 1.0 / (m + 1.0);
        let ktilde = (1.0 - m) / (2.0 * (m + 1.0) * m);
        let p = 2.0 * m / (1.0 - m);
        // cos(theta) on [0, pi/2] is sin(phi) on [0, pi/2]; the possible
        // non-smooth point sits at phi = 0 where sin is accurate.
        let half = gauss_kronrod(
            |phi: f64| phi.sin().powf(p),
            0.0,
            FRAC_PI_2,
            Tolerance::new(2e-14, 1e-15),
        );
        if !half.converged {
            return Err(Error::Quadrature(format!(
                "I(m = {m}): error estimate {:e}",
                half.abs_error
            )));
        }
        let big_i = 2.0 * half.value;
        let big_d = (big_i / ktilde.sqrt()).powf(2.0 * (1.0 - m) / (m + 1.0));
        Ok(FastDiffusionParams {
            m,
            alpha,
            ktilde,
            big_i,
            big_d,
        })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ktilde(&self) -> f64 {
        self.ktilde
    }

    pub fn big_i(&self) -> f64 {
        self.big_i
    }

    pub fn big_d(&self) -> f64 {
        self.big_d
    }

    /// Profile exponent `1/(1-m)`.
    pub fn profile_exponent(&self) -> f64 {
        1.0 / (1.0 - self.m)
    }

    /// `U(t, x)` without argument checks; `t` must be positive.
    #[inline]
    pub fn density_unchecked(&self, t: f64, x: f64) -> f64 {
        let ta = t.powf(-self.alpha);
        ta * (self.big_d + self.ktilde * x * x * ta * ta).powf(-self.profile_exponent())
    }

    pub fn density(&self, t: f64, x: f64) -> Result<f64> {
        check_time("t", t)?;
        Ok(self.density_unchecked(t, x))
    }

    /// `U(t + kappa, x)`.
    pub fn shifted_density(&self, kappa: f64, t: f64, x: f64) -> Result<f64> {
        if !(kappa >= 0.0) {
            return Err(Error::invalid("kappa", format!("must be >= 0, got {kappa}")));
        }
        check_time("t + kappa", t + kappa)?;
        Ok(self.density_unchecked(t + kappa, x))
    }

    /// Peak value `U(t, 0) = t^-alpha D^(-1/(1-m))`.
    pub fn peak(&self, t: f64) -> f64 {
        t.powf(-self.alpha) * self.big_d.powf(-self.profile_exponent())
    }

    /// Length scale `t^alpha sqrt(D/k)` of `U(t, .)`: the profile is a
    /// function of `x / length_scale(t)` only.
    pub fn length_scale(&self, t: f64) -> f64 {
        t.powf(self.alpha) * (self.big_d / self.ktilde).sqrt()
    }

    /// `Phi(u) = u^((m-1)/2)`, clipped at `cap`. `Phi(0)` is infinite, so
    /// `u <= 0` returns `cap`.
    #[inline]
    pub fn phi(&self, u: f64, cap: f64) -> f64 {
        if u > 0.0 {
            u.powf(0.5 * (self.m - 1.0)).min(cap)
        } else {
            cap
        }
    }

    /// `a_bar(s, y) = (s+kappa)^(alpha(1-m)) (D + k y^2 (s+kappa)^-2alpha)`,
    /// which equals `U(s + kappa, y)^(m-1)`.
    pub fn abar(&self, kappa: f64, s: f64, y: f64) -> Result<f64> {
        check_time("s + kappa", s + kappa)?;
        Ok(self.abar_unchecked(s + kappa, y))
    }

    /// `a_bar` as a function of absolute time `tau = s + kappa`.
    #[inline]
    pub fn abar_unchecked(&self, tau: f64, y: f64) -> f64 {
        let ta = tau.powf(-self.alpha);
        (self.big_d + self.ktilde * y * y * ta * ta) / ta.powf(1.0 - self.m)
    }

    /// Growth rate of `sqrt(a_bar(s, .))` in `|y|`:
    /// `(s+kappa)^(alpha(1-m)/2 - alpha) sqrt(k)`.
    pub fn envelope_slope(&self, tau: f64) -> f64 {
        tau.powf(0.5 * self.alpha * (1.0 - self.m) - self.alpha) * self.ktilde.sqrt()
    }
}

fn check_time(name: &'static str, t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be > 0, got {t}")))
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn half() -> FastDiffusionParams {
        FastDiffusionParams::new(0.5).unwrap()
    }

    // Reference constants evaluated with 40-digit arithmetic.
    const D_HALF: f64 = 1.948_888_544_860_376_979_5;
    const PEAK_HALF: f64 = 0.263_284_925_536_328_920_11;

    #[test]
    fn constants_for_one_half() {
        let p = half();
        assert!((p.alpha() - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.ktilde() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.big_i() - FRAC_PI_2).abs() < 1e-12);
        assert!((p.big_d() - D_HALF).abs() < 1e-12);
        let closed = (std::f64::consts::PI * 3f64.sqrt() / 2.0).powf(2.0 / 3.0);
        assert!((p.big_d() - closed).abs() < 1e-12);
    }

    #[test]
    fn constants_other_exponents() {
        // (m, I, D) from 40-digit quadrature.
        let table = [
            (0.7, 1.100_246_812_827_328_787_2, 1.490_634_087_493_366_344),
            (0.4, 1.821_487_985_915_686_208_9, 2.184_711_155_163_721_691),
            (0.9, 0.582_673_014_898_436_535_85, 1.137_748_052_710_917_137),
        ];
        for (m, i, d) in table {
            let p = FastDiffusionParams::new(m).unwrap();
            assert!((p.big_i() - i).abs() < 1e-12, "I({m})");
            assert!((p.big_d() - d).abs() < 1e-11 * d, "D({m})");
            let k = (1.0 - m) / (2.0 * (m + 1.0) * m);
            assert!(((p.ktilde() - k) / k).abs() < 1e-12);
            assert!(((p.alpha() - 1.0 / (m + 1.0)) * (m + 1.0)).abs() < 1e-12);
            assert!(p.alpha() > 0.5 && p.alpha() < 1.0);
        }
    }

    #[test]
    fn small_m_uses_endpoint_aware_quadrature() {
        // m = 0.2: exponent 1/2, I = 2 int_0^{pi/2} sqrt(sin) = 2.396280469471184...
        let p = FastDiffusionParams::new(0.2).unwrap();
        assert!((p.big_i() - 2.396_280_469_471_184_4).abs() < 1e-12, "{}", p.big_i());
    }

    #[test]
    fn rejects_out_of_range_m() {
        for m in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(FastDiffusionParams::new(m).is_err());
        }
    }

    #[test]
    fn density_values() {
        let p = half();
        assert!((p.density(1.0, 0.0).unwrap() - PEAK_HALF).abs() < 1e-13);
        assert!((p.peak(1.0) - PEAK_HALF).abs() < 1e-13);
        assert_eq!(p.density(1.3, 2.1).unwrap(), p.density(1.3, -2.1).unwrap());
        assert!(p.density(0.0, 1.0).is_err());
        assert!(p.density(-1.0, 1.0).is_err());
        // Strictly decreasing in |x|.
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let v = p.density(0.7, i as f64 * 0.3).unwrap();
            assert!(v > 0.0 && v < last);
            last = v;
        }
    }

    #[test]
    fn self_similarity_with_factor_two() {
        let p = half();
        let c: f64 = 2.0;
        let pts = [
            (0.1, 0.0),
            (0.3, -1.2),
            (1.0, 4.0),
            (2.5, 0.7),
            (0.05, 0.01),
            (1.7, -9.0),
            (0.9, 2.2),
            (3.3, 15.0),
            (0.4, -0.3),
            (1.1, 6.6),
        ];
        for (t, x) in pts {
            let lhs = c.powf(p.alpha()) * p.density(c * t, c.powf(p.alpha()) * x).unwrap();
            let rhs = p.density(t, x).unwrap();
            assert!(((lhs - rhs) / rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_density_cases() {
        let p = half();
        for x in [-3.0, 0.0, 0.4, 8.0] {
            assert_eq!(p.shifted_density(1.0, 0.0, x).unwrap(), p.density(1.0, x).unwrap());
            assert_eq!(p.shifted_density(0.0, 0.6, x).unwrap(), p.density(0.6, x).unwrap());
        }
        assert_eq!(p.shifted_density(0.5, 0.5, 1.0).unwrap(), p.density(1.0, 1.0).unwrap());
        assert!(p.shifted_density(0.0, 0.0, 1.0).is_err());
        assert!(p.shifted_density(-1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn phi_values() {
        let p = half();
        assert_eq!(p.phi(1.0, 1e6), 1.0);
        assert!((p.phi(0.25, 1e6) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.phi(0.0, 42.0), 42.0);
        for (t, x) in [(0.3, 0.2), (1.0, 5.0), (2.0, -1.0)] {
            let u = p.density(t, x).unwrap();
            let lhs = p.phi(u, f64::INFINITY).powi(2) * u;
            assert!(((lhs - u.powf(0.5)) / lhs).abs() < 1e-13);
        }
    }

    #[test]
    fn abar_identity_and_bounds() {
        for m in [0.3, 0.5, 0.8] {
            let p = FastDiffusionParams::new(m).unwrap();
            let kappa = 1.0;
            for i in 0..20 {
                let s = 0.08 * i as f64;
                let y = -9.0 + 0.95 * i as f64;
                let a = p.abar(kappa, s, y).unwrap();
                let u = p.shifted_density(kappa, s, y).unwrap();
                assert!(((a - u.powf(m - 1.0)) / a).abs() < 1e-12);
                assert!(a >= (s + kappa).powf(p.alpha() * (1.0 - m)) * p.big_d() * (1.0 - 1e-15));
            }
        }
        let p = half();
        assert!((p.abar(1.0, 0.0, 0.0).unwrap() - D_HALF).abs() < 1e-12);
        assert!(p.abar(0.0, 0.0, 1.0).is_err());
        // sqrt(a_bar) grows linearly with the advertised slope.
        let tau: f64 = 1.7;
        let y = 1e7;
        let slope = p.abar_unchecked(tau, y).sqrt() / y;
        assert!(((slope - p.envelope_slope(tau)) / slope).abs() < 1e-9);
    }

    #[test]
    fn pde_residual_converges_at_second_order() {
        // Central differences of u_t - (u^m)_xx at interior points.
        let p = half();
        let m = p.m();
        let residual = |h: f64| {
            let mut worst: f64 = 0.0;
            for &(t, x) in &[(0.5, 0.0), (1.0, 0.7), (1.3, -2.0), (0.8, 3.5)] {
                let u = |t: f64, x: f64| p.density_unchecked(t, x);
                let ut = (u(t + h, x) - u(t - h, x)) / (2.0 * h);
                let um = |x: f64| u(t, x).powf(m);
                let uxx = (um(x + h) - 2.0 * um(x) + um(x - h)) / (h * h);
                worst = worst.max((ut - uxx).abs());
            }
            worst
        };
        let r1 = residual(1e-2);
        let r2 = residual(5e-3);
        let r3 = residual(2.5e-3);
        assert!(r1 < 1e-3);
        for ratio in [r1 / r2, r2 / r3] {
            assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        }
    }
}
