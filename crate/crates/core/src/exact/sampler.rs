//! Exact sampling from `U(t, .)` by numeric inverse CDF.
//!
//! `U(t, .)` is the law of `t^alpha sqrt(D/k) * tan(Theta)` where `Theta` has
//! density `cos(theta)^(2m/(1-m)) / I` on `(-pi/2, pi/2)`. The CDF of `Theta`
//! is tabulated on a uniform theta grid and inverted with monotone cubic
//! Hermite interpolation in `v = F^(1/(p+1))`. Near the left end the CDF
//! behaves like `phi^(p+1)` in `phi = theta + pi/2`, so `phi` is close to
//! linear in `v` and the power-law tail of `U` is resolved down to tiny `u`.

use std::f64::consts::FRAC_PI_2;

use super::FastDiffusionParams;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_kronrod, Tolerance};
use crate::rng::RngStream;

/// Number of theta nodes in the quantile table (both halves).
pub const QUANTILE_TABLE_SIZE: usize = 4097;

/// Inverse-CDF sampler for the Barenblatt profile at one exponent `m`.
#[derive(Debug, Clone)]
pub struct BarenblattSampler {
    params: FastDiffusionParams,
    power: f64,
    // Left half of the table: phi_j = theta_j + pi/2 in [0, pi/2], with CDF
    // values, v_j = F_j^(1/(p+1)) and dphi/dv at each node.
    phi: Vec<f64>,
    cdf: Vec<f64>,
    v: Vec<f64>,
    slope: Vec<f64>,
    norm: f64,
}

impl BarenblattSampler {
    pub fn new(params: FastDiffusionParams) -> Result<Self> {
        let half_nodes = QUANTILE_TABLE_SIZE / 2 + 1;
        let h = FRAC_PI_2 / (half_nodes - 1) as f64;
        let power = 2.0 * params.m() / (1.0 - params.m());
        let density = |phi: f64| phi.sin().powf(power);
        let phi: Vec<f64> = (0..half_nodes).map(|j| j as f64 * h).collect();
        let mut cumulative = vec![0.0; half_nodes];
        for j in 1..half_nodes {
            let cell = gauss_kronrod(density, phi[j - 1], phi[j], Tolerance::new(1e-17, 1e-14));
            if !cell.converged {
                return Err(Error::Quadrature(format!("quantile table cell {j}")));
            }
            cumulative[j] = cumulative[j - 1] + cell.value;
        }
        // Normalise so that F(theta = 0) = 1/2 exactly.
        let norm = 2.0 * cumulative[half_nodes - 1];
        let cdf: Vec<f64> = cumulative.iter().map(|c| c / norm).collect();
        let k = power + 1.0;
        let v: Vec<f64> = cdf.iter().map(|c| c.powf(1.0 / k)).collect();
        // dphi/dv = (dphi/dF)(dF/dv); at phi = 0 the limit is (k norm)^(1/k).
        let mut slope: Vec<f64> = phi
            .iter()
            .zip(&v)
            .map(|(&p, &vj)| {
                if p == 0.0 {
                    (k * norm).powf(1.0 / k)
                } else {
                    norm / density(p) * k * vj.powf(power)
                }
            })
            .collect();
        // Fritsch–Carlson limiter keeps the Hermite interpolant monotone.
        for j in 0..half_nodes - 1 {
            let secant = (phi[j + 1] - phi[j]) / (v[j + 1] - v[j]);
            let a = slope[j] / secant;
            let b = slope[j + 1] / secant;
            let r2 = a * a + b * b;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                slope[j] = tau * a * secant;
                slope[j + 1] = tau * b * secant;
            }
        }
        Ok(BarenblattSampler {
            params,
            power,
            phi,
            cdf,
            v,
            slope,
            norm,
        })
    }

    pub fn params(&self) -> &FastDiffusionParams {
        &self.params
    }

    /// Quantile of the reference law with density proportional to
    /// `(1 + y^2)^(-1/(1-m))`, for `u` in (0, 1).
    pub fn reference_quantile(&self, u: f64) -> f64 {
        if u > 0.5 {
            return -self.reference_quantile(1.0 - u);
        }
        if u == 0.5 {
            return 0.0;
        }
        let phi = self.left_quantile(u);
        -1.0 / phi.tan()
    }

    // phi = theta + pi/2 with F(theta) = u, for u in (0, 1/2).
    fn left_quantile(&self, u: f64) -> f64 {
        let w = u.powf(1.0 / (self.power + 1.0));
        // v is strictly increasing: locate the cell by bisection.
        let j = self.v.partition_point(|&c| c <= w).clamp(1, self.v.len() - 1) - 1;
        let (v0, v1) = (self.v[j], self.v[j + 1]);
        let width = v1 - v0;
        let s = (w - v0) / width;
        let (h00, h10, h01, h11) = hermite_basis(s);
        h00 * self.phi[j] + h10 * width * self.slope[j] + h01 * self.phi[j + 1] + h11 * width * self.slope[j + 1]
    }

    /// Quantile of `U(t, .)`.
    pub fn quantile(&self, t: f64, u: f64) -> f64 {
        self.reference_quantile(u) * self.params.length_scale(t)
    }

    /// CDF of the reference law, from the table (used by tests and the
    /// Kolmogorov–Smirnov check).
    pub fn reference_cdf(&self, y: f64) -> f64 {
        if y > 0.0 {
            return 1.0 - self.reference_cdf(-y);
        }
        // theta = atan(y) in (-pi/2, 0]; phi = theta + pi/2 = atan2(1, -y).
        let phi = 1.0f64.atan2(-y);
        let h = self.phi[1];
        let j = ((phi / h) as usize).min(self.phi.len() - 2);
        let extra = gauss_kronrod(
            |p: f64| p.sin().powf(self.power),
            self.phi[j],
            phi,
            Tolerance::new(1e-17, 1e-14),
        );
        self.cdf[j] + extra.value / self.norm
    }

    /// `n` i.i.d. draws from `U(t, .)`; draw `i` uses uniform `i` of `stream`.
    pub fn sample(&self, t: f64, n: usize, stream: &RngStream) -> Result<Vec<f64>> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid("t", format!("must be > 0, got {t}")));
        }
        if n == 0 {
            return Err(Error::invalid("n", "must be >= 1"));
        }
        let mut out = vec![0.0; n];
        stream.fill_uniform(0, &mut out);
        let scale = self.params.length_scale(t);
        for v in out.iter_mut() {
            *v = self.reference_quantile(*v) * scale;
        }
        Ok(out)
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

/// Convenience wrapper: builds the quantile table and draws `n` samples.
pub fn sample_barenblatt(params: &FastDiffusionParams, t: f64, n: usize, stream: &RngStream) -> Result<Vec<f64>> {
    BarenblattSampler::new(*params)?.sample(t, n, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::fourth_moment;
    use crate::quadrature::exp_sinh;

    fn exact_cdf(p: &FastDiffusionParams, t: f64, x: f64) -> f64 {
        // Independent of the table: tail quadrature of U from |x| outwards.
        let l = p.length_scale(t);
        let tail = exp_sinh(|z| p.density_unchecked(t, z), x.abs(), l, Tolerance::new(1e-13, 1e-11)).value;
        if x <= 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let s = BarenblattSampler::new(p).unwrap();
        for &u in &[1e-9, 1e-5, 3e-4, 0.01, 0.2, 0.5, 0.77, 0.999, 1.0 - 1e-7] {
            let x = s.quantile(1.0, u);
            let back = exact_cdf(&p, 1.0, x);
            assert!(
                (back - u).abs() < 1e-9 * u.min(1.0 - u).max(1e-3),
                "u={u} x={x} F={back}"
            );
        }
        assert_eq!(s.reference_quantile(0.5), 0.0);
        assert_eq!(s.reference_quantile(0.3), -s.reference_quantile(0.7));
    }

    #[test]
    fn table_cdf_matches_independent_cdf() {
        let p = FastDiffusionParams::new(0.3).unwrap();
        let s = BarenblattSampler::new(p).unwrap();
        let l = p.length_scale(1.0);
        for &x in &[-50.0, -3.0, -0.2, 0.0, 1.0, 12.0] {
            let a = s.reference_cdf(x / l);
            let b = exact_cdf(&p, 1.0, x);
            assert!((a - b).abs() < 1e-10, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn kolmogorov_smirnov_against_quadrature_cdf() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let n = 100_000;
        let mut xs = sample_barenblatt(&p, 1.0, n, &RngStream::new(11, 0)).unwrap();
        xs.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate().step_by(7) {
            let f = exact_cdf(&p, 1.0, x);
            d = d
                .max((f - i as f64 / n as f64).abs())
                .max(((i + 1) as f64 / n as f64 - f).abs());
        }
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS {d} >= {critical}");
    }

    #[test]
    fn sample_mean_is_centred() {
        let p = FastDiffusionParams::new(0.5).unwrap();
        let n = 200_000;
        let xs = sample_barenblatt(&p, 1.0, n, &RngStream::new(5, 0)).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() <= 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn empirical_fourth_moment() {
        let p = FastDiffusionParams::new(0.7).unwrap();
        let kappa = 1.0;
        let n = 1_000_000;
        let xs = sample_barenblatt(&p, kappa, n, &RngStream::new(3, 0)).unwrap();
        let emp = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
        let exact = fourth_moment(&p, kappa).unwrap().value().unwrap();
        assert!(((emp - exact) / exact).abs() < 0.05, "{emp} vs {exact}");
    }

    #[test]
    fn deterministic_and_validated() {
        let p = FastDiffusionParams::new(0.6).unwrap();
        let s = BarenblattSampler::new(p).unwrap();
        let a = s.sample(0.5, 100, &RngStream::new(1, 2)).unwrap();
        let b = s.sample(0.5, 100, &RngStream::new(1, 2)).unwrap();
        assert_eq!(a, b);
        assert!(s.sample(0.0, 10, &RngStream::new(1, 2)).is_err());
        assert!(s.sample(1.0, 0, &RngStream::new(1, 2)).is_err());
    }
}
