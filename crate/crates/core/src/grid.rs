use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform spatial grid `x_i = x_min + i * dx`, `i = 0..nx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::invalid(
                "grid",
                format!("need x_min < x_max, got [{x_min}, {x_max}]"),
            ));
        }
        if nx < 2 {
            return Err(Error::invalid("nx", format!("need at least 2 nodes, got {nx}")));
        }
        Ok(SpatialGrid { x_min, x_max, nx })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.dx();
        (0..self.nx).map(move |i| self.x_min + i as f64 * dx)
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Trapezoidal integral of nodal values.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.nx);
        let inner: f64 = values[1..values.len() - 1].iter().sum();
        self.dx() * (inner + 0.5 * (values[0] + values[values.len() - 1]))
    }
}

/// Spatial grid plus the ordered list of output times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub space: SpatialGrid,
    pub times: Vec<f64>,
}

impl SpaceTimeGrid {
    pub fn new(space: SpatialGrid, times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::invalid("t_grid", "times must be finite and >= 0"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("t_grid", "times must be strictly increasing"));
        }
        Ok(SpaceTimeGrid { space, times })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(SpatialGrid::new(1.0, 1.0, 10).is_err());
        assert!(SpatialGrid::new(0.0, 1.0, 1).is_err());
        let g = SpatialGrid::new(-15.0, 15.0, 601).unwrap();
        assert!((g.dx() - 0.05).abs() < 1e-15);
        assert!(SpaceTimeGrid::new(g, vec![0.0, 0.5, 0.5]).is_err());
        assert!(SpaceTimeGrid::new(g, vec![-0.1, 0.5]).is_err());
        assert!(SpaceTimeGrid::new(g, vec![0.0, 0.5, 1.0, 1.5]).is_ok());
    }

    #[test]
    fn trapezoid_of_linear_is_exact() {
        let g = SpatialGrid::new(0.0, 2.0, 5).unwrap();
        let v: Vec<f64> = g.nodes().map(|x| 3.0 * x + 1.0).collect();
        assert!((g.trapezoid(&v) - 8.0).abs() < 1e-14);
    }
}
