//! Browser bindings: exact profiles, a steppable particle simulation and the
//! integrability table.

use wasm_bindgen::prelude::*;

use fastdiff::analysis::threshold_sweep;
use fastdiff::mckean::{exact_values, Dynamics, McKeanStepper, KAPPA};
use fastdiff::{compare_to_exact, FastDiffusionParams, McKeanConfig, SpaceTimeGrid, SpatialGrid};

const X_MIN: f64 = -15.0;
const X_MAX: f64 = 15.0;
const NX: usize = 601;
/// The demo runs until the page stops it.
const OPEN_HORIZON: f64 = 1e6;

fn js(e: fastdiff::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn grid() -> SpatialGrid {
    SpatialGrid::new(X_MIN, X_MAX, NX).expect("fixed grid is valid")
}

/// Grid nodes shared by every profile returned here.
#[wasm_bindgen]
pub fn grid_nodes() -> Vec<f64> {
    grid().nodes().collect()
}

/// Barenblatt profile `U(t, x)` on the grid.
#[wasm_bindgen]
pub fn exact_profile(m: f64, t: f64) -> Result<Vec<f64>, JsError> {
    let params = FastDiffusionParams::new(m).map_err(js)?;
    exact_values(&params, &grid(), t, 0.0).map_err(js)
}

/// Particle system started from `U(1, .)`, advanced a few steps at a time.
#[wasm_bindgen]
pub struct Simulation {
    params: FastDiffusionParams,
    stepper: McKeanStepper,
}

#[wasm_bindgen]
impl Simulation {
    /// `oracle` drives the particles with the exact coefficient instead of
    /// the estimated density.
    #[wasm_bindgen(constructor)]
    pub fn new(m: f64, n: usize, dt: f64, seed: u32, oracle: bool) -> Result<Simulation, JsError> {
        let params = FastDiffusionParams::new(m).map_err(js)?;
        let space = SpaceTimeGrid::new(grid(), vec![0.0]).map_err(js)?;
        let cfg = McKeanConfig::new(params, n, dt, OPEN_HORIZON, space, u64::from(seed));
        let dynamics = if oracle { Dynamics::Oracle } else { Dynamics::McKean };
        let stepper = McKeanStepper::new(cfg, dynamics).map_err(js)?;
        Ok(Simulation { params, stepper })
    }

    pub fn step(&mut self, count: u32) -> Result<(), JsError> {
        for _ in 0..count {
            self.stepper.step().map_err(js)?;
        }
        Ok(())
    }

    /// Elapsed time; the exact reference is `U(time + 1, .)`.
    pub fn time(&self) -> f64 {
        self.stepper.time()
    }

    pub fn estimate(&self) -> Result<Vec<f64>, JsError> {
        Ok(self.stepper.estimate().map_err(js)?.values)
    }

    pub fn exact(&self) -> Result<Vec<f64>, JsError> {
        exact_values(&self.params, &grid(), self.time(), KAPPA).map_err(js)
    }

    pub fn l2_error(&self) -> Result<f64, JsError> {
        let field = self.stepper.estimate().map_err(js)?;
        Ok(compare_to_exact(&field, &self.params, KAPPA).map_err(js)?.l2)
    }
}

/// Finiteness of the three integral families for each `m`, as JSON rows
/// `{m, family, expected_finite, reduced, direct}`.
#[wasm_bindgen]
pub fn integrability_table(ms: Vec<f64>, horizon: f64) -> Result<String, JsError> {
    let rows = threshold_sweep(&ms, horizon).map_err(js)?;
    serde_json::to_string(&rows).map_err(|e| JsError::new(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_profile_has_unit_mass() {
        let u = exact_profile(0.7, 1.0).unwrap();
        let g = grid();
        assert!((g.trapezoid(&u) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn simulation_tracks_exact_profile() {
        let mut sim = Simulation::new(0.5, 5_000, 1e-2, 3, false).unwrap();
        sim.step(10).unwrap();
        assert!((sim.time() - 0.1).abs() < 1e-12);
        assert_eq!(sim.estimate().unwrap().len(), NX);
        assert!(sim.l2_error().unwrap() < 3e-2);
    }

    #[test]
    fn table_lists_three_families_per_m() {
        let json = integrability_table(vec![0.25, 0.7], 1.0).unwrap();
        let rows: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(rows.as_array().unwrap().len(), 6);
        assert_eq!(rows[0]["family"], "power_m");
    }
}
