use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::system::PowerSystem;

/// Run-wide parameters shared by every market and benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Value of lost load, $/MWh.
    pub voll: f64,
    /// Scale of the bid upper bound around the expected VRES output.
    pub gamma: f64,
    /// Scale of the dual upper bound around the zero-bid dual.
    pub xi: f64,
    pub solver_tolerance: f64,
    /// Periods per rolling-horizon window.
    pub horizon_window: usize,
    /// Grid spacing of the brute-force bid search, MW.
    pub oracle_step: f64,
    /// Largest number of grid points the brute-force search may visit.
    pub oracle_cap: u64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            voll: 1000.0,
            gamma: 1.0,
            xi: 1.0,
            solver_tolerance: 1e-6,
            horizon_window: 24,
            oracle_step: 1.0,
            oracle_cap: 1_000_000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, system: &PowerSystem) -> Result<()> {
        let max_up = system.max_redispatch_up_cost();
        if !(self.voll > max_up) {
            return Err(invalid(format!(
                "voll {} must exceed the largest redispatch_up_cost {max_up}",
                self.voll
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(invalid("gamma must be finite and >= 0"));
        }
        if !(self.xi >= 0.0) || !self.xi.is_finite() {
            return Err(invalid("xi must be finite and >= 0"));
        }
        if !(self.solver_tolerance > 0.0) {
            return Err(invalid("solver_tolerance must be > 0"));
        }
        if !(self.oracle_step > 0.0) || !self.oracle_step.is_finite() {
            return Err(invalid("oracle_step must be finite and > 0"));
        }
        if self.horizon_window == 0 {
            return Err(invalid("horizon_window must be >= 1"));
        }
        Ok(())
    }
}
