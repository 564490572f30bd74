//! Two-step key-rate lower bound: Frank-Wolfe on the finite problem, then a certified bound from
//! the dual of the expanded linearization.

pub mod certify;
pub mod conic;
pub mod frank_wolfe;
pub mod keyrate;
pub mod objective;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use certify::{certified_lower_bound, DualCertificate};
pub use conic::{ConicSolverAdapter, InteriorPoint};
pub use frank_wolfe::{frank_wolfe, FwIterate, FwResult};
pub use keyrate::{keyrate, SolveReport};
pub use objective::{objective_gradient, objective_value, Objective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_fw_iterations: usize,
    pub fw_gap_tol: f64,
    pub eig_floor: f64,
    /// Expansion of each scalar constraint in the certified step.
    pub eps_rep: f64,
    /// Expansion of the trace-norm ball in the certified step.
    pub eps_rep_prime: f64,
    pub conic_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_fw_iterations: 30, fw_gap_tol: 1e-6, eig_floor: 1e-12, eps_rep: 1e-10, eps_rep_prime: 1e-10, conic_tol: 1e-9 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("fw_gap_tol", self.fw_gap_tol),
            ("eig_floor", self.eig_floor),
            ("eps_rep", self.eps_rep),
            ("eps_rep_prime", self.eps_rep_prime),
            ("conic_tol", self.conic_tol),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter { name, reason: format!("must be positive and finite, got {v}") });
            }
        }
        if self.max_fw_iterations == 0 {
            return Err(Error::InvalidParameter { name: "max_fw_iterations", reason: "must be at least 1".into() });
        }
        Ok(())
    }
}
