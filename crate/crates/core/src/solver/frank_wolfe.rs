//! Step 1: Frank-Wolfe over the finite feasible set.

use serde::{Deserialize, Serialize};

use crate::dimred::FiniteProblem;
use crate::error::{Error, Result};
use crate::linalg::{c, inner, CMat};

use super::certify::{build_linearized_program, expansion_ladder};
use super::conic::{ConicSolverAdapter, ConicStatus};
use super::objective::Objective;
use super::SolverConfig;

/// Bracket width at which the golden-section line search stops.
pub const LINE_SEARCH_TOL: f64 = 1e-8;

/// Largest primal residual accepted from a linear-minimization solve that missed its tolerance.
const LMO_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwIterate {
    pub iteration: usize,
    pub value: f64,
    pub gap: f64,
    pub step: f64,
    pub conic_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct FwResult {
    pub rho: CMat,
    pub value: f64,
    pub gap: f64,
    pub trace: Vec<FwIterate>,
}

/// argmin ⟨g, σ⟩ over the (ε-expanded) feasible set.
pub fn linear_minimizer(
    problem: &FiniteProblem,
    g: &CMat,
    config: &SolverConfig,
    adapter: &dyn ConicSolverAdapter,
) -> Result<(CMat, usize)> {
    let mut last = (ConicStatus::MaxIterations, f64::INFINITY);
    for eps in expansion_ladder(config.eps_rep) {
        let program = build_linearized_program(problem, g, eps, config.eps_rep_prime.max(eps))?;
        let sol = adapter.solve(&program.conic, config.conic_tol)?;
        match sol.status {
            ConicStatus::PrimalInfeasible => {
                return Err(Error::Infeasible("the finite feasible set is empty".into()));
            }
            ConicStatus::Optimal => return Ok((program.primal_state(&sol), sol.iterations)),
            status if sol.primal_residual <= LMO_RESIDUAL_TOL => {
                log::debug!("linear minimization at expansion {eps:e} stopped with {status} at primal residual {:.2e}", sol.primal_residual);
                return Ok((program.primal_state(&sol), sol.iterations));
            }
            status => last = (status, sol.primal_residual),
        }
    }
    Err(Error::Conic {
        status: last.0.to_string(),
        detail: format!("linear minimization failed at every expansion (primal residual {:.2e})", last.1),
    })
}

/// Minimize a convex scalar function on [0, 1] by golden-section search.
pub fn golden_section(mut phi: impl FnMut(f64) -> Result<f64>, tol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = phi(x1)?;
    let mut f2 = phi(x2)?;
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = phi(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = phi(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

pub fn frank_wolfe(
    problem: &FiniteProblem,
    objective: &Objective,
    config: &SolverConfig,
    adapter: &dyn ConicSolverAdapter,
) -> Result<FwResult> {
    config.validate()?;
    let dim = problem.dim();
    // Feasibility presolve: zero objective lands near the analytic centre.
    let (mut rho, _) = linear_minimizer(problem, &CMat::zeros(dim, dim), config, adapter)?;
    let mut value = objective.value(&rho)?;
    let mut trace = Vec::new();
    let mut gap = f64::INFINITY;
    for iteration in 0..config.max_fw_iterations {
        let g = objective.gradient(&rho)?;
        let (sigma, conic_iterations) = linear_minimizer(problem, &g, config, adapter)?;
        let dir = &sigma - &rho;
        gap = -inner(&g, &dir);
        if gap < config.fw_gap_tol * value.abs().max(1.0) {
            trace.push(FwIterate { iteration, value, gap, step: 0.0, conic_iterations });
            break;
        }
        let (mut t, mut ft) = golden_section(|t| objective.value_on_segment(&rho, &dir, t), LINE_SEARCH_TOL)?;
        let f_end = objective.value_on_segment(&rho, &dir, 1.0)?;
        if f_end < ft {
            t = 1.0;
            ft = f_end;
        }
        if !(ft <= value) {
            trace.push(FwIterate { iteration, value, gap, step: 0.0, conic_iterations });
            break;
        }
        rho = crate::linalg::sym(&(&rho + &dir * c(t, 0.0)));
        value = ft;
        log::info!("fw it={iteration} f={value:.10} gap={gap:.3e} step={t:.4}");
        trace.push(FwIterate { iteration, value, gap, step: t, conic_iterations });
    }
    Ok(FwResult { rho, value, gap, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_minimum() {
        let (t, f) = golden_section(|t| Ok((t - 0.3).powi(2) + 1.0), 1e-8).unwrap();
        assert!((t - 0.3).abs() < 1e-8);
        assert!((f - 1.0).abs() < 1e-15);
        let (t, _) = golden_section(|t| Ok(-t), 1e-8).unwrap();
        assert!(t > 1.0 - 1e-8);
    }
}
