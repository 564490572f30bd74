//! Expanded linearized program and certified lower bounds from its dual.
//!
//! The conic primal is the linearization of the finite problem at a gradient g:
//!
//! ```text
//! min ⟨g, σ⟩  s.t.  Tr(Γ_k σ) ≤ γ_k + ε        (upper and finite lower rows, trace window)
//!                   Tr R + Tr S ≤ 2r + ε'
//!                   Tr_B σ − R ⪯ τ_A,   −S − Tr_B σ ⪯ −τ_A
//!                   σ, R, S ⪰ 0
//! ```
//!
//! and its dual, in the adapter's `max b·y` form, has variables (y_k, y_s, Y₁, Y₂):
//!
//! ```text
//! max −Σ y_k(γ_k + ε) − y_s(2r + ε') − Tr(τ_A Y₁) + Tr(τ_A Y₂)
//! s.t. g + Σ y_k Γ_k + ξ(Y₁) − ξ(Y₂) ⪰ 0,  y_s 1 − Y₁ ⪰ 0,  y_s 1 − Y₂ ⪰ 0,  Y₁, Y₂ ⪰ 0,  y, y_s ≥ 0
//! ```
//!
//! Y₁ and Y₂ enter through coordinates in the Hermitian basis of the A system.

use nalgebra::DVector;

use crate::dimred::FiniteProblem;
use crate::error::{Error, Result};
use crate::fock::embed_operator_a;
use crate::linalg::{c, C64, hermitian_basis, hermitian_from_coords, inner, max_eigenvalue, min_eigenvalue, psd_part, sym, CMat};

use super::conic::{BlockSparse, ConicConstraint, ConicProblem, ConicSolution, ConicSolverAdapter, ConicStatus};

/// Most negative eigenvalue accepted in the re-verified dual residual.
pub const CERTIFICATE_TOL: f64 = 1e-8;

/// Wider expansions tried, in order, when the program at the requested expansion does not reach
/// the conic tolerance. The dual feasible set does not depend on the expansion, so a dual point
/// from any of them is evaluated at the requested expansion.
pub const SOLVE_EXPANSIONS: [f64; 4] = [1e-9, 1e-8, 1e-7, 1e-6];

/// The requested expansion followed by the wider ones.
pub fn expansion_ladder(eps_rep: f64) -> impl Iterator<Item = f64> {
    std::iter::once(eps_rep).chain(SOLVE_EXPANSIONS.into_iter().filter(move |e| *e > eps_rep))
}

/// One scalar inequality Tr(Γ σ) ≤ γ of the linearized program.
#[derive(Debug, Clone)]
pub struct InequalityRow {
    pub label: String,
    pub operator: CMat,
    pub bound: f64,
}

/// The expanded linearized program, ready for a conic adapter.
#[derive(Debug, Clone)]
pub struct LinearizedProgram {
    pub conic: ConicProblem,
    pub rows: Vec<InequalityRow>,
    pub eps_rep: f64,
    pub eps_prime: f64,
    pub form: ReducedStateForm,
    num_a: usize,
}

#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub labels: Vec<String>,
    pub y: Vec<f64>,
    pub y_s: f64,
    pub y1: CMat,
    pub y2: CMat,
    /// λ_min of g + Σ y_k Γ_k + ξ(Y₁) − ξ(Y₂), recomputed from dense operators.
    pub residual_min_eig: f64,
    /// Dual objective after repair, including the residual shift.
    pub dual_objective: f64,
    /// Scalar expansion of the program actually solved; the objective always uses the requested one.
    pub solve_expansion: f64,
    pub conic_status: ConicStatus,
    pub conic_iterations: usize,
}

/// Scalar rows: each constraint's finite upper and lower bounds, then the trace window.
pub fn inequality_rows(problem: &FiniteProblem) -> Vec<InequalityRow> {
    let dim = problem.dim();
    let mut rows = Vec::with_capacity(problem.constraints.len() + 2);
    for con in &problem.constraints {
        if let Some(u) = con.upper {
            rows.push(InequalityRow { label: format!("{}<=", con.label), operator: con.operator.clone(), bound: u });
        }
        if let Some(l) = con.lower {
            rows.push(InequalityRow { label: format!("{}>=", con.label), operator: -con.operator.clone(), bound: -l });
        }
    }
    let (lo, hi) = problem.trace_window;
    rows.push(InequalityRow { label: "trace<=".into(), operator: CMat::identity(dim, dim), bound: hi });
    rows.push(InequalityRow { label: "trace>=".into(), operator: -CMat::identity(dim, dim), bound: -lo });
    rows
}

/// Rows implied by another kept row: Γ_j − Γ_k ⪰ 0 with γ_j ≤ γ_k makes row k redundant on PSD σ.
///
/// Dropping a row fixes its multiplier at zero, which stays feasible for the full dual.
pub fn drop_implied_rows(rows: Vec<InequalityRow>) -> Vec<InequalityRow> {
    let n = rows.len();
    let mut keep = vec![true; n];
    for k in 0..n {
        for j in 0..n {
            if j == k || !keep[j] || rows[j].bound > rows[k].bound {
                continue;
            }
            if dominates(&rows[j].operator, &rows[k].operator) {
                // mutual implication keeps the first of the pair
                if j > k && rows[j].bound == rows[k].bound && dominates(&rows[k].operator, &rows[j].operator) {
                    continue;
                }
                keep[k] = false;
                break;
            }
        }
    }
    rows.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect()
}

/// Γ_j − Γ_k ⪰ 0.
fn dominates(gj: &CMat, gk: &CMat) -> bool {
    let diff = gj - gk;
    let n = diff.nrows();
    let off_diagonal_zero = (0..n).all(|a| (0..n).all(|b| a == b || diff[(a, b)] == C64::new(0.0, 0.0)));
    if off_diagonal_zero {
        return (0..n).all(|a| diff[(a, a)].re >= 0.0);
    }
    let scale = gj.norm().max(gk.norm()).max(1.0);
    min_eigenvalue(&sym(&diff)) >= -1e-13 * scale
}

/// How the reduced-state condition enters the solved program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducedStateForm {
    /// ‖Tr_B σ − τ_A‖₁ ≤ 2r + ε' through the R, S splitting.
    TraceNormBall,
    /// Tr_B σ = τ_A, used when r = 0. Its free multiplier Y maps to Y₁ = (−Y)₊, Y₂ = Y₊, which is
    /// feasible for the ball form's dual once y_s covers both.
    Exact,
}

pub fn build_linearized_program(problem: &FiniteProblem, gradient: &CMat, eps_rep: f64, eps_prime: f64) -> Result<LinearizedProgram> {
    let dim = problem.dim();
    if gradient.nrows() != dim || gradient.ncols() != dim {
        return Err(Error::Dimension { context: "linearization gradient", expected: dim, got: gradient.nrows() });
    }
    if !(eps_rep >= 0.0 && eps_prime >= 0.0) {
        return Err(Error::InvalidParameter { name: "eps_rep", reason: "expansion parameters must be nonnegative".into() });
    }
    let form = if problem.trace_norm_radius == 0.0 { ReducedStateForm::Exact } else { ReducedStateForm::TraceNormBall };
    let d = problem.basis.num_signals();
    let s = problem.basis.dim_per_signal();
    let part_big = vec![s; d];
    let part_a = vec![d];
    let mut rows = drop_implied_rows(inequality_rows(problem));
    // Tr σ ≤ Tr τ_A + Tr R and −Tr σ ≤ −Tr τ_A + Tr S already follow from the reduced-state rows.
    let ball = match form {
        ReducedStateForm::TraceNormBall => 2.0 * problem.trace_norm_radius + eps_prime,
        ReducedStateForm::Exact => 0.0,
    };
    let slack = ball - eps_rep;
    let tr_tau = problem.tau_a.trace().re;
    let (lo, hi) = problem.trace_window;
    rows.retain(|r| match r.label.as_str() {
        "trace<=" => slack > hi - tr_tau,
        "trace>=" => slack > tr_tau - lo,
        _ => true,
    });
    let k = rows.len();
    let na = d * d;

    let mut constraints: Vec<ConicConstraint> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        constraints.push(ConicConstraint {
            psd: vec![(0, BlockSparse::from_dense(&-row.operator.clone(), &part_big))],
            lp: vec![(idx, -1.0)],
        });
        b.push(-(row.bound + eps_rep));
    }
    let embedded: Vec<(CMat, CMat, f64)> = (0..na)
        .map(|e| {
            let basis_e = hermitian_basis(d, e);
            let xi_e = embed_operator_a(&basis_e, &problem.gram)?;
            let tau_e = inner(&problem.tau_a, &basis_e);
            Ok((basis_e, xi_e, tau_e))
        })
        .collect::<Result<_>>()?;
    let zero_a = CMat::zeros(d, d);
    let conic = match form {
        ReducedStateForm::Exact => {
            for (_, xi_e, tau_e) in &embedded {
                constraints.push(ConicConstraint { psd: vec![(0, BlockSparse::from_dense(xi_e, &part_big))], lp: vec![] });
                b.push(*tau_e);
            }
            ConicProblem {
                blocks: vec![part_big],
                lp_dim: k,
                c_blocks: vec![sym(gradient)],
                c_lp: DVector::zeros(k),
                constraints,
                b: DVector::from_vec(b),
            }
        }
        ReducedStateForm::TraceNormBall => {
            let neg_id = BlockSparse::from_dense(&-CMat::identity(d, d), &part_a);
            constraints.push(ConicConstraint { psd: vec![(3, neg_id.clone()), (4, neg_id)], lp: vec![(k, -1.0)] });
            b.push(-(2.0 * problem.trace_norm_radius + eps_prime));
            let mut y2_rows = Vec::with_capacity(na);
            for (basis_e, xi_e, tau_e) in &embedded {
                let pos_e = BlockSparse::from_dense(basis_e, &part_a);
                let neg_e = BlockSparse::from_dense(&-basis_e.clone(), &part_a);
                constraints.push(ConicConstraint {
                    psd: vec![(0, BlockSparse::from_dense(&-xi_e.clone(), &part_big)), (1, neg_e.clone()), (3, pos_e.clone())],
                    lp: vec![],
                });
                b.push(-tau_e);
                y2_rows.push(ConicConstraint {
                    psd: vec![(0, BlockSparse::from_dense(xi_e, &part_big)), (2, neg_e), (4, pos_e)],
                    lp: vec![],
                });
            }
            constraints.extend(y2_rows);
            b.extend(embedded.iter().map(|(_, _, t)| *t));
            ConicProblem {
                blocks: vec![part_big, part_a.clone(), part_a.clone(), part_a.clone(), part_a],
                lp_dim: k + 1,
                c_blocks: vec![sym(gradient), zero_a.clone(), zero_a.clone(), zero_a.clone(), zero_a],
                c_lp: DVector::zeros(k + 1),
                constraints,
                b: DVector::from_vec(b),
            }
        }
    };
    Ok(LinearizedProgram { conic, rows, eps_rep, eps_prime, form, num_a: d })
}

impl LinearizedProgram {
    /// Split an adapter's y into (y_k, y_s, Y₁, Y₂).
    pub fn unpack(&self, y: &DVector<f64>) -> (Vec<f64>, f64, CMat, CMat) {
        let k = self.rows.len();
        let d = self.num_a;
        let na = d * d;
        let rows = y.as_slice()[..k].to_vec();
        match self.form {
            ReducedStateForm::TraceNormBall => {
                let y_s = y[k];
                let y1 = hermitian_from_coords(d, &y.as_slice()[k + 1..k + 1 + na]);
                let y2 = hermitian_from_coords(d, &y.as_slice()[k + 1 + na..k + 1 + 2 * na]);
                (rows, y_s, y1, y2)
            }
            ReducedStateForm::Exact => {
                let free = hermitian_from_coords(d, &y.as_slice()[k..k + na]);
                let y1 = psd_part(&-free.clone());
                let y2 = psd_part(&free);
                let y_s = max_eigenvalue(&y1).max(max_eigenvalue(&y2)).max(0.0);
                (rows, y_s, y1, y2)
            }
        }
    }

    /// The LMO point σ from a primal solution, symmetrized.
    pub fn primal_state(&self, sol: &ConicSolution) -> CMat {
        sym(&sol.x_blocks[0])
    }
}

/// Make a raw dual point feasible where that is free, then re-verify the remaining constraint
/// with dense operators and compute the certified objective.
///
/// Clipping y ≥ 0 and projecting Y₁, Y₂ onto the PSD cone are followed by raising y_s to cover
/// both; the residual's negative part, if any, is charged against the largest allowed trace.
pub fn repair_certificate(
    problem: &FiniteProblem,
    rows: &[InequalityRow],
    eps_rep: f64,
    eps_prime: f64,
    gradient: &CMat,
    raw: (Vec<f64>, f64, CMat, CMat),
) -> Result<(Vec<f64>, f64, CMat, CMat, f64, f64)> {
    let (y_raw, ys_raw, y1_raw, y2_raw) = raw;
    let y: Vec<f64> = y_raw.iter().map(|v| v.max(0.0)).collect();
    let y1 = psd_part(&sym(&y1_raw));
    let y2 = psd_part(&sym(&y2_raw));
    let y_s = ys_raw.max(max_eigenvalue(&y1)).max(max_eigenvalue(&y2)).max(0.0);
    if rows.len() != y.len() {
        return Err(Error::Dimension { context: "certificate multipliers", expected: rows.len(), got: y.len() });
    }
    let mut residual = sym(gradient);
    for (row, yk) in rows.iter().zip(&y) {
        if *yk != 0.0 {
            residual += &row.operator * c(*yk, 0.0);
        }
    }
    residual += embed_operator_a(&y1, &problem.gram)?;
    residual -= embed_operator_a(&y2, &problem.gram)?;
    let lmin = min_eigenvalue(&sym(&residual));
    if !lmin.is_finite() {
        return Err(Error::NonFinite { context: "certificate residual" });
    }
    let mut obj = 0.0;
    for (row, yk) in rows.iter().zip(&y) {
        obj -= yk * (row.bound + eps_rep);
    }
    obj -= y_s * (2.0 * problem.trace_norm_radius + eps_prime);
    obj -= inner(&problem.tau_a, &y1);
    obj += inner(&problem.tau_a, &y2);
    // ⟨residual, σ⟩ ≥ λ_min Tr σ and Tr σ ≤ upper trace bound + ε on the expanded set.
    let trace_cap = problem.trace_window.1 + eps_rep;
    obj += lmin.min(0.0) * trace_cap;
    Ok((y, y_s, y1, y2, lmin, obj))
}

/// Solve the dual at `gradient` and certify ⟨g, σ⟩ ≥ dual objective over the expanded set.
pub fn certify_linearization(
    problem: &FiniteProblem,
    gradient: &CMat,
    eps_rep: f64,
    eps_prime: f64,
    conic_tol: f64,
    adapter: &dyn ConicSolverAdapter,
) -> Result<DualCertificate> {
    let mut last = None;
    for eps_solve in expansion_ladder(eps_rep) {
        let program = build_linearized_program(problem, gradient, eps_solve, eps_prime.max(eps_solve))?;
        let sol = adapter.solve(&program.conic, conic_tol)?;
        if sol.status == ConicStatus::Optimal {
            return finish_certificate(problem, &program, gradient, eps_rep, eps_prime, eps_solve, sol);
        }
        log::debug!("dual program at expansion {eps_solve:e} stopped with {}", sol.status);
        if sol.status == ConicStatus::PrimalInfeasible {
            last = Some(sol);
            break;
        }
        last = Some(sol);
    }
    let sol = last.expect("ladder is never empty");
    Err(Error::Conic {
        status: sol.status.to_string(),
        detail: format!(
            "dual program not solved to tolerance {conic_tol} (primal residual {:.2e}, dual residual {:.2e})",
            sol.primal_residual, sol.dual_residual
        ),
    })
}

fn finish_certificate(
    problem: &FiniteProblem,
    program: &LinearizedProgram,
    gradient: &CMat,
    eps_rep: f64,
    eps_prime: f64,
    eps_solve: f64,
    sol: ConicSolution,
) -> Result<DualCertificate> {
    let raw = program.unpack(&sol.y);
    let (y, y_s, y1, y2, lmin, obj) = repair_certificate(problem, &program.rows, eps_rep, eps_prime, gradient, raw)?;
    if lmin < -CERTIFICATE_TOL {
        return Err(Error::CertificateRejected { residual: lmin });
    }
    Ok(DualCertificate {
        labels: program.rows.iter().map(|r| r.label.clone()).collect(),
        y,
        y_s,
        y1,
        y2,
        residual_min_eig: lmin,
        dual_objective: obj,
        solve_expansion: eps_solve,
        conic_status: sol.status,
        conic_iterations: sol.iterations,
    })
}

/// C_num = f(ρ) − ⟨∇f(ρ), ρ⟩ + dual objective, with the certificate that produced it.
pub fn certified_lower_bound(
    problem: &FiniteProblem,
    rho_opt: &CMat,
    f_opt: f64,
    gradient: &CMat,
    eps_rep: f64,
    eps_prime: f64,
    conic_tol: f64,
    adapter: &dyn ConicSolverAdapter,
) -> Result<(f64, DualCertificate)> {
    let cert = certify_linearization(problem, gradient, eps_rep, eps_prime, conic_tol, adapter)?;
    let c_num = f_opt - inner(gradient, rho_opt) + cert.dual_objective;
    Ok((c_num, cert))
}
