//! Conic solver interface and the reference primal-dual interior-point adapter.
//!
//! Standard form over Hermitian PSD blocks X_b and a nonnegative orthant x:
//!
//! ```text
//! min  Σ_b ⟨C_b, X_b⟩ + c·x   s.t.  Σ_b ⟨A_kb, X_b⟩ + a_k·x = b_k,  X_b ⪰ 0,  x ≥ 0
//! max  b·y                    s.t.  C − Σ_k y_k A_k = Z ⪰ 0,  c − Σ_k y_k a_k = z ≥ 0
//! ```
//!
//! with ⟨A, X⟩ = Re Tr(A X).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{eigvalsh, inner, matmul3, sym, CMat, C64};

/// Hermitian matrix stored as dense sub-blocks of a partitioned square matrix.
#[derive(Debug, Clone, Default)]
pub struct BlockSparse {
    /// (row partition, column partition, block); a Hermitian matrix lists both (p, q) and (q, p).
    pub parts: Vec<(usize, usize, CMat)>,
}

impl BlockSparse {
    pub fn single(p: usize, q: usize, m: CMat) -> Self {
        if p == q {
            Self { parts: vec![(p, p, m)] }
        } else {
            let adj = m.adjoint();
            Self { parts: vec![(p, q, m), (q, p, adj)] }
        }
    }

    /// Split a dense Hermitian matrix by the given partition, dropping zero blocks.
    pub fn from_dense(m: &CMat, partition: &[usize]) -> Self {
        let offs = offsets(partition);
        let mut parts = Vec::new();
        for (p, &sp) in partition.iter().enumerate() {
            for (q, &sq) in partition.iter().enumerate() {
                let b = m.view((offs[p], offs[q]), (sp, sq));
                if b.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
                    parts.push((p, q, b.into_owned()));
                }
            }
        }
        Self { parts }
    }

    pub fn frobenius(&self) -> f64 {
        self.parts.iter().map(|(_, _, m)| m.norm_squared()).sum::<f64>().sqrt()
    }

    fn scale(&mut self, s: f64) {
        for (_, _, m) in &mut self.parts {
            *m *= C64::new(s, 0.0);
        }
    }

    pub fn to_dense(&self, partition: &[usize]) -> CMat {
        let offs = offsets(partition);
        let n = offs[partition.len()];
        let mut out = CMat::zeros(n, n);
        self.add_into(&mut out, &offs, 1.0);
        out
    }

    fn add_into(&self, target: &mut CMat, offs: &[usize], s: f64) {
        for (p, q, m) in &self.parts {
            let mut v = target.view_mut((offs[*p], offs[*q]), (m.nrows(), m.ncols()));
            v.zip_apply(m, |a, b| *a += b * s);
        }
    }

    /// Re Tr(A B) for this Hermitian A and arbitrary B.
    fn dot(&self, b: &CMat, offs: &[usize]) -> f64 {
        let mut acc = 0.0;
        for (p, q, m) in &self.parts {
            let v = b.view((offs[*p], offs[*q]), (m.nrows(), m.ncols()));
            acc += m.iter().zip(v.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>();
        }
        acc
    }
}

fn offsets(partition: &[usize]) -> Vec<usize> {
    let mut o = Vec::with_capacity(partition.len() + 1);
    o.push(0);
    for s in partition {
        o.push(o.last().unwrap() + s);
    }
    o
}

#[derive(Debug, Clone, Default)]
pub struct ConicConstraint {
    /// (PSD block index, coefficient matrix).
    pub psd: Vec<(usize, BlockSparse)>,
    /// (orthant index, coefficient).
    pub lp: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct ConicProblem {
    /// Partition of each PSD block into sub-blocks (used for sparse storage only).
    pub blocks: Vec<Vec<usize>>,
    pub lp_dim: usize,
    pub c_blocks: Vec<CMat>,
    pub c_lp: DVector<f64>,
    pub constraints: Vec<ConicConstraint>,
    pub b: DVector<f64>,
}

impl ConicProblem {
    pub fn block_dim(&self, b: usize) -> usize {
        self.blocks[b].iter().sum()
    }

    fn validate(&self) -> Result<()> {
        let m = self.constraints.len();
        if self.b.len() != m {
            return Err(Error::Dimension { context: "conic right-hand side", expected: m, got: self.b.len() });
        }
        if self.c_blocks.len() != self.blocks.len() || self.c_lp.len() != self.lp_dim {
            return Err(Error::Dimension { context: "conic objective", expected: self.blocks.len(), got: self.c_blocks.len() });
        }
        for (b, c) in self.c_blocks.iter().enumerate() {
            let n = self.block_dim(b);
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::Dimension { context: "conic objective block", expected: n, got: c.nrows() });
            }
        }
        for con in &self.constraints {
            for (b, a) in &con.psd {
                if *b >= self.blocks.len() {
                    return Err(Error::Dimension { context: "constraint block index", expected: self.blocks.len(), got: *b });
                }
                let part = &self.blocks[*b];
                for (p, q, mat) in &a.parts {
                    if *p >= part.len() || *q >= part.len() || mat.nrows() != part[*p] || mat.ncols() != part[*q] {
                        return Err(Error::Dimension { context: "constraint sub-block", expected: part.len(), got: (*p).max(*q) });
                    }
                }
            }
            if con.lp.iter().any(|(i, _)| *i >= self.lp_dim) {
                return Err(Error::Dimension { context: "constraint orthant index", expected: self.lp_dim, got: self.lp_dim + 1 });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
}

impl std::fmt::Display for ConicStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConicStatus::Optimal => "optimal",
            ConicStatus::PrimalInfeasible => "primal_infeasible",
            ConicStatus::DualInfeasible => "dual_infeasible",
            ConicStatus::MaxIterations => "max_iterations",
            ConicStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x_blocks: Vec<CMat>,
    pub x_lp: DVector<f64>,
    pub y: DVector<f64>,
    pub z_blocks: Vec<CMat>,
    pub z_lp: DVector<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

/// A solver for [`ConicProblem`]s.
pub trait ConicSolverAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &ConicProblem, tol: f64) -> Result<ConicSolution>;
}

/// Infeasible-start primal-dual path following with the HKM direction and Mehrotra correction.
#[derive(Debug, Clone)]
pub struct InteriorPoint {
    pub max_iterations: usize,
}

impl Default for InteriorPoint {
    fn default() -> Self {
        Self { max_iterations: 100 }
    }
}

struct Workspace<'a> {
    prob: &'a ConicProblem,
    offs: Vec<Vec<usize>>,
}

impl<'a> Workspace<'a> {
    /// A(X, x)
    fn apply(&self, xb: &[CMat], xl: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.prob.constraints.len(),
            self.prob.constraints.iter().map(|con| {
                let mut v = 0.0;
                for (b, a) in &con.psd {
                    v += a.dot(&xb[*b], &self.offs[*b]);
                }
                for (i, a) in &con.lp {
                    v += a * xl[*i];
                }
                v
            }),
        )
    }

    /// A*(y)
    fn adjoint(&self, y: &DVector<f64>) -> (Vec<CMat>, DVector<f64>) {
        let mut blocks: Vec<CMat> = (0..self.prob.blocks.len()).map(|b| CMat::zeros(self.prob.block_dim(b), self.prob.block_dim(b))).collect();
        let mut lp = DVector::zeros(self.prob.lp_dim);
        for (k, con) in self.prob.constraints.iter().enumerate() {
            if y[k] == 0.0 {
                continue;
            }
            for (b, a) in &con.psd {
                a.add_into(&mut blocks[*b], &self.offs[*b], y[k]);
            }
            for (i, a) in &con.lp {
                lp[*i] += a * y[k];
            }
        }
        (blocks, lp)
    }

    /// Row blocks of A·W for one constraint and block: (row-block p, s_p × n matrix).
    fn left_product(&self, a: &BlockSparse, b: usize, w: &CMat) -> Vec<(usize, CMat)> {
        let offs = &self.offs[b];
        let n = w.ncols();
        let mut out: Vec<(usize, CMat)> = Vec::new();
        for (p, q, mat) in &a.parts {
            let prod = mat * w.rows(offs[*q], mat.ncols());
            match out.iter_mut().find(|(r, _)| r == p) {
                Some((_, acc)) => *acc += prod,
                None => out.push((*p, prod)),
            }
        }
        debug_assert!(out.iter().all(|(_, m)| m.ncols() == n));
        out
    }

    /// M_kl = Σ_b Re Tr(A_kb X_b A_lb Z_b⁻¹) + Σ_i a_ki (x_i/z_i) a_li, from the row-block
    /// products A_k X and A_l Z⁻¹.
    fn schur(&self, xb: &[CMat], zinv: &[CMat], ratio: &DVector<f64>) -> DMatrix<f64> {
        let m = self.prob.constraints.len();
        let ax: Vec<Vec<(usize, Vec<(usize, CMat)>)>> = self
            .prob
            .constraints
            .iter()
            .map(|con| con.psd.iter().map(|(b, a)| (*b, self.left_product(a, *b, &xb[*b]))).collect())
            .collect();
        let az: Vec<Vec<(usize, Vec<(usize, CMat)>)>> = self
            .prob
            .constraints
            .iter()
            .map(|con| con.psd.iter().map(|(b, a)| (*b, self.left_product(a, *b, &zinv[*b]))).collect())
            .collect();
        let mut out = DMatrix::zeros(m, m);
        for l in 0..m {
            for k in 0..=l {
                let mut v = 0.0;
                for (bk, pk) in &ax[k] {
                    for (bl, ql) in &az[l] {
                        if bk != bl {
                            continue;
                        }
                        let offs = &self.offs[*bk];
                        for (p, prow) in pk {
                            for (r, qrow) in ql {
                                // Tr(P[p-rows, r-cols] · Q[r-rows, p-cols])
                                let pv = prow.columns(offs[*r], qrow.nrows());
                                let qv = qrow.columns(offs[*p], prow.nrows());
                                let mut acc = 0.0;
                                for a in 0..pv.nrows() {
                                    for c in 0..pv.ncols() {
                                        let x = pv[(a, c)];
                                        let y = qv[(c, a)];
                                        acc += x.re * y.re - x.im * y.im;
                                    }
                                }
                                v += acc;
                            }
                        }
                    }
                }
                let (con_k, con_l) = (&self.prob.constraints[k], &self.prob.constraints[l]);
                for (i, ak) in &con_k.lp {
                    for (j, al) in &con_l.lp {
                        if i == j {
                            v += ak * ratio[*i] * al;
                        }
                    }
                }
                out[(k, l)] = v;
                out[(l, k)] = v;
            }
        }
        out
    }
}

fn chol(m: &CMat) -> Option<Cholesky<C64, nalgebra::Dyn>> {
    Cholesky::new(m.clone())
}

/// Factorization of D⁻¹MD⁻¹ with D = diag(M)^½. Cholesky when it succeeds, otherwise pivoted LU,
/// which keeps the near-null directions a regularized Cholesky would discard.
struct SchurFactor {
    d_inv: DVector<f64>,
    fact: SchurKind,
}

enum SchurKind {
    Cholesky(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn new(mut m: DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let d_inv = DVector::from_fn(n, |k, _| {
            let v = m[(k, k)];
            if v > 0.0 && v.is_finite() { 1.0 / v.sqrt() } else { 1.0 }
        });
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] *= d_inv[i] * d_inv[j];
            }
        }
        if let Some(fact) = Cholesky::new(m.clone()) {
            return Some(Self { d_inv, fact: SchurKind::Cholesky(fact) });
        }
        let lu = m.clone().lu();
        if lu.is_invertible() && lu.u().diagonal().iter().all(|v| v.is_finite() && v.abs() > 1e-14) {
            log::trace!("ipm schur factor: lu");
            return Some(Self { d_inv, fact: SchurKind::Lu(lu) });
        }
        for reg in [1e-14, 1e-12, 1e-10, 1e-8] {
            let mut r = m.clone();
            for k in 0..n {
                r[(k, k)] += reg;
            }
            if let Some(fact) = Cholesky::new(r) {
                log::trace!("ipm schur regularized {reg:e}");
                return Some(Self { d_inv, fact: SchurKind::Cholesky(fact) });
            }
        }
        None
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let scaled = rhs.component_mul(&self.d_inv);
        let out = match &self.fact {
            SchurKind::Cholesky(f) => f.solve(&scaled),
            SchurKind::Lu(f) => f.solve(&scaled).unwrap_or_else(|| DVector::zeros(scaled.len())),
        };
        out.component_mul(&self.d_inv)
    }
}

/// Largest α ≤ cap with X + αΔX ⪰ 0, given the Cholesky factor of X.
fn max_step_psd(l: &CMat, dx: &CMat) -> f64 {
    let w = match l.solve_lower_triangular(dx) {
        Some(w) => w,
        None => return 0.0,
    };
    let t = match l.solve_lower_triangular(&w.adjoint()) {
        Some(t) => t.adjoint(),
        None => return 0.0,
    };
    let lmin = eigvalsh(&sym(&t)).iter().copied().fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(xi, d)| -xi / d)
        .fold(f64::INFINITY, f64::min)
}

fn herm_norm(blocks: &[CMat]) -> f64 {
    blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
}

impl ConicSolverAdapter for InteriorPoint {
    fn name(&self) -> &str {
        "interior-point"
    }

    fn solve(&self, problem: &ConicProblem, tol: f64) -> Result<ConicSolution> {
        problem.validate()?;
        // Row scaling: each constraint normalized to unit Frobenius norm.
        let mut scaled = problem.clone();
        let mut row_scale = DVector::from_element(problem.constraints.len(), 1.0);
        for (k, con) in scaled.constraints.iter_mut().enumerate() {
            let nrm = (con.psd.iter().map(|(_, a)| a.frobenius().powi(2)).sum::<f64>()
                + con.lp.iter().map(|(_, a)| a * a).sum::<f64>())
            .sqrt();
            if nrm > 0.0 {
                let s = 1.0 / nrm;
                for (_, a) in &mut con.psd {
                    a.scale(s);
                }
                for (_, a) in &mut con.lp {
                    *a *= s;
                }
                scaled.b[k] *= s;
                row_scale[k] = s;
            }
        }
        let mut sol = solve_scaled(&scaled, tol, self.max_iterations)?;
        // y for the original rows
        sol.y.component_mul_assign(&row_scale);
        let ws = Workspace { prob: problem, offs: problem.blocks.iter().map(|p| offsets(p)).collect() };
        let r_p = &problem.b - ws.apply(&sol.x_blocks, &sol.x_lp);
        sol.primal_residual = r_p.norm() / (1.0 + problem.b.norm());
        sol.dual_objective = problem.b.dot(&sol.y);
        Ok(sol)
    }
}

/// Iterations without a new best merit before giving up, once the best merit is below √tol.
const STALL_ITERATIONS: usize = 8;
const REFINEMENT_STEPS: usize = 3;
const FEASIBILITY_LAG: f64 = 10.0;
const LAG_SIGMA: f64 = 0.5;

fn solve_scaled(prob: &ConicProblem, tol: f64, max_iter: usize) -> Result<ConicSolution> {
    let ws = Workspace { prob, offs: prob.blocks.iter().map(|p| offsets(p)).collect() };
    let m = prob.constraints.len();
    let nb = prob.blocks.len();
    let total_dim: usize = (0..nb).map(|b| prob.block_dim(b)).sum::<usize>() + prob.lp_dim;

    // Starting point scaled to the data.
    let b_norm = prob.b.norm();
    let c_norm = (herm_norm(&prob.c_blocks).powi(2) + prob.c_lp.norm_squared()).sqrt();
    let mut xb = Vec::with_capacity(nb);
    let mut zb = Vec::with_capacity(nb);
    for b in 0..nb {
        let n = prob.block_dim(b) as f64;
        let mut ratio: f64 = 0.0;
        let mut a_max: f64 = 0.0;
        for (k, con) in prob.constraints.iter().enumerate() {
            for (bb, a) in &con.psd {
                if *bb == b {
                    let f = a.frobenius();
                    ratio = ratio.max((1.0 + prob.b[k].abs()) / (1.0 + f));
                    a_max = a_max.max(f);
                }
            }
        }
        let xi = 10f64.max(n.sqrt()).max(n * ratio);
        let eta = 10f64.max(n.sqrt()).max(a_max.max(prob.c_blocks[b].norm()));
        xb.push(CMat::identity(n as usize, n as usize) * C64::new(xi, 0.0));
        zb.push(CMat::identity(n as usize, n as usize) * C64::new(eta, 0.0));
    }
    let lp_start = 10f64.max(b_norm.sqrt()).max(c_norm.sqrt()).max(1.0);
    let mut xl = DVector::from_element(prob.lp_dim, lp_start);
    let mut zl = DVector::from_element(prob.lp_dim, lp_start);
    let mut y = DVector::zeros(m);

    let mut status = ConicStatus::MaxIterations;
    let mut iterations = 0;
    let mut best: Option<(f64, Vec<CMat>, DVector<f64>, DVector<f64>, Vec<CMat>, DVector<f64>)> = None;
    let mut stall = 0;
    let mut since_best = 0;
    let mut start: Option<(f64, f64)> = None;
    for it in 0..max_iter {
        iterations = it + 1;
        let ax = ws.apply(&xb, &xl);
        let r_p = &prob.b - &ax;
        let (aty, aty_lp) = ws.adjoint(&y);
        let r_d: Vec<CMat> = (0..nb).map(|b| &prob.c_blocks[b] - &aty[b] - &zb[b]).collect();
        let r_dl = &prob.c_lp - &aty_lp - &zl;
        let gap: f64 = (0..nb).map(|b| inner(&xb[b], &zb[b])).sum::<f64>() + xl.dot(&zl);
        let mu = gap / total_dim as f64;
        let pobj: f64 = (0..nb).map(|b| inner(&prob.c_blocks[b], &xb[b])).sum::<f64>() + prob.c_lp.dot(&xl);
        let dobj = prob.b.dot(&y);
        let pinf = r_p.norm() / (1.0 + b_norm);
        let dinf = (herm_norm(&r_d).powi(2) + r_dl.norm_squared()).sqrt() / (1.0 + c_norm);
        let relgap = gap.abs() / (1.0 + pobj.abs() + dobj.abs());
        let merit = pinf.max(dinf).max(relgap);
        let (pinf0, mu0) = *start.get_or_insert((pinf.max(1e-300), mu.max(1e-300)));
        log::trace!("ipm it={it} pobj={pobj:.10e} dobj={dobj:.10e} pinf={pinf:.2e} dinf={dinf:.2e} gap={relgap:.2e}");
        if best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((merit, xb.clone(), xl.clone(), y.clone(), zb.clone(), zl.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            let best_merit = best.as_ref().map_or(f64::INFINITY, |b| b.0);
            if since_best >= STALL_ITERATIONS && best_merit < tol.sqrt() {
                break;
            }
        }
        if merit <= tol {
            status = ConicStatus::Optimal;
            break;
        }
        let y_norm = y.norm();
        if dobj > 1e8 * (1.0 + c_norm) && dinf < 1e-6 && y_norm > 1e8 {
            status = ConicStatus::PrimalInfeasible;
            break;
        }
        if -pobj > 1e8 * (1.0 + b_norm) && pinf < 1e-6 {
            status = ConicStatus::DualInfeasible;
            break;
        }

        let mut zinv = Vec::with_capacity(nb);
        let mut lx = Vec::with_capacity(nb);
        let mut lz = Vec::with_capacity(nb);
        let mut broken = false;
        for b in 0..nb {
            match (chol(&xb[b]), chol(&zb[b])) {
                (Some(cx), Some(cz)) => {
                    lx.push(cx.l());
                    zinv.push(sym(&cz.inverse()));
                    lz.push(cz.l());
                }
                _ => {
                    broken = true;
                    break;
                }
            }
        }
        if broken {
            status = ConicStatus::NumericalFailure;
            break;
        }
        let ratio = xl.component_div(&zl);
        let schur = ws.schur(&xb, &zinv, &ratio);
        let fact = match SchurFactor::new(schur) {
            Some(f) => f,
            None => {
                status = ConicStatus::NumericalFailure;
                break;
            }
        };

        // Solve for a direction given the complementarity targets.
        let direction = |sigma_mu: f64, corr: Option<(&[CMat], &DVector<f64>, &[CMat], &DVector<f64>)>| {
            let mut g: Vec<CMat> = Vec::with_capacity(nb);
            for b in 0..nb {
                let mut gb = &zinv[b] * C64::new(sigma_mu, 0.0) - &xb[b] - matmul3(&xb[b], &r_d[b], &zinv[b]);
                if let Some((dx, _, dz, _)) = corr {
                    gb -= matmul3(&dx[b], &dz[b], &zinv[b]);
                }
                g.push(gb);
            }
            let mut gl = DVector::from_fn(prob.lp_dim, |i, _| sigma_mu / zl[i] - xl[i] - xl[i] * r_dl[i] / zl[i]);
            if let Some((_, dxl, _, dzl)) = corr {
                for i in 0..prob.lp_dim {
                    gl[i] -= dxl[i] * dzl[i] / zl[i];
                }
            }
            let rhs = &r_p - ws.apply(&g, &gl);
            let mut dy = fact.solve(&rhs);
            // Refine against the operator itself; the explicit Schur matrix loses digits near the end.
            for _ in 0..REFINEMENT_STEPS {
                let (ady, ady_lp) = ws.adjoint(&dy);
                let xaz: Vec<CMat> = (0..nb).map(|b| matmul3(&xb[b], &ady[b], &zinv[b])).collect();
                let lp = ady_lp.component_mul(&ratio);
                let err = &rhs - ws.apply(&xaz, &lp);
                if err.norm() <= 1e-15 * rhs.norm() {
                    break;
                }
                dy += fact.solve(&err);
            }
            let (ady, ady_lp) = ws.adjoint(&dy);
            let dz: Vec<CMat> = (0..nb).map(|b| &r_d[b] - &ady[b]).collect();
            let dzl = &r_dl - &ady_lp;
            let dx: Vec<CMat> = (0..nb).map(|b| sym(&(&g[b] + matmul3(&xb[b], &ady[b], &zinv[b])))).collect();
            let dxl = DVector::from_fn(prob.lp_dim, |i, _| gl[i] + ratio[i] * ady_lp[i]);
            (dx, dxl, dy, dz, dzl)
        };
        let steps = |dx: &[CMat], dxl: &DVector<f64>, dz: &[CMat], dzl: &DVector<f64>| {
            let mut ap = max_step_lp(&xl, dxl);
            let mut ad = max_step_lp(&zl, dzl);
            for b in 0..nb {
                ap = ap.min(max_step_psd(&lx[b], &dx[b]));
                ad = ad.min(max_step_psd(&lz[b], &dz[b]));
            }
            (ap, ad)
        };

        let (dx_a, dxl_a, _, dz_a, dzl_a) = direction(0.0, None);
        let (ap_a, ad_a) = steps(&dx_a, &dxl_a, &dz_a, &dzl_a);
        let (ap_a, ad_a) = (ap_a.min(1.0), ad_a.min(1.0));
        let mut gap_aff = 0.0;
        for b in 0..nb {
            let xn = &xb[b] + &dx_a[b] * C64::new(ap_a, 0.0);
            let zn = &zb[b] + &dz_a[b] * C64::new(ad_a, 0.0);
            gap_aff += inner(&xn, &zn);
        }
        gap_aff += (&xl + &dxl_a * ap_a).dot(&(&zl + &dzl_a * ad_a));
        let mut sigma = if gap > 0.0 { (gap_aff.max(0.0) / gap).powi(3).clamp(0.0, 1.0) } else { 0.0 };
        // Keep μ from outrunning primal feasibility; otherwise the residual strands on a face.
        if pinf > tol && pinf / pinf0 > FEASIBILITY_LAG * mu / mu0 {
            sigma = sigma.max(LAG_SIGMA);
        }
        let (dx, dxl, dy, dz, dzl) = direction(sigma * mu, Some((&dx_a, &dxl_a, &dz_a, &dzl_a)));
        let (ap, ad) = steps(&dx, &dxl, &dz, &dzl);
        let gamma = 0.9 + 0.09 * ap_a.min(ad_a);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if !(ap.is_finite() && ad.is_finite()) || (ap < 1e-10 && ad < 1e-10) {
            stall += 1;
            if stall > 3 {
                status = ConicStatus::NumericalFailure;
                break;
            }
        } else {
            stall = 0;
        }
        for b in 0..nb {
            xb[b] = sym(&(&xb[b] + &dx[b] * C64::new(ap, 0.0)));
            zb[b] = sym(&(&zb[b] + &dz[b] * C64::new(ad, 0.0)));
        }
        xl += &dxl * ap;
        zl += &dzl * ad;
        y += &dy * ad;
    }
    if status != ConicStatus::Optimal {
        if let Some((merit, bx, bxl, by, bz, bzl)) = best {
            xb = bx;
            xl = bxl;
            y = by;
            zb = bz;
            zl = bzl;
            if merit <= tol && matches!(status, ConicStatus::MaxIterations | ConicStatus::NumericalFailure) {
                status = ConicStatus::Optimal;
            }
        }
    }
    let ax = ws.apply(&xb, &xl);
    let r_p = &prob.b - &ax;
    let (aty, aty_lp) = ws.adjoint(&y);
    let r_d: Vec<CMat> = (0..nb).map(|b| &prob.c_blocks[b] - &aty[b] - &zb[b]).collect();
    let r_dl = &prob.c_lp - &aty_lp - &zl;
    let pobj: f64 = (0..nb).map(|b| inner(&prob.c_blocks[b], &xb[b])).sum::<f64>() + prob.c_lp.dot(&xl);
    Ok(ConicSolution {
        status,
        primal_objective: pobj,
        dual_objective: prob.b.dot(&y),
        primal_residual: r_p.norm() / (1.0 + b_norm),
        dual_residual: (herm_norm(&r_d).powi(2) + r_dl.norm_squared()).sqrt() / (1.0 + c_norm),
        x_blocks: xb,
        x_lp: xl,
        y,
        z_blocks: zb,
        z_lp: zl,
        iterations,
    })
}
