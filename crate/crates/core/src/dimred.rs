//! Finite-dimensional reduction: weight outside the subspace, the correction term, and the
//! expanded feasible set.

use crate::error::{Error, Result};
use crate::fock::{build_gram_relation, partial_trace_displaced, DisplacedBasis, GramRelation};
use crate::linalg::{inner, trace_norm, trace_re, BlockDiag, CMat};
use crate::protocol::{OperatorSet, ProtocolSpec, KEY_SYMBOLS};

/// Binary entropy in bits with h(0) = h(1) = 0.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBound {
    pub w: f64,
    pub per_signal: Vec<f64>,
}

/// W_i = (⟨n̂²⟩ − ⟨n̂⟩)/(N(N+1)), W = Σ p_i W_i.
pub fn weight_bound_dmcv(exp_n: &[f64], exp_nsq: &[f64], p: &[f64], n: usize) -> Result<WeightBound> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "N", reason: "subspace parameter must be at least 1".into() });
    }
    if exp_n.len() != p.len() || exp_nsq.len() != p.len() {
        return Err(Error::Dimension { context: "weight bound inputs", expected: p.len(), got: exp_n.len().max(exp_nsq.len()) });
    }
    let denom = (n * (n + 1)) as f64;
    let mut per_signal = Vec::with_capacity(p.len());
    let mut w = 0.0;
    for i in 0..p.len() {
        if !(exp_n[i] >= 0.0) {
            return Err(Error::InconsistentExpectations { signal: i, reason: format!("<n> = {} is negative", exp_n[i]) });
        }
        let wi = (exp_nsq[i] - exp_n[i]) / denom;
        if !(wi >= 0.0) {
            return Err(Error::InconsistentExpectations {
                signal: i,
                reason: format!("<n^2> = {} is below <n> = {}", exp_nsq[i], exp_n[i]),
            });
        }
        per_signal.push(wi);
        w += p[i] * wi;
    }
    if w > 1.0 {
        return Err(Error::InconsistentExpectations { signal: 0, reason: format!("weight {w} exceeds 1") });
    }
    Ok(WeightBound { w, per_signal })
}

/// √(2W − W²), the trace-distance radius between a state and its normalized projection.
pub fn trace_norm_radius(w: f64) -> f64 {
    (2.0 * w - w * w).max(0.0).sqrt()
}

/// Δ(W) = r·log₂|Z| + (1+r)·h(r/(1+r)) with r = √(2W − W²); zero for block-diagonal POVMs.
pub fn correction_term(w: f64, num_key_symbols: usize, block_diagonal: bool) -> f64 {
    if block_diagonal || w <= 0.0 {
        return 0.0;
    }
    let r = trace_norm_radius(w.min(1.0));
    r * (num_key_symbols as f64).log2() + (1.0 + r) * binary_entropy(r / (1.0 + r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuityVariant {
    General,
    CqTwoSided,
    CqOneSided,
}

/// Uniform continuity bounds on conditional entropy for subnormalized states.
///
/// ε bounds the trace distance, δ the trace difference, `a` the smaller trace.
pub fn continuity_bounds(epsilon: f64, delta: f64, a: f64, dim_a: usize, variant: ContinuityVariant) -> f64 {
    if epsilon <= 0.0 {
        return 0.0;
    }
    let log_a = (dim_a as f64).log2();
    let e1 = epsilon + delta;
    let e2 = epsilon - delta;
    let denom = a + epsilon;
    let hmax = binary_entropy(e1 / denom).max(binary_entropy(e2 / denom));
    match variant {
        ContinuityVariant::General => 2.0 * epsilon * log_a + denom * hmax,
        ContinuityVariant::CqTwoSided => e1 * log_a + denom * hmax,
        ContinuityVariant::CqOneSided => e2 * log_a + denom * binary_entropy(e2 / denom),
    }
}

/// ε·log₂|A| + (1+ε)·h(ε/(1+ε)).
pub fn continuity_corollary(epsilon: f64, dim_a: usize) -> f64 {
    if epsilon <= 0.0 {
        return 0.0;
    }
    epsilon * (dim_a as f64).log2() + (1.0 + epsilon) * binary_entropy(epsilon / (1.0 + epsilon))
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub label: String,
    pub operator: CMat,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FiniteProblem {
    pub basis: DisplacedBasis,
    pub gram: GramRelation,
    pub objective_regions: Vec<BlockDiag>,
    pub constraints: Vec<LinearConstraint>,
    pub tau_a: CMat,
    pub trace_window: (f64, f64),
    pub trace_norm_radius: f64,
    pub weight: WeightBound,
    pub delta_correction: f64,
}

/// How far a candidate state is from satisfying every constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// Per constraint: (value, violation), violation 0 when satisfied.
    pub values: Vec<(f64, f64)>,
    pub trace: f64,
    pub trace_violation: f64,
    pub reduced_distance: f64,
    pub reduced_violation: f64,
    pub min_eigenvalue: f64,
}

impl ConstraintReport {
    pub fn max_violation(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.1)
            .fold(self.trace_violation.max(self.reduced_violation), f64::max)
            .max((-self.min_eigenvalue).max(0.0))
    }
}

impl FiniteProblem {
    pub fn dim(&self) -> usize {
        self.basis.total_dim()
    }

    /// Scalar constraints plus the trace window and the reduced-state ball.
    pub fn constraint_count(&self) -> usize {
        self.constraints.len() + 2
    }

    pub fn check(&self, rho: &CMat) -> Result<ConstraintReport> {
        let values = self
            .constraints
            .iter()
            .map(|c| {
                let v = inner(&c.operator, rho);
                let over = c.upper.map_or(0.0, |u| (v - u).max(0.0));
                let under = c.lower.map_or(0.0, |l| (l - v).max(0.0));
                (v, over.max(under))
            })
            .collect();
        let trace = trace_re(rho);
        let trace_violation = (trace - self.trace_window.1).max(self.trace_window.0 - trace).max(0.0);
        let rho_a = partial_trace_displaced(rho, &self.gram)?;
        // Ball of radius r in trace norm: Tr_B ρ = τ + R − S with Tr R + Tr S ≤ 2r.
        let reduced_distance = trace_norm(&(&rho_a - &self.tau_a));
        let reduced_violation = (reduced_distance - 2.0 * self.trace_norm_radius).max(0.0);
        let min_eigenvalue = crate::linalg::min_eigenvalue(rho);
        Ok(ConstraintReport { values, trace, trace_violation, reduced_distance, reduced_violation, min_eigenvalue })
    }
}

/// Expanded finite problem: upper bounds on the per-signal moments, trace in [1 − W, 1], and the
/// reduced state within trace-norm radius √(2W − W²) of τ_A.
pub fn assemble_finite_problem(
    ops: &OperatorSet,
    exp_n: &[f64],
    exp_nsq: &[f64],
    spec: &ProtocolSpec,
    basis: &DisplacedBasis,
    weight: &WeightBound,
) -> Result<FiniteProblem> {
    let d = basis.num_signals();
    let s = basis.dim_per_signal();
    if spec.num_signals() != d || ops.n_obs.len() != d || exp_n.len() != d || exp_nsq.len() != d {
        return Err(Error::Dimension { context: "finite problem signals", expected: d, got: exp_n.len() });
    }
    if ops.regions.len() != KEY_SYMBOLS || ops.regions.iter().any(|r| r.len() != d || r.iter().any(|b| b.nrows() != s)) {
        return Err(Error::Dimension { context: "region operators", expected: s, got: ops.regions.len() });
    }
    let check = weight_bound_dmcv(exp_n, exp_nsq, &spec.p, basis.n_max())?;
    if (check.w - weight.w).abs() > 1e-15 * (1.0 + weight.w) {
        return Err(Error::InvalidParameter {
            name: "weight",
            reason: format!("W = {} does not match the expectations (expected {})", weight.w, check.w),
        });
    }
    let gram = build_gram_relation(basis)?;
    let objective_regions = ops.regions.iter().map(|r| BlockDiag::new(r.clone())).collect();
    let mut constraints = Vec::with_capacity(2 * d);
    for i in 0..d {
        let scale = 1.0 / spec.p[i];
        constraints.push(LinearConstraint {
            label: format!("n[{i}]"),
            operator: &ops.n_obs[i] * crate::linalg::c(scale, 0.0),
            lower: None,
            upper: Some(exp_n[i]),
        });
        constraints.push(LinearConstraint {
            label: format!("n2[{i}]"),
            operator: &ops.nsq_obs[i] * crate::linalg::c(scale, 0.0),
            lower: None,
            upper: Some(exp_nsq[i]),
        });
    }
    let w = weight.w;
    Ok(FiniteProblem {
        basis: basis.clone(),
        gram,
        objective_regions,
        constraints,
        tau_a: ops.tau_a.clone(),
        trace_window: (1.0 - w, 1.0),
        trace_norm_radius: trace_norm_radius(w),
        weight: weight.clone(),
        delta_correction: correction_term(w, KEY_SYMBOLS, false),
    })
}
