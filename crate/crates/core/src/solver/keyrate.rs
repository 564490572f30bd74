//! Key-rate orchestration: step 1, step 2, EC cost and correction.

use serde::Serialize;

use crate::channel::{ec_cost, effective_expectations, forward_noisy_expectations, joint_distribution, simulate_expectations, ChannelModel};
use crate::dimred::{assemble_finite_problem, weight_bound_dmcv, ConstraintReport, FiniteProblem};
use crate::error::Result;
use crate::fock::DisplacedBasis;
use crate::linalg::CMat;
use crate::protocol::{build_operator_set, ProtocolSpec};

use super::certify::{certified_lower_bound, DualCertificate};
use super::conic::ConicSolverAdapter;
use super::frank_wolfe::{frank_wolfe, FwIterate};
use super::objective::Objective;
use super::SolverConfig;

/// Allowed excess of the certified bound over the step-1 value before it is flagged.
pub const WEAK_DUALITY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub fw_trace: Vec<FwIterate>,
    pub fw_gap: f64,
    #[serde(skip)]
    pub constraints_at_step1: Option<ConstraintReport>,
    pub max_constraint_violation: f64,
    pub certificate_residual: f64,
    pub certificate_conic_iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub step1_value: f64,
    pub step1_state: CMat,
    pub gradient: CMat,
    pub c_num: f64,
    pub certificate: DualCertificate,
    pub delta_correction: f64,
    /// Leaked bits per round: sift probability times the per-sifted-signal cost.
    pub ec_cost: f64,
    pub sift_prob: f64,
    pub weight: f64,
    pub key_rate: f64,
    pub diagnostics: Diagnostics,
}

impl SolveReport {
    pub fn key_rate_uncorrected(&self) -> f64 {
        self.c_num - self.ec_cost
    }
}

/// Both steps on a prepared finite problem, then subtract EC cost and Δ(W).
pub fn keyrate(
    problem: &FiniteProblem,
    channel: &ChannelModel,
    spec: &ProtocolSpec,
    config: &SolverConfig,
    adapter: &dyn ConicSolverAdapter,
) -> Result<SolveReport> {
    config.validate()?;
    let objective = Objective::new(&problem.objective_regions, config.eig_floor)?;
    let fw = frank_wolfe(problem, &objective, config, adapter)?;
    let gradient = objective.gradient(&fw.rho)?;
    let (c_num, certificate) = certified_lower_bound(
        problem,
        &fw.rho,
        fw.value,
        &gradient,
        config.eps_rep,
        config.eps_rep_prime,
        config.conic_tol,
        adapter,
    )?;

    let joint = joint_distribution(spec, channel)?;
    let ec = joint.sift_prob * ec_cost(&joint.kept(), spec.beta_ec);
    let delta = problem.delta_correction;
    let key_rate = c_num - ec - delta;

    let report = problem.check(&fw.rho)?;
    let mut warnings = Vec::new();
    if c_num > fw.value + WEAK_DUALITY_SLACK {
        warnings.push(format!("certified bound {c_num} exceeds the step-1 value {} by more than {WEAK_DUALITY_SLACK}", fw.value));
    }
    if delta > 0.1 * c_num.abs() {
        let hint = if report.max_violation() > 1e-6 {
            "step-1 constraint violations are significant; a smaller N may help"
        } else {
            "consider a larger N"
        };
        warnings.push(format!("correction {delta:.3e} exceeds 10% of the certified bound {c_num:.3e}; {hint}"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(SolveReport {
        step1_value: fw.value,
        step1_state: fw.rho,
        gradient,
        c_num,
        delta_correction: delta,
        ec_cost: ec,
        sift_prob: joint.sift_prob,
        weight: problem.weight.w,
        key_rate,
        diagnostics: Diagnostics {
            fw_trace: fw.trace,
            fw_gap: fw.gap,
            max_constraint_violation: report.max_violation(),
            constraints_at_step1: Some(report),
            certificate_residual: certificate.residual_min_eig,
            certificate_conic_iterations: certificate.conic_iterations,
            warnings,
        },
        certificate,
    })
}

/// Per-signal ⟨n̂⟩, ⟨n̂²⟩ referred to an ideal detector, from the simulated channel.
///
/// With a trusted detector the simulated values are pushed through the noisy-detector relations and
/// inverted again, the same path measured data takes.
pub fn simulated_effective_expectations(spec: &ProtocolSpec, channel: &ChannelModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, nsq) = simulate_expectations(channel, spec.num_signals());
    if spec.detector.is_ideal() {
        return Ok((n, nsq));
    }
    let mut out_n = Vec::with_capacity(n.len());
    let mut out_nsq = Vec::with_capacity(n.len());
    for (a, b) in n.iter().zip(&nsq) {
        let (noisy_n, noisy_nsq) = forward_noisy_expectations(*a, *b, &spec.detector);
        let (e_n, e_nsq) = effective_expectations(noisy_n, noisy_nsq, &spec.detector)?;
        out_n.push(e_n);
        out_nsq.push(e_nsq);
    }
    Ok((out_n, out_nsq))
}

/// Finite problem for a protocol, channel and subspace size, with the given expectations.
pub fn prepare_problem(
    spec: &ProtocolSpec,
    channel: &ChannelModel,
    subspace_n: usize,
    exp_n: &[f64],
    exp_nsq: &[f64],
) -> Result<FiniteProblem> {
    spec.validate()?;
    channel.validate()?;
    let basis = DisplacedBasis::new(channel.received_amplitudes(&spec.alpha), subspace_n)?;
    let ops = build_operator_set(spec, &basis)?;
    let weight = weight_bound_dmcv(exp_n, exp_nsq, &spec.p, subspace_n)?;
    assemble_finite_problem(&ops, exp_n, exp_nsq, spec, &basis, &weight)
}

/// End-to-end run on simulated expectations.
pub fn run_protocol(
    spec: &ProtocolSpec,
    channel: &ChannelModel,
    subspace_n: usize,
    config: &SolverConfig,
    adapter: &dyn ConicSolverAdapter,
) -> Result<(FiniteProblem, SolveReport)> {
    let (exp_n, exp_nsq) = simulated_effective_expectations(spec, channel)?;
    let problem = prepare_problem(spec, channel, subspace_n, &exp_n, &exp_nsq)?;
    let report = keyrate(&problem, channel, spec, config, adapter)?;
    Ok((problem, report))
}
