//! End-to-end solver properties on small instances.

use cvqkd_core::channel::{projected_simulated_state, ChannelModel};
use cvqkd_core::protocol::{DetectorModel, ProtocolSpec};
use cvqkd_core::search::optimize_scalar;
use cvqkd_core::solver::keyrate::{keyrate, prepare_problem, run_protocol, simulated_effective_expectations};
use cvqkd_core::solver::{InteriorPoint, Objective, SolverConfig};

fn spec(alpha: f64) -> ProtocolSpec {
    ProtocolSpec::qpsk(alpha, 0.0, 0.0, DetectorModel::ideal(), 0.95).unwrap()
}

#[test]
fn report_invariants_small_instance() {
    let adapter = InteriorPoint::default();
    let config = SolverConfig::default();
    for (dist, xi) in [(15.0, 0.01), (5.0, 0.0)] {
        let ch = ChannelModel::new(dist, xi);
        let (_, r) = run_protocol(&spec(0.7), &ch, 3, &config, &adapter).unwrap();
        assert_eq!(r.key_rate, r.c_num - r.ec_cost - r.delta_correction);
        // holds to rounding only; key_rate itself is evaluated left to right as above
        let u = r.key_rate_uncorrected();
        assert!((u - r.key_rate - r.delta_correction).abs() <= 2.0 * f64::EPSILON * u.abs().max(1.0));
        assert!(r.c_num <= r.step1_value + 1e-6, "{} > {}", r.c_num, r.step1_value);
        assert!(r.certificate.residual_min_eig >= -1e-8);
        if xi == 0.0 {
            assert_eq!(r.delta_correction, 0.0);
        }
        for w in r.diagnostics.fw_trace.windows(2) {
            assert!(w[1].value <= w[0].value, "FW values increased: {} -> {}", w[0].value, w[1].value);
        }
    }
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let adapter = InteriorPoint::default();
    let config = SolverConfig::default();
    let ch = ChannelModel::new(15.0, 0.01);
    let (_, a) = run_protocol(&spec(0.7), &ch, 3, &config, &adapter).unwrap();
    let (_, b) = run_protocol(&spec(0.7), &ch, 3, &config, &adapter).unwrap();
    assert_eq!(a.diagnostics.fw_trace.len(), b.diagnostics.fw_trace.len());
    for (x, y) in a.diagnostics.fw_trace.iter().zip(&b.diagnostics.fw_trace) {
        assert_eq!(x.value.to_bits(), y.value.to_bits());
        assert_eq!(x.gap.to_bits(), y.gap.to_bits());
        assert_eq!(x.step.to_bits(), y.step.to_bits());
    }
    assert_eq!(a.c_num.to_bits(), b.c_num.to_bits());
}

/// The certified bound never exceeds the objective at the projected simulated state.
#[test]
fn bound_below_projected_simulated_state() {
    let adapter = InteriorPoint::default();
    let config = SolverConfig::default();
    for (dist, xi) in [(10.0, 0.01), (20.0, 0.0)] {
        let s = spec(0.6);
        let ch = ChannelModel::new(dist, xi);
        let (problem, r) = run_protocol(&s, &ch, 10, &config, &adapter).unwrap();
        let rho = projected_simulated_state(&s, &ch, &problem.basis).unwrap();
        let report = problem.check(&rho).unwrap();
        assert!(report.max_violation() < 1e-8, "projected state violates constraints by {}", report.max_violation());
        let f = Objective::new(&problem.objective_regions, config.eig_floor).unwrap().value(&rho).unwrap();
        assert!(r.c_num <= f + 1e-9, "bound {} above feasible value {f}", r.c_num);
    }
}

/// Relaxing an expectation upper bound enlarges the feasible set, so the relaxed certified bound
/// cannot exceed the original minimum (approximated from above by its step-1 value).
#[test]
fn relaxed_constraints_do_not_raise_the_bound() {
    let adapter = InteriorPoint::default();
    let config = SolverConfig::default();
    let s = spec(0.7);
    let ch = ChannelModel::new(15.0, 0.01);
    let (n, nsq) = simulated_effective_expectations(&s, &ch).unwrap();
    let base = prepare_problem(&s, &ch, 3, &n, &nsq).unwrap();
    let reference = keyrate(&base, &ch, &s, &config, &adapter).unwrap();
    let bounded: Vec<usize> = (0..base.constraints.len()).filter(|&k| base.constraints[k].upper.is_some()).collect();
    assert!(!bounded.is_empty());
    for trial in 0..10 {
        let k = bounded[trial % bounded.len()];
        let mut relaxed = base.clone();
        let u = relaxed.constraints[k].upper.as_mut().unwrap();
        *u += (0.02 + 0.03 * trial as f64) * u.abs().max(0.01);
        let r = keyrate(&relaxed, &ch, &s, &config, &adapter).unwrap();
        assert!(r.c_num <= reference.step1_value + 1e-6, "trial {trial}: {} > {}", r.c_num, reference.step1_value);
    }
}

#[test]
fn pure_loss_large_subspace_converges() {
    let adapter = InteriorPoint::default();
    let config = SolverConfig::default();
    let (_, r) = run_protocol(&spec(0.6), &ChannelModel::new(10.0, 0.0), 20, &config, &adapter).unwrap();
    assert!(r.diagnostics.fw_trace.len() <= config.max_fw_iterations + 1);
    assert!(r.diagnostics.fw_gap < 1e-4, "gap {}", r.diagnostics.fw_gap);
}

#[test]
fn optimized_amplitude_gives_positive_rate_at_15km() {
    let adapter = InteriorPoint::default();
    let config = SolverConfig { max_fw_iterations: 10, ..SolverConfig::default() };
    let ch = ChannelModel::new(15.0, 0.01);
    let best = optimize_scalar(|a| run_protocol(&spec(a), &ch, 10, &config, &adapter).map(|(_, r)| r.key_rate), 0.5, 2.0, 0.05).unwrap();
    assert!((0.5..=2.0).contains(&best.x));
    assert!(best.value > 0.0, "best rate {} at alpha {}", best.value, best.x);
}
