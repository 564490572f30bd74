//! Simulated honest channel: lossy Gaussian channel with excess noise, the resulting
//! expectations and key-map statistics, and estimation from heterodyne samples.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{coherent_amplitude, coherent_overlap, DisplacedBasis};
use crate::linalg::{hermitize, CMat, C64};
use crate::protocol::{region_angles, DetectorModel, ProtocolSpec, KEY_SYMBOLS};
use crate::quadrature::{hermite_rule, integrate_sector, Sector};

pub const DEFAULT_ATTENUATION_DB_PER_KM: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub distance_km: f64,
    pub attenuation_db_per_km: f64,
    pub excess_noise: f64,
}

impl ChannelModel {
    pub fn new(distance_km: f64, excess_noise: f64) -> Self {
        Self { distance_km, attenuation_db_per_km: DEFAULT_ATTENUATION_DB_PER_KM, excess_noise }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_km >= 0.0 && self.distance_km.is_finite()) {
            return Err(Error::InvalidParameter { name: "distance_km", reason: format!("{}", self.distance_km) });
        }
        if !(self.attenuation_db_per_km >= 0.0 && self.attenuation_db_per_km.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "attenuation_db_per_km",
                reason: format!("{}", self.attenuation_db_per_km),
            });
        }
        if !(self.excess_noise >= 0.0 && self.excess_noise.is_finite()) {
            return Err(Error::InvalidParameter { name: "xi", reason: format!("{}", self.excess_noise) });
        }
        Ok(())
    }

    /// Transmittance 10^{-k d / 10}.
    pub fn eta(&self) -> f64 {
        10f64.powf(-self.attenuation_db_per_km * self.distance_km / 10.0)
    }

    /// Excess noise referred to the channel output, δ = η ξ.
    pub fn delta(&self) -> f64 {
        self.eta() * self.excess_noise
    }

    /// Bob's displacement for each of Alice's amplitudes, β_i = √η α_i.
    pub fn received_amplitudes(&self, alpha: &[C64]) -> Vec<C64> {
        let t = self.eta().sqrt();
        alpha.iter().map(|a| a * t).collect()
    }
}

/// ⟨n̂⟩ = δ/2 and ⟨n̂²⟩ = δ(1+δ)/2 for every signal.
pub fn simulate_expectations(channel: &ChannelModel, num_signals: usize) -> (Vec<f64>, Vec<f64>) {
    let delta = channel.delta();
    (vec![delta / 2.0; num_signals], vec![delta * (1.0 + delta) / 2.0; num_signals])
}

/// Expectations of the noisy observables given ideal ones.
pub fn forward_noisy_expectations(exp_n: f64, exp_nsq: f64, detector: &DetectorModel) -> (f64, f64) {
    let (eta, nu) = (detector.eta_d, detector.nu_el);
    let n = eta * exp_n + nu;
    let nsq = eta * eta * exp_nsq + eta * (4.0 * nu + 1.0 - eta) * exp_n + 2.0 * nu * nu + nu;
    (n, nsq)
}

/// Invert the trusted-noise relations to recover ideal-detector expectations.
pub fn effective_expectations(noisy_n: f64, noisy_nsq: f64, detector: &DetectorModel) -> Result<(f64, f64)> {
    detector.validate()?;
    if detector.is_ideal() {
        return Ok((noisy_n, noisy_nsq));
    }
    let (eta, nu) = (detector.eta_d, detector.nu_el);
    let n = (noisy_n - nu) / eta;
    let nsq = (noisy_nsq - 2.0 * nu * nu - nu - (4.0 * nu + 1.0 - eta) * (noisy_n - nu)) / (eta * eta);
    if n < 0.0 || nsq < 0.0 {
        return Err(Error::InconsistentExpectations {
            signal: 0,
            reason: format!("effective moments ({n}, {nsq}) are negative; detector characterization is inconsistent"),
        });
    }
    Ok((n, nsq))
}

/// Conditional key-map statistics p(j|i), j ∈ {0, 1, 2, 3, ⊥}.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub p: Vec<f64>,
    pub conditional: Vec<[f64; KEY_SYMBOLS + 1]>,
    pub sift_prob: f64,
}

impl JointDistribution {
    /// p(i) p(j|i) over kept outcomes, renormalized.
    pub fn kept(&self) -> Vec<[f64; KEY_SYMBOLS]> {
        self.conditional
            .iter()
            .zip(&self.p)
            .map(|(row, &pi)| {
                let mut out = [0.0; KEY_SYMBOLS];
                for j in 0..KEY_SYMBOLS {
                    out[j] = pi * row[j] / self.sift_prob;
                }
                out
            })
            .collect()
    }
}

const PROB_QUAD_TOL: f64 = 1e-13;

pub fn joint_distribution(spec: &ProtocolSpec, channel: &ChannelModel) -> Result<JointDistribution> {
    spec.validate()?;
    channel.validate()?;
    let det = spec.detector;
    let var = 1.0 + det.eta_d * channel.delta() / 2.0 + det.nu_el;
    let beta = channel.received_amplitudes(&spec.alpha);
    let mut conditional = Vec::with_capacity(beta.len());
    for b in &beta {
        let centre = b * det.eta_d.sqrt();
        let r_max = centre.norm() + 12.0 + 6.0 * var.sqrt();
        let density = |z: C64, w: f64, acc: &mut [f64]| acc[0] += w * (-(z - centre).norm_sqr() / var).exp() / (PI * var);
        let integrate = |sector: Sector| -> Result<f64> {
            let r = integrate_sector(density, sector, 1, PROB_QUAD_TOL)?;
            if r.error > 1e-11 {
                return Err(Error::Quadrature { context: "joint distribution", estimate: r.error });
            }
            Ok(r.value[0])
        };
        let mut row = [0.0; KEY_SYMBOLS + 1];
        for (j, slot) in row.iter_mut().take(KEY_SYMBOLS).enumerate() {
            let (lo, hi) = region_angles(j, spec.delta_p);
            *slot = integrate(Sector { r_lo: spec.delta_a, r_hi: r_max, theta_lo: lo, theta_hi: hi })?;
        }
        let mut discard = integrate(Sector { r_lo: 0.0, r_hi: spec.delta_a, theta_lo: 0.0, theta_hi: 2.0 * PI })?;
        if spec.delta_p > 0.0 {
            for z in 0..KEY_SYMBOLS {
                let edge = (2 * z + 1) as f64 * FRAC_PI_4;
                discard += integrate(Sector {
                    r_lo: spec.delta_a,
                    r_hi: r_max,
                    theta_lo: edge - spec.delta_p,
                    theta_hi: edge + spec.delta_p,
                })?;
            }
        }
        row[KEY_SYMBOLS] = discard;
        conditional.push(row);
    }
    let sift_prob = conditional
        .iter()
        .zip(&spec.p)
        .map(|(row, pi)| pi * row[..KEY_SYMBOLS].iter().sum::<f64>())
        .sum();
    Ok(JointDistribution { p: spec.p.clone(), conditional, sift_prob })
}

/// Shannon entropy in bits with 0 log 0 = 0.
pub fn entropy_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    probs.into_iter().filter(|&x| x > 0.0).map(|x| -x * x.log2()).sum()
}

/// Reconciliation leakage per sifted signal: log₂|Z| − β_EC·I(A:B) on the kept distribution.
pub fn ec_cost(q: &[[f64; KEY_SYMBOLS]], beta_ec: f64) -> f64 {
    let qa = q.iter().map(|row| row.iter().sum::<f64>());
    let qb = (0..KEY_SYMBOLS).map(|j| q.iter().map(|row| row[j]).sum::<f64>());
    let qab = q.iter().flat_map(|row| row.iter().copied());
    let mutual = entropy_bits(qa) + entropy_bits(qb) - entropy_bits(qab);
    (KEY_SYMBOLS as f64).log2() - beta_ec * mutual
}

/// Sample means of |ζ−β|² − 1 and |ζ−β|⁴ − 3|ζ−β|² + 1.
pub fn expectations_from_samples(samples: &[C64], beta: C64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("heterodyne samples"));
    }
    let (mut sn, mut snsq) = (0.0, 0.0);
    for z in samples {
        let r2 = (z - beta).norm_sqr();
        sn += r2 - 1.0;
        snsq += r2 * r2 - 3.0 * r2 + 1.0;
    }
    let k = samples.len() as f64;
    Ok((sn / k, snsq / k))
}

/// Read heterodyne outcomes from a headerless `re,im` CSV file; `#` starts a comment line.
pub fn read_samples_csv(path: &Path) -> Result<Vec<C64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { line: k + 1, reason: e.to_string() })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::Parse { line, reason: format!("expected 2 fields, found {}", rec.len()) });
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse { line, reason: format!("{s:?}: {e}") });
        let (re, im) = (parse(&rec[0])?, parse(&rec[1])?);
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::Parse { line, reason: "non-finite sample".into() });
        }
        out.push(C64::new(re, im));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("sample file"));
    }
    Ok(out)
}

const SIM_HERMITE_ORDER: usize = 60;

/// The joint state produced by sending one half of the source-replacement state through the
/// simulated channel (loss followed by Gaussian additive noise with n̄ = δ/2), projected onto the
/// displaced subspace.
pub fn projected_simulated_state(spec: &ProtocolSpec, channel: &ChannelModel, basis: &DisplacedBasis) -> Result<CMat> {
    spec.validate()?;
    channel.validate()?;
    let d = spec.num_signals();
    if basis.num_signals() != d {
        return Err(Error::Dimension { context: "simulated state signals", expected: d, got: basis.num_signals() });
    }
    let s = basis.dim_per_signal();
    let beta = basis.beta();
    let leak = (1.0 - channel.eta()).max(0.0).sqrt();
    let prefactor = CMat::from_fn(d, d, |i, j| {
        coherent_overlap(spec.alpha[i] * leak, spec.alpha[j] * leak) * (spec.p[i] * spec.p[j]).sqrt()
    });
    let mut rho = CMat::zeros(d * s, d * s);
    let sigma = (channel.delta() / 2.0).sqrt();
    let nodes: Vec<(C64, f64)> = if sigma == 0.0 {
        vec![(C64::new(0.0, 0.0), 1.0)]
    } else {
        let rule = hermite_rule(SIM_HERMITE_ORDER);
        let mut v = Vec::with_capacity(rule.len() * rule.len());
        for &(u, wu) in &rule {
            for &(x, wx) in &rule {
                v.push((C64::new(u, x) * sigma, wu * wx / PI));
            }
        }
        v
    };
    for (mu, w) in nodes {
        let amp: Vec<C64> = (0..s).map(|m| coherent_amplitude(m, mu)).collect();
        for i in 0..d {
            for j in 0..d {
                let phase = C64::from_polar(1.0, 2.0 * (mu * (beta[i] - beta[j]).conj()).im);
                let c = prefactor[(i, j)] * phase * w;
                for n in 0..s {
                    let right = c * amp[n].conj();
                    for m in 0..s {
                        rho[(i * s + m, j * s + n)] += amp[m] * right;
                    }
                }
            }
        }
    }
    hermitize(rho, "simulated state")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_gram_relation, partial_trace_displaced};
    use crate::linalg::min_eigenvalue;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn qpsk(alpha: f64, da: f64, dp: f64) -> ProtocolSpec {
        ProtocolSpec::qpsk(alpha, da, dp, DetectorModel::ideal(), 0.95).unwrap()
    }

    #[test]
    fn transmittance() {
        assert_eq!(ChannelModel::new(0.0, 0.01).eta(), 1.0);
        assert!((ChannelModel::new(50.0, 0.0).eta() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn simulated_moments() {
        let (n, nsq) = simulate_expectations(&ChannelModel::new(0.0, 0.0), 4);
        assert_eq!((n[0], nsq[0]), (0.0, 0.0));
        let (n, nsq) = simulate_expectations(&ChannelModel::new(0.0, 0.01), 4);
        assert!((n[2] - 0.005).abs() < 1e-18 && (nsq[2] - 0.00505).abs() < 1e-18);
        // thermal-state moments by direct diagonal sums
        let nbar: f64 = 0.005;
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..=100 {
            let pk = nbar.powi(k) / (1.0 + nbar).powi(k + 1);
            m1 += k as f64 * pk;
            m2 += (k * k) as f64 * pk;
        }
        assert!((m1 - n[0]).abs() < 1e-10 && (m2 - nsq[0]).abs() < 1e-10);
    }

    #[test]
    fn inversion_round_trip() {
        let det = DetectorModel::trusted(0.6, 0.05).unwrap();
        let (n, nsq) = effective_expectations(0.05, forward_noisy_expectations(0.0, 0.0, &det).1, &det).unwrap();
        assert!(n.abs() < 1e-15 && nsq.abs() < 1e-15);
        let id = DetectorModel::ideal();
        assert_eq!(effective_expectations(0.3, 0.4, &id).unwrap(), (0.3, 0.4));
        assert!(effective_expectations(0.0, 0.0, &det).is_err());
    }

    #[test]
    fn distribution_rows_and_symmetry() {
        let spec = qpsk(0.8, 0.4, 0.1);
        let ch = ChannelModel::new(10.0, 0.02);
        let jd = joint_distribution(&spec, &ch).unwrap();
        for row in &jd.conditional {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for i in 0..4 {
            for j in 0..4 {
                let a = jd.conditional[i][j];
                let b = jd.conditional[(i + 1) % 4][(j + 1) % 4];
                assert!((a - b).abs() < 1e-9);
            }
            assert!((jd.conditional[i][4] - jd.conditional[(i + 1) % 4][4]).abs() < 1e-9);
        }
        let none = joint_distribution(&qpsk(0.8, 0.0, 0.0), &ch).unwrap();
        assert!(none.conditional.iter().all(|r| r[4] == 0.0));
        assert!((none.sift_prob - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sift_probability_decreases() {
        let ch = ChannelModel::new(5.0, 0.01);
        let mut prev = 1.0 + 1e-12;
        for k in 0..6 {
            let jd = joint_distribution(&qpsk(0.7, 0.15 * k as f64, 0.0), &ch).unwrap();
            assert!(jd.sift_prob <= prev);
            prev = jd.sift_prob;
        }
    }

    #[test]
    fn ec_cost_limits() {
        let uniform = [[1.0 / 16.0; 4]; 4];
        assert_eq!(ec_cost(&uniform, 0.95), 2.0);
        let mut diag = [[0.0; 4]; 4];
        for (i, row) in diag.iter_mut().enumerate() {
            row[i] = 0.25;
        }
        assert_eq!(ec_cost(&diag, 1.0), 0.0);
        assert!(ec_cost(&diag, 0.9) > ec_cost(&diag, 0.95));
    }

    #[test]
    fn sample_estimators() {
        let beta = C64::new(0.4, -0.2);
        assert_eq!(expectations_from_samples(&[beta; 3], beta).unwrap(), (-1.0, 1.0));
        assert!(expectations_from_samples(&[], beta).is_err());
        // ideal heterodyne of |β⟩: β plus complex Gaussian with unit total variance
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let normal = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
        let n = 1_000_000;
        let samples: Vec<C64> = (0..n)
            .map(|_| beta + C64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        let (en, ensq) = expectations_from_samples(&samples, beta).unwrap();
        assert!(en.abs() < 3.0 / (n as f64).sqrt(), "{en}");
        assert!(ensq.abs() < 10.0 / (n as f64).sqrt(), "{ensq}");
    }

    #[test]
    fn simulated_state_blocks() {
        let spec = qpsk(0.6, 0.0, 0.0);
        let ch = ChannelModel::new(10.0, 0.05);
        let beta = ch.received_amplitudes(&spec.alpha);
        let basis = DisplacedBasis::new(beta, 25).unwrap();
        let rho = projected_simulated_state(&spec, &ch, &basis).unwrap();
        let nbar = ch.delta() / 2.0;
        for i in 0..4 {
            for m in 0..6 {
                let want = 0.25 * nbar.powi(m as i32) / (1.0 + nbar).powi(m as i32 + 1);
                assert!((rho[(i * 26 + m, i * 26 + m)].re - want).abs() < 1e-12);
            }
        }
        let rel = build_gram_relation(&basis).unwrap();
        let ra = partial_trace_displaced(&rho, &rel).unwrap();
        let tau = crate::protocol::reduced_state_target(&spec).unwrap();
        assert!((ra - tau).camax() < 1e-10);
        assert!(min_eigenvalue(&rho) > -1e-12);
    }
}
