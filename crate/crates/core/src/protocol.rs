//! Protocol description and the operators it induces in the displaced basis.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{coherent_overlap, displaced_thermal_element, DisplacedBasis};
use crate::linalg::{hermitize, CMat, C64};
use crate::quadrature::{integrate_sector, Sector};

/// Number of key symbols of the four-sector key map.
pub const KEY_SYMBOLS: usize = 4;

/// Largest accepted quadrature error estimate for an operator entry.
pub const REGION_QUAD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Ideal,
    Trusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub eta_d: f64,
    pub nu_el: f64,
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self { kind: DetectorKind::Ideal, eta_d: 1.0, nu_el: 0.0 }
    }

    pub fn trusted(eta_d: f64, nu_el: f64) -> Result<Self> {
        let m = Self { kind: DetectorKind::Trusted, eta_d, nu_el };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta_d",
                reason: format!("{} not in (0, 1]", self.eta_d),
            });
        }
        if !(self.nu_el >= 0.0 && self.nu_el.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "nu_el",
                reason: format!("{} is negative or not finite", self.nu_el),
            });
        }
        if self.kind == DetectorKind::Ideal && (self.eta_d != 1.0 || self.nu_el != 0.0) {
            return Err(Error::InvalidParameter {
                name: "detector",
                reason: "an ideal detector has eta_d = 1 and nu_el = 0".into(),
            });
        }
        Ok(())
    }

    /// Mean photon number of the thermal state in the detector POVM.
    pub fn nbar(&self) -> f64 {
        (1.0 - self.eta_d + self.nu_el) / self.eta_d
    }

    pub fn is_ideal(&self) -> bool {
        self.kind == DetectorKind::Ideal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub alpha: Vec<C64>,
    pub p: Vec<f64>,
    pub delta_a: f64,
    pub delta_p: f64,
    pub detector: DetectorModel,
    pub beta_ec: f64,
}

impl ProtocolSpec {
    /// Four signals α·{1, i, -1, -i} sent with equal probability.
    pub fn qpsk(amplitude: f64, delta_a: f64, delta_p: f64, detector: DetectorModel, beta_ec: f64) -> Result<Self> {
        let alpha = (0..4).map(|k| C64::from_polar(amplitude, k as f64 * PI / 2.0)).collect();
        let spec = Self { alpha, p: vec![0.25; 4], delta_a, delta_p, detector, beta_ec };
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_signals(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.alpha.len() != self.p.len() {
            return Err(Error::InvalidParameter {
                name: "alpha/p",
                reason: format!("{} amplitudes and {} probabilities", self.alpha.len(), self.p.len()),
            });
        }
        let total: f64 = self.p.iter().sum();
        if self.p.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!("probabilities must be nonnegative and sum to 1 (sum {total})"),
            });
        }
        if !(self.delta_a >= 0.0 && self.delta_a.is_finite()) {
            return Err(Error::InvalidParameter { name: "delta_a", reason: format!("{}", self.delta_a) });
        }
        if !(self.delta_p >= 0.0 && self.delta_p < FRAC_PI_4) {
            return Err(Error::InvalidParameter {
                name: "delta_p",
                reason: format!("{} not in [0, π/4)", self.delta_p),
            });
        }
        if !(self.beta_ec > 0.0 && self.beta_ec <= 1.0) {
            return Err(Error::InvalidParameter { name: "beta_ec", reason: format!("{} not in (0, 1]", self.beta_ec) });
        }
        self.detector.validate()
    }
}

/// Angular extent of key region z after phase postselection.
pub fn region_angles(z: usize, delta_p: f64) -> (f64, f64) {
    let zf = z as f64;
    ((2.0 * zf - 1.0) * FRAC_PI_4 + delta_p, (2.0 * zf + 1.0) * FRAC_PI_4 - delta_p)
}

/// Radius beyond which the detection kernel is negligible.
pub fn radial_cutoff(beta: C64, nbar: f64) -> f64 {
    beta.norm() + 12.0 + 6.0 * (1.0 + nbar).sqrt()
}

fn packed_len(s: usize) -> usize {
    s * (s + 1) / 2
}

fn unpack_hermitian(s: usize, packed: &[f64]) -> CMat {
    let mut m = CMat::zeros(s, s);
    let mut k = 0;
    for a in 0..s {
        for b in a..s {
            let z = C64::new(packed[2 * k], packed[2 * k + 1]);
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
            k += 1;
        }
    }
    for a in 0..s {
        m[(a, a)].im = 0.0;
    }
    m
}

/// Integral of the detector POVM over a phase-space sector, expressed in the basis {|m_β⟩}.
pub fn sector_operator(sector: Sector, beta: C64, s: usize, detector: &DetectorModel) -> Result<CMat> {
    let dim = 2 * packed_len(s);
    let res = if detector.is_ideal() {
        let inv_sqrt: Vec<f64> = (0..s).map(|m| 1.0 / (m.max(1) as f64).sqrt()).collect();
        let kernel = |zeta: C64, w: f64, acc: &mut [f64]| {
            let kappa = zeta - beta;
            let mut v = Vec::with_capacity(s);
            let mut cur = C64::new((-0.5 * kappa.norm_sqr()).exp(), 0.0);
            v.push(cur);
            for m in 1..s {
                cur = cur * kappa * inv_sqrt[m];
                v.push(cur);
            }
            let scale = w / PI;
            let mut k = 0;
            for a in 0..s {
                for b in a..s {
                    let z = v[a] * v[b].conj();
                    acc[2 * k] += scale * z.re;
                    acc[2 * k + 1] += scale * z.im;
                    k += 1;
                }
            }
        };
        integrate_sector(kernel, sector, dim, 1e-11)?
    } else {
        let nbar = detector.nbar();
        let root = detector.eta_d.sqrt();
        let kernel = |zeta: C64, w: f64, acc: &mut [f64]| {
            let gamma = zeta / root - beta;
            let scale = w / (detector.eta_d * PI);
            let mut k = 0;
            for a in 0..s {
                for b in a..s {
                    let z = displaced_thermal_element(a, b, gamma, nbar);
                    acc[2 * k] += scale * z.re;
                    acc[2 * k + 1] += scale * z.im;
                    k += 1;
                }
            }
        };
        integrate_sector(kernel, sector, dim, 1e-11)?
    };
    if res.error > REGION_QUAD_TOL {
        return Err(Error::Quadrature { context: "region operator", estimate: res.error });
    }
    Ok(unpack_hermitian(s, &res.value))
}

/// ⟨m_{β_i}|R^z|n_{β_i}⟩ for the annular key sector z.
pub fn region_operator(z: usize, spec: &ProtocolSpec, basis: &DisplacedBasis, signal: usize) -> Result<CMat> {
    if z >= KEY_SYMBOLS {
        return Err(Error::InvalidParameter { name: "z", reason: format!("key symbol {z} out of range") });
    }
    if signal >= basis.num_signals() {
        return Err(Error::InvalidParameter { name: "signal", reason: format!("signal {signal} out of range") });
    }
    spec.detector.validate()?;
    let beta = basis.beta()[signal];
    let (theta_lo, theta_hi) = region_angles(z, spec.delta_p);
    let sector = Sector {
        r_lo: spec.delta_a,
        r_hi: radial_cutoff(beta, spec.detector.nbar()),
        theta_lo,
        theta_hi,
    };
    sector_operator(sector, beta, basis.dim_per_signal(), &spec.detector)
}

/// Per-signal number and squared-number observables, each placed in its own diagonal block.
pub fn observable_matrices(basis: &DisplacedBasis) -> (Vec<CMat>, Vec<CMat>) {
    let dim = basis.total_dim();
    let mut n_obs = Vec::with_capacity(basis.num_signals());
    let mut nsq_obs = Vec::with_capacity(basis.num_signals());
    for i in 0..basis.num_signals() {
        let mut a = CMat::zeros(dim, dim);
        let mut b = CMat::zeros(dim, dim);
        for n in 0..basis.dim_per_signal() {
            let k = basis.index(i, n);
            a[(k, k)] = C64::new(n as f64, 0.0);
            b[(k, k)] = C64::new((n * n) as f64, 0.0);
        }
        n_obs.push(a);
        nsq_obs.push(b);
    }
    (n_obs, nsq_obs)
}

/// τ_A = Σ_ij √(p_i p_j) ⟨α_j|α_i⟩ |i⟩⟨j|.
pub fn reduced_state_target(spec: &ProtocolSpec) -> Result<CMat> {
    let d = spec.num_signals();
    let t = CMat::from_fn(d, d, |i, j| coherent_overlap(spec.alpha[i], spec.alpha[j]) * (spec.p[i] * spec.p[j]).sqrt());
    hermitize(t, "reduced state target")
}

/// Region operators (indexed [z][signal]), observables and τ_A.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub regions: Vec<Vec<CMat>>,
    pub n_obs: Vec<CMat>,
    pub nsq_obs: Vec<CMat>,
    pub tau_a: CMat,
}

pub fn build_operator_set(spec: &ProtocolSpec, basis: &DisplacedBasis) -> Result<OperatorSet> {
    spec.validate()?;
    if spec.num_signals() != basis.num_signals() {
        return Err(Error::Dimension {
            context: "operator set signals",
            expected: spec.num_signals(),
            got: basis.num_signals(),
        });
    }
    let mut regions = Vec::with_capacity(KEY_SYMBOLS);
    for z in 0..KEY_SYMBOLS {
        let mut per_signal = Vec::with_capacity(basis.num_signals());
        for i in 0..basis.num_signals() {
            per_signal.push(region_operator(z, spec, basis, i)?);
        }
        regions.push(per_signal);
    }
    let (n_obs, nsq_obs) = observable_matrices(basis);
    Ok(OperatorSet { regions, n_obs, nsq_obs, tau_a: reduced_state_target(spec)? })
}

/// Maximum deviations in the two trusted-noise observable identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyObservableReport {
    pub first: f64,
    pub second: f64,
}

/// (1/π)∫ |u|^{2j} ⟨n|D(u)ρ_th D†(u)|n⟩ d²u by expanding the diagonal kernel into Gaussian moments.
fn thermal_moment(j: usize, n: usize, nbar: f64) -> f64 {
    let s = 1.0 + nbar;
    let mut acc = 0.0;
    let mut binom = 1.0;
    for k in 0..=n {
        if k > 0 {
            binom = binom * (n - k + 1) as f64 / k as f64;
        }
        let rising: f64 = (1..=j).map(|t| (k + t) as f64).product();
        let nb = if n == k { 1.0 } else { nbar.powi((n - k) as i32) };
        acc += binom * rising * nb;
    }
    acc * s.powi(j as i32 - n as i32)
}

/// Diagonal elements of the noisy number and squared-number observables, evaluated from the
/// displaced-thermal POVM, against the closed-form operator identities.
pub fn noisy_observable_check(eta_d: f64, nu_el: f64, truncation: usize) -> Result<NoisyObservableReport> {
    if truncation < 2 {
        return Err(Error::InvalidParameter { name: "truncation", reason: "must be at least 2".into() });
    }
    let det = if eta_d == 1.0 && nu_el == 0.0 { DetectorModel::ideal() } else { DetectorModel::trusted(eta_d, nu_el)? };
    let nbar = det.nbar();
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    for n in 0..=truncation {
        let (m0, m1, m2) = (thermal_moment(0, n, nbar), thermal_moment(1, n, nbar), thermal_moment(2, n, nbar));
        let lhs1 = eta_d * m1 - m0;
        let lhs2 = eta_d * eta_d * m2 - 3.0 * eta_d * m1 + m0;
        let nf = n as f64;
        let rhs1 = eta_d * nf + nu_el;
        let rhs2 = eta_d * eta_d * nf * nf + eta_d * (4.0 * nu_el + 1.0 - eta_d) * nf + 2.0 * nu_el * nu_el + nu_el;
        first = first.max((lhs1 - rhs1).abs());
        second = second.max((lhs2 - rhs2).abs());
    }
    Ok(NoisyObservableReport { first, second })
}
