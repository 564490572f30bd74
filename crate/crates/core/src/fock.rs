//! Truncated displaced Fock bases and the operators that relate them.
//!
//! The joint space is ordered i-major: index `i * (N + 1) + n` labels `|i⟩ ⊗ |n_{β_i}⟩`.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{hermitize, spectral_norm, CMat, C64};

const LN_FACT_TABLE: usize = 1024;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        t.push(0.0);
        for k in 1..LN_FACT_TABLE {
            t.push(t[k - 1] + (k as f64).ln());
        }
        t
    })
}

/// ln(n!).
pub fn ln_factorial(n: usize) -> f64 {
    if n < LN_FACT_TABLE {
        return ln_fact_table()[n];
    }
    let x = n as f64 + 1.0;
    // Stirling series for ln Γ(x)
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3))
        + 1.0 / (1260.0 * x.powi(5))
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Generalized Laguerre polynomial L_n^{(a)}(x) by three-term recurrence.
pub fn laguerre(n: usize, a: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// ⟨α_j|α_i⟩ for coherent states.
pub fn coherent_overlap(alpha_i: C64, alpha_j: C64) -> C64 {
    let phase = (alpha_i * alpha_j.conj()).im;
    let d = (alpha_i - alpha_j).norm_sqr();
    C64::from_polar((-0.5 * d).exp(), phase)
}

/// Fock amplitude ⟨n|α⟩.
pub fn coherent_amplitude(n: usize, alpha: C64) -> C64 {
    let r = alpha.norm();
    if r == 0.0 {
        return if n == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
    }
    let ln_mag = -0.5 * r * r + n as f64 * r.ln() - 0.5 * ln_factorial(n);
    C64::from_polar(ln_mag.exp(), n as f64 * alpha.arg())
}

/// ⟨n|D(γ)|m⟩.
pub fn displacement_element(n: usize, m: usize, gamma: C64) -> C64 {
    let x = gamma.norm_sqr();
    if x == 0.0 {
        return if n == m { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
    }
    let r = gamma.norm();
    let (hi, lo, phase) = if n >= m {
        (n, m, (n - m) as f64 * gamma.arg())
    } else {
        (m, n, (m - n) as f64 * (-gamma.conj()).arg())
    };
    let k = (hi - lo) as f64;
    let lag = laguerre(lo, k, x);
    if lag == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let ln_mag = 0.5 * (ln_factorial(lo) - ln_factorial(hi)) + k * r.ln() - 0.5 * x;
    C64::from_polar(ln_mag.exp() * lag, phase)
}

/// ⟨m|D(γ) ρ_th(n̄) D†(γ)|n⟩ for a thermal state with mean photon number n̄.
pub fn displaced_thermal_element(m: usize, n: usize, gamma: C64, nbar: f64) -> C64 {
    if m < n {
        return displaced_thermal_element(n, m, gamma, nbar).conj();
    }
    let s = 1.0 + nbar;
    let x = gamma.norm_sqr();
    let diff = m - n;
    if x == 0.0 {
        if diff != 0 {
            return C64::new(0.0, 0.0);
        }
        if nbar == 0.0 {
            return C64::new(if n == 0 { 1.0 } else { 0.0 }, 0.0);
        }
        return C64::new((n as f64 * nbar.ln() - (n as f64 + 1.0) * s.ln()).exp(), 0.0);
    }
    let ln_x = x.ln();
    let ln_s = s.ln();
    let ln_nbar = if nbar > 0.0 { nbar.ln() } else { f64::NEG_INFINITY };
    let mut sum = 0.0;
    for k in 0..=n {
        let j = n - k;
        if j > 0 && nbar == 0.0 {
            continue;
        }
        let nb_term = if j == 0 { 0.0 } else { j as f64 * ln_nbar };
        let ln_term = ln_binomial(m, j) + nb_term + k as f64 * ln_x
            - ln_factorial(k)
            - (n + k) as f64 * ln_s;
        sum += ln_term.exp();
    }
    let ln_pref = -x / s - ln_s + 0.5 * (ln_factorial(n) - ln_factorial(m))
        + diff as f64 * (0.5 * ln_x - ln_s);
    C64::from_polar(ln_pref.exp() * sum, diff as f64 * gamma.arg())
}

/// Per-signal displaced number bases truncated at photon number N.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacedBasis {
    beta: Vec<C64>,
    n_max: usize,
}

impl DisplacedBasis {
    pub fn new(beta: Vec<C64>, n_max: usize) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "at least one signal is required".into(),
            });
        }
        if beta.iter().any(|b| !b.re.is_finite() || !b.im.is_finite()) {
            return Err(Error::NonFinite { context: "displacement amplitudes" });
        }
        Ok(Self { beta, n_max })
    }

    pub fn beta(&self) -> &[C64] {
        &self.beta
    }

    pub fn num_signals(&self) -> usize {
        self.beta.len()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim_per_signal(&self) -> usize {
        self.n_max + 1
    }

    pub fn total_dim(&self) -> usize {
        self.num_signals() * self.dim_per_signal()
    }

    pub fn index(&self, signal: usize, n: usize) -> usize {
        signal * self.dim_per_signal() + n
    }
}

/// Overlaps between the displaced bases of every pair of signals.
#[derive(Debug, Clone)]
pub struct GramRelation {
    d: usize,
    s: usize,
    blocks: Vec<CMat>,
}

impl GramRelation {
    /// Block (i, j); entry (m, n) is ⟨n_{β_j}|m_{β_i}⟩.
    pub fn block(&self, i: usize, j: usize) -> &CMat {
        &self.blocks[i * self.d + j]
    }

    pub fn num_signals(&self) -> usize {
        self.d
    }

    pub fn dim_per_signal(&self) -> usize {
        self.s
    }

    pub fn total_dim(&self) -> usize {
        self.d * self.s
    }
}

/// Tolerance on the largest singular value of an off-diagonal block.
pub const GRAM_DEFECT_TOL: f64 = 1e-8;

pub fn gram_element(beta_i: C64, beta_j: C64, m: usize, n: usize) -> C64 {
    let phase = C64::from_polar(1.0, (-beta_j * beta_i.conj()).im);
    phase * displacement_element(n, m, beta_i - beta_j)
}

pub fn build_gram_relation(basis: &DisplacedBasis) -> Result<GramRelation> {
    let d = basis.num_signals();
    let s = basis.dim_per_signal();
    let beta = basis.beta();
    let mut blocks = vec![CMat::zeros(s, s); d * d];
    for i in 0..d {
        blocks[i * d + i] = CMat::identity(s, s);
        for j in (i + 1)..d {
            let g = CMat::from_fn(s, s, |m, n| gram_element(beta[i], beta[j], m, n));
            let sigma_max = spectral_norm(&g);
            if sigma_max > 1.0 + GRAM_DEFECT_TOL {
                return Err(Error::GramDefect { i, j, sigma_max });
            }
            blocks[j * d + i] = g.adjoint();
            blocks[i * d + j] = g;
        }
    }
    Ok(GramRelation { d, s, blocks })
}

fn check_dim(m: &CMat, expected: usize, context: &'static str) -> Result<()> {
    if m.nrows() != expected || m.ncols() != expected {
        return Err(Error::Dimension {
            context,
            expected,
            got: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

/// Trace over B in the displaced basis: ⟨i|ρ_A|j⟩ = Σ_{mn} (ρ_ij)_{mn} (G_ij)_{mn}.
pub fn partial_trace_displaced(m_rho: &CMat, rel: &GramRelation) -> Result<CMat> {
    check_dim(m_rho, rel.total_dim(), "partial trace input")?;
    let (d, s) = (rel.d, rel.s);
    let out = CMat::from_fn(d, d, |i, j| {
        let g = rel.block(i, j);
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..s {
            for m in 0..s {
                acc += m_rho[(i * s + m, j * s + n)] * g[(m, n)];
            }
        }
        acc
    });
    hermitize(out, "partial trace")
}

/// σ_A ⊗ 1_B in the displaced basis: block (i, j) is c_ij · conj(G_ij).
pub fn embed_operator_a(sigma_a: &CMat, rel: &GramRelation) -> Result<CMat> {
    let (d, s) = (rel.d, rel.s);
    check_dim(sigma_a, d, "embedding input")?;
    let mut out = CMat::zeros(d * s, d * s);
    for i in 0..d {
        for j in 0..d {
            let cij = sigma_a[(i, j)];
            if cij == C64::new(0.0, 0.0) {
                continue;
            }
            let g = rel.block(i, j);
            for n in 0..s {
                for m in 0..s {
                    out[(i * s + m, j * s + n)] = cij * g[(m, n)].conj();
                }
            }
        }
    }
    Ok(out)
}
