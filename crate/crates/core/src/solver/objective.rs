//! Conditional-entropy objective in relative-entropy form and its gradient.
//!
//! With key-map Kraus operators K_z = |z⟩ ⊗ √R_z, G(ρ) = Σ K_z ρ K_z† and Z the pinching on the key
//! register, f(ρ) = D(G(ρ) ‖ Z(G(ρ))). The nonzero spectrum of G(ρ) equals that of √P ρ √P with
//! P = Σ R_z, and Z(G(ρ)) is block diagonal with blocks A_z = √R_z ρ √R_z, so
//!
//! f(ρ) = Tr Y log Y − Σ_z Tr A_z log A_z,   Y = √P ρ √P,
//! ∇f(ρ) = √P log(Y) √P − Σ_z √R_z log(A_z) √R_z.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::linalg::{eigh, hermitian_defect, min_eigenvalue, BlockDiag, CMat, HERMITIAN_TOL};

/// Most negative eigenvalue tolerated in an input state.
pub const PSD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Objective {
    sqrt_regions: Vec<BlockDiag>,
    sqrt_total: BlockDiag,
    floor: f64,
}

fn floored_log(x: f64, floor: f64) -> f64 {
    x.max(floor).ln()
}

impl Objective {
    pub fn new(regions: &[BlockDiag], eig_floor: f64) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::EmptyInput("objective regions"));
        }
        if !(eig_floor > 0.0) {
            return Err(Error::InvalidParameter { name: "eig_floor", reason: format!("must be positive, got {eig_floor}") });
        }
        let dim = regions[0].dim();
        if regions.iter().any(|r| r.dim() != dim) {
            return Err(Error::Dimension { context: "objective regions", expected: dim, got: 0 });
        }
        let total = BlockDiag::sum(regions).expect("nonempty");
        Ok(Self {
            sqrt_regions: regions.iter().map(|r| r.map_spectrum(|l| l.max(0.0).sqrt())).collect(),
            sqrt_total: total.map_spectrum(|l| l.max(0.0).sqrt()),
            floor: eig_floor,
        })
    }

    pub fn dim(&self) -> usize {
        self.sqrt_total.dim()
    }

    fn check(&self, rho: &CMat) -> Result<()> {
        if rho.nrows() != self.dim() || rho.ncols() != self.dim() {
            return Err(Error::Dimension { context: "objective state", expected: self.dim(), got: rho.nrows() });
        }
        if !crate::linalg::is_finite(rho) {
            return Err(Error::NonFinite { context: "objective state" });
        }
        let defect = hermitian_defect(rho);
        if defect > HERMITIAN_TOL * (1.0 + rho.norm()) {
            return Err(Error::NotHermitian { context: "objective state", defect });
        }
        let min_eig = min_eigenvalue(rho);
        if min_eig < -PSD_SLACK {
            return Err(Error::NotPsd { context: "objective state", min_eig });
        }
        Ok(())
    }

    /// Σ λ log max(λ, floor) over the spectrum of a congruence image.
    fn entropy_term(&self, m: &CMat, context: &'static str) -> Result<f64> {
        let vals = crate::linalg::eigvalsh(m);
        let mut acc = 0.0;
        for &l in vals.iter() {
            if l < -PSD_SLACK || !l.is_finite() {
                return Err(Error::NonFinite { context });
            }
            acc += l * floored_log(l, self.floor);
        }
        Ok(acc)
    }

    fn log_term(&self, m: &CMat, context: &'static str) -> Result<CMat> {
        let e = eigh(m);
        if e.values.iter().any(|l| *l < -PSD_SLACK || !l.is_finite()) {
            return Err(Error::NonFinite { context });
        }
        let floor = self.floor;
        Ok(e.map(|l| floored_log(l, floor)))
    }

    /// f(ρ) in bits.
    pub fn value(&self, rho: &CMat) -> Result<f64> {
        self.check(rho)?;
        self.value_unchecked(rho)
    }

    fn value_unchecked(&self, rho: &CMat) -> Result<f64> {
        let mut v = self.entropy_term(&self.sqrt_total.congruence(rho), "objective log of G(ρ)")?;
        for sr in &self.sqrt_regions {
            v -= self.entropy_term(&sr.congruence(rho), "objective log of pinched block")?;
        }
        Ok(v / LN_2)
    }

    /// ∇f(ρ) in bits.
    pub fn gradient(&self, rho: &CMat) -> Result<CMat> {
        self.check(rho)?;
        let log_y = self.log_term(&self.sqrt_total.congruence(rho), "objective log of G(ρ)")?;
        let mut g = self.sqrt_total.congruence(&log_y);
        for sr in &self.sqrt_regions {
            let log_a = self.log_term(&sr.congruence(rho), "objective log of pinched block")?;
            g -= sr.congruence(&log_a);
        }
        g /= crate::linalg::c(LN_2, 0.0);
        Ok(crate::linalg::sym(&g))
    }

    /// f along the segment ρ + t(σ − ρ); the caller guarantees both ends are valid states.
    pub fn value_on_segment(&self, rho: &CMat, dir: &CMat, t: f64) -> Result<f64> {
        let point = rho + dir * crate::linalg::c(t, 0.0);
        self.value_unchecked(&point)
    }
}

pub fn objective_value(rho: &CMat, regions: &[BlockDiag], eig_floor: f64) -> Result<f64> {
    Objective::new(regions, eig_floor)?.value(rho)
}

pub fn objective_gradient(rho: &CMat, regions: &[BlockDiag], eig_floor: f64) -> Result<CMat> {
    Objective::new(regions, eig_floor)?.gradient(rho)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::{c, inner, psd_sqrt, C64};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        CMat::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    /// Four positive blocks per signal summing to `total` times the identity.
    pub(crate) fn random_regions(rng: &mut ChaCha8Rng, d: usize, s: usize, total: f64) -> Vec<BlockDiag> {
        let mut per_z: Vec<Vec<CMat>> = vec![Vec::new(); 4];
        for _ in 0..d {
            let raw: Vec<CMat> = (0..4)
                .map(|_| {
                    let a = random_matrix(rng, s);
                    &a * a.adjoint() + CMat::identity(s, s) * c(0.05, 0.0)
                })
                .collect();
            let sum = raw.iter().fold(CMat::zeros(s, s), |acc, m| acc + m);
            let inv_sqrt = crate::linalg::eigh(&sum).map(|l| 1.0 / l.sqrt());
            for z in 0..4 {
                per_z[z].push(&inv_sqrt * &raw[z] * &inv_sqrt * c(total, 0.0));
            }
        }
        per_z.into_iter().map(BlockDiag::new).collect()
    }

    pub(crate) fn random_state(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let a = random_matrix(rng, n);
        let m = &a * a.adjoint() + CMat::identity(n, n) * c(0.1, 0.0);
        let tr = crate::linalg::trace_re(&m);
        m / c(tr, 0.0)
    }

    /// Unnormalized von Neumann entropy in bits.
    fn entropy(m: &CMat) -> f64 {
        -crate::linalg::eigvalsh(m).iter().filter(|l| **l > 1e-300).map(|l| l * l.log2()).sum::<f64>()
    }

    /// H(Z|E) from an explicit purification |ψ⟩_{BE}, the map to Z⊗B⊗E, dephasing Z and tracing B.
    fn purification_oracle(rho: &CMat, regions: &[BlockDiag]) -> f64 {
        let n = rho.nrows();
        let e = crate::linalg::eigh(rho);
        // |ψ⟩ = Σ_k √λ_k |v_k⟩_B |k⟩_E as an n×n coefficient matrix Ψ[b, e]
        let psi = CMat::from_fn(n, n, |b, k| e.vectors[(b, k)] * e.values[k].max(0.0).sqrt());
        let nz = regions.len();
        // ω_{ZE} after dephasing: block diagonal over z with blocks Tr_B[(√R_z ⊗ 1) ψ ψ† (√R_z ⊗ 1)]
        let mut omega_ze = CMat::zeros(nz * n, nz * n);
        for (z, r) in regions.iter().enumerate() {
            let sr = psd_sqrt(&r.to_dense());
            let phi = &sr * &psi; // coefficients of (√R_z ⊗ 1)|ψ⟩, rows B, cols E
            // Tr_B |φ⟩⟨φ| has E-matrix elements Σ_b φ[b,e] conj(φ[b,e'])
            let block = phi.transpose() * phi.map(|x| x.conj());
            omega_ze.view_mut((z * n, z * n), (n, n)).copy_from(&block);
        }
        // Tracing Z removes the coherences, so the E marginal is the sum of the dephased blocks.
        let mut omega_e = CMat::zeros(n, n);
        for z in 0..nz {
            omega_e += omega_ze.view((z * n, z * n), (n, n));
        }
        entropy(&omega_ze) - entropy(&omega_e)
    }

    #[test]
    fn purification_oracle_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let total = if trial % 2 == 0 { 1.0 } else { 0.7 };
            let regions = random_regions(&mut rng, 2, 3, total);
            let rho = random_state(&mut rng, 6);
            let f = objective_value(&rho, &regions, 1e-12).unwrap();
            let oracle = purification_oracle(&rho, &regions);
            assert!((f - oracle).abs() < 1e-8, "trial {trial}: {f} vs {oracle}");
        }
    }

    #[test]
    fn uniform_key_is_two_bits() {
        // d = 1, N = 2, four equal commuting regions 1/4: every pinched block is ρ/4.
        let regions: Vec<BlockDiag> = (0..4).map(|_| BlockDiag::new(vec![CMat::identity(3, 3) * c(0.25, 0.0)])).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_state(&mut rng, 3);
        let f = objective_value(&rho, &regions, 1e-12).unwrap();
        assert!((f - 2.0).abs() < 1e-12, "{f}");
    }

    #[test]
    fn deterministic_key_is_zero() {
        let proj = |k: usize| {
            let mut m = CMat::zeros(4, 4);
            m[(k, k)] = c(1.0, 0.0);
            BlockDiag::new(vec![m])
        };
        let regions: Vec<BlockDiag> = (0..4).map(proj).collect();
        let mut rho = CMat::zeros(4, 4);
        rho[(2, 2)] = c(1.0, 0.0);
        assert!(objective_value(&rho, &regions, 1e-12).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let regions = random_regions(&mut rng, 2, 3, 0.9);
        let obj = Objective::new(&regions, 1e-12).unwrap();
        for _ in 0..20 {
            let rho = random_state(&mut rng, 6);
            let g = obj.gradient(&rho).unwrap();
            assert!(hermitian_defect(&g) < 1e-10);
            let h = crate::linalg::sym(&random_matrix(&mut rng, 6));
            let step = 1e-5;
            let fp = obj.value(&(&rho + &h * c(step, 0.0))).unwrap();
            let fm = obj.value(&(&rho - &h * c(step, 0.0))).unwrap();
            let fd = (fp - fm) / (2.0 * step);
            let an = inner(&g, &h);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} vs {an}");
        }
    }

    #[test]
    fn tangent_lower_bounds_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let regions = random_regions(&mut rng, 2, 3, 1.0);
        let obj = Objective::new(&regions, 1e-12).unwrap();
        for _ in 0..10 {
            let rho = random_state(&mut rng, 6);
            let sigma = random_state(&mut rng, 6);
            let g = obj.gradient(&rho).unwrap();
            let f0 = obj.value(&rho).unwrap();
            let dir = &sigma - &rho;
            for t in [1e-3, 1e-4, 1.0] {
                let ft = obj.value(&(&rho + &dir * c(t, 0.0))).unwrap();
                assert!(ft >= f0 + t * inner(&g, &dir) - 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_psd() {
        let regions: Vec<BlockDiag> = (0..4).map(|_| BlockDiag::new(vec![CMat::identity(2, 2) * c(0.25, 0.0)])).collect();
        let rho = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.1, 0.0), c(-0.1, 0.0)]));
        assert!(matches!(objective_value(&rho, &regions, 1e-12), Err(Error::NotPsd { .. })));
    }
}
