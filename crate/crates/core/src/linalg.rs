//! Dense complex matrix helpers built on nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Largest asymmetry threshold tolerated before a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// A B through a packed complex GEMM kernel.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    assert_eq!(k, b.nrows(), "matmul shape mismatch");
    let mut out = CMat::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // SAFETY: nalgebra stores DMatrix<Complex64> column-major and contiguous, and Complex64 is
    // repr(C) with the same layout as [f64; 2]; the strides below describe exactly those buffers.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    out
}

/// A B C.
pub fn matmul3(a: &CMat, b: &CMat, c: &CMat) -> CMat {
    matmul(&matmul(a, b), c)
}

/// Maximum elementwise |M - M†|.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Symmetrize to (M + M†)/2, refusing matrices whose relative asymmetry exceeds the tolerance.
pub fn hermitize(m: CMat, context: &'static str) -> Result<CMat> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            context,
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let defect = hermitian_defect(&m);
    let scale = m.iter().fold(1.0f64, |a, z| a.max(z.norm()));
    if !defect.is_finite() || defect > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { context, defect });
    }
    Ok(sym(&m))
}

/// (M + M†)/2 without checks.
pub fn sym(m: &CMat) -> CMat {
    let mut out = m.clone();
    let n = m.nrows();
    for j in 0..n {
        out[(j, j)] = C64::new(m[(j, j)].re, 0.0);
        for i in 0..j {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
    }
    out
}

/// Re Tr(A† B), the real Hilbert-Schmidt inner product.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Tr(A† B) as a complex number.
pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: CMat,
}

pub fn eigh(m: &CMat) -> HermitianEigen {
    let se = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| se.eigenvalues[k]));
    let mut vectors = CMat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &se.eigenvectors.column(k));
    }
    HermitianEigen { values, vectors }
}

pub fn eigvalsh(m: &CMat) -> DVector<f64> {
    let mut v = m.clone().symmetric_eigenvalues();
    v.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigvalsh(m).iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    eigvalsh(m).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl HermitianEigen {
    /// V diag(f(λ)) V†.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let s = f(self.values[k]);
            scaled.column_mut(k).scale_mut(s);
        }
        let out = scaled * self.vectors.adjoint();
        sym(&out)
    }
}

/// Principal square root of a PSD matrix; small negative eigenvalues are clipped to zero.
pub fn psd_sqrt(m: &CMat) -> CMat {
    eigh(m).map(|l| l.max(0.0).sqrt())
}

/// Projection onto the PSD cone.
pub fn psd_part(m: &CMat) -> CMat {
    eigh(m).map(|l| l.max(0.0))
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &CMat) -> f64 {
    eigvalsh(m).iter().map(|l| l.abs()).sum()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    let g = m.adjoint() * m;
    max_eigenvalue(&sym(&g)).max(0.0).sqrt()
}

/// Copy `b` into `target` with its top-left corner at (row, col).
pub fn set_block(target: &mut CMat, row: usize, col: usize, b: &CMat) {
    target.view_mut((row, col), (b.nrows(), b.ncols())).copy_from(b);
}

pub fn block(m: &CMat, row: usize, col: usize, rows: usize, cols: usize) -> CMat {
    m.view((row, col), (rows, cols)).into_owned()
}

/// Matrix of a Hermitian basis element for the real vector space of n×n Hermitian matrices.
///
/// Indices 0..n are diagonal units, then for each pair i<j a symmetric and an antisymmetric element.
pub fn hermitian_basis(n: usize, k: usize) -> CMat {
    let mut e = CMat::zeros(n, n);
    if k < n {
        e[(k, k)] = C64::new(1.0, 0.0);
        return e;
    }
    let mut idx = n;
    for i in 0..n {
        for j in (i + 1)..n {
            if idx == k {
                e[(i, j)] = C64::new(1.0, 0.0);
                e[(j, i)] = C64::new(1.0, 0.0);
                return e;
            }
            if idx + 1 == k {
                e[(i, j)] = C64::new(0.0, 1.0);
                e[(j, i)] = C64::new(0.0, -1.0);
                return e;
            }
            idx += 2;
        }
    }
    panic!("hermitian basis index {k} out of range for n = {n}");
}

/// Coordinates of a Hermitian matrix in [`hermitian_basis`], orthogonal but not normalized.
pub fn hermitian_from_coords(n: usize, coords: &[f64]) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(coords[i], 0.0);
    }
    let mut idx = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = C64::new(coords[idx], coords[idx + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            idx += 2;
        }
    }
    m
}

/// Block-diagonal Hermitian operator with square blocks along the diagonal.
#[derive(Debug, Clone)]
pub struct BlockDiag {
    blocks: Vec<CMat>,
}

impl BlockDiag {
    pub fn new(blocks: Vec<CMat>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    pub fn to_dense(&self) -> CMat {
        let n = self.dim();
        let mut out = CMat::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            set_block(&mut out, off, off, b);
            off += b.nrows();
        }
        out
    }

    /// Apply a scalar function to each block through its eigendecomposition.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        Self { blocks: self.blocks.iter().map(|b| eigh(b).map(f)).collect() }
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = &'a BlockDiag>) -> Option<Self> {
        let mut it = items.into_iter();
        let first = it.next()?.clone();
        Some(it.fold(first, |mut acc, x| {
            for (a, b) in acc.blocks.iter_mut().zip(&x.blocks) {
                *a += b;
            }
            acc
        }))
    }

    /// B ρ B for Hermitian B.
    pub fn congruence(&self, rho: &CMat) -> CMat {
        let n = self.dim();
        let mut out = CMat::zeros(n, n);
        let mut oi = 0;
        for bi in &self.blocks {
            let si = bi.nrows();
            let mut oj = 0;
            for bj in &self.blocks {
                let sj = bj.nrows();
                let prod = bi * rho.view((oi, oj), (si, sj)) * bj;
                out.view_mut((oi, oj), (si, sj)).copy_from(&prod);
                oj += sj;
            }
            oi += si;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = CMat::from_fn(n, n, |_, _| C64::new(next(), next()));
        &a + a.adjoint()
    }

    #[test]
    fn eigh_reconstructs() {
        let m = sample(7, 3);
        let e = eigh(&m);
        let back = e.map(|l| l);
        assert!((back - &m).norm() < 1e-12);
        assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sqrt_squares_back() {
        let m = sample(5, 9);
        let p = &m * &m;
        let r = psd_sqrt(&p);
        assert!((&r * &r - p).norm() < 1e-10);
    }

    #[test]
    fn hermitize_rejects_asymmetric() {
        let mut m = sample(3, 1);
        m[(0, 1)] += C64::new(0.5, 0.0);
        assert!(hermitize(m, "test").is_err());
    }

    #[test]
    fn hermitian_basis_coordinates() {
        let n = 3;
        let coords: Vec<f64> = (0..n * n).map(|k| k as f64 * 0.3 - 1.0).collect();
        let m = hermitian_from_coords(n, &coords);
        let mut rebuilt = CMat::zeros(n, n);
        for (k, &x) in coords.iter().enumerate() {
            rebuilt += hermitian_basis(n, k) * C64::new(x, 0.0);
        }
        assert!((rebuilt - m).norm() < 1e-14);
    }
}
