//! Vector-valued quadrature: adaptive Gauss-Kronrod on intervals and polar sectors.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use gauss_quad::{GaussHermite, GaussLegendre};

use crate::error::{Error, Result};
use crate::linalg::C64;

// 21-point Kronrod extension of the 10-point Gauss rule (abscissae descending, last is the centre).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: f64,
    pub evaluations: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Piece {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut eval = |x: f64, wk: f64, wg: f64, buf: &mut [f64], kron: &mut [f64], gauss: &mut [f64]| {
        buf.iter_mut().for_each(|v| *v = 0.0);
        f(x, buf);
        for k in 0..dim {
            kron[k] += wk * buf[k];
            gauss[k] += wg * buf[k];
        }
    };
    eval(centre, WGK[10], 0.0, buf, &mut kron, &mut gauss);
    for j in 0..10 {
        let dx = half * XGK[j];
        let wg = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
        eval(centre - dx, WGK[j], wg, buf, &mut kron, &mut gauss);
        eval(centre + dx, WGK[j], wg, buf, &mut kron, &mut gauss);
    }
    let mut error: f64 = 0.0;
    for k in 0..dim {
        kron[k] *= half;
        gauss[k] *= half;
        error = error.max((kron[k] - gauss[k]).abs());
    }
    Piece { a, b, value: kron, error }
}

/// Adaptive bisection with the 21-point Gauss-Kronrod pair.
///
/// `f(x, out)` writes the integrand at `x` into `out` (pre-zeroed). The error estimate is the
/// max-norm Kronrod/Gauss difference summed over pieces.
pub fn integrate_adaptive<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_pieces: usize,
) -> Result<QuadResult> {
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    heap.push(gk21(&mut f, a, b, dim, &mut buf));
    let mut evaluations = 21;
    loop {
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for p in heap.iter() {
            for k in 0..dim {
                total[k] += p.value[k];
            }
            err += p.error;
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err <= abs_tol.max(rel_tol * scale) {
            return Ok(QuadResult { value: total, error: err, evaluations });
        }
        if heap.len() >= max_pieces {
            return Err(Error::Quadrature {
                context: "adaptive Gauss-Kronrod",
                estimate: err,
            });
        }
        let worst = heap.pop().expect("nonempty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature {
                context: "adaptive Gauss-Kronrod (interval underflow)",
                estimate: err,
            });
        }
        heap.push(gk21(&mut f, worst.a, mid, dim, &mut buf));
        heap.push(gk21(&mut f, mid, worst.b, dim, &mut buf));
        evaluations += 42;
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn legendre_rule(order: usize) -> &'static [(f64, f64)] {
    static R64: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static R128: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let build = |n: usize| {
        GaussLegendre::new(n)
            .expect("Gauss-Legendre order >= 2")
            .into_node_weight_pairs()
    };
    match order {
        64 => R64.get_or_init(|| build(64)),
        128 => R128.get_or_init(|| build(128)),
        _ => panic!("only orders 64 and 128 are cached"),
    }
}

/// Gauss-Hermite nodes and weights for weight e^{-x²}.
pub fn hermite_rule(order: usize) -> Vec<(f64, f64)> {
    GaussHermite::new(order)
        .expect("Gauss-Hermite order >= 2")
        .into_node_weight_pairs()
}

pub const ANGULAR_ORDER: usize = 64;

/// Polar sector in phase space: r in [r_lo, r_hi], θ in [theta_lo, theta_hi].
#[derive(Debug, Clone, Copy)]
pub struct Sector {
    pub r_lo: f64,
    pub r_hi: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

/// ∫∫ kernel(r e^{iθ}) r dθ dr over a sector, vector valued.
///
/// `kernel(ζ, w, acc)` must add `w * K(ζ)` into `acc`. The angular integral uses Gauss-Legendre
/// of order 128 and is checked against order 64; the returned error adds the radial estimate to
/// the worst angular discrepancy times the radial length.
pub fn integrate_sector<K: Fn(C64, f64, &mut [f64])>(
    kernel: K,
    sector: Sector,
    dim: usize,
    abs_tol: f64,
) -> Result<QuadResult> {
    if sector.r_hi <= sector.r_lo || sector.theta_hi <= sector.theta_lo {
        return Ok(QuadResult { value: vec![0.0; dim], error: 0.0, evaluations: 0 });
    }
    let lo = legendre_rule(ANGULAR_ORDER);
    let hi = legendre_rule(2 * ANGULAR_ORDER);
    let tc = 0.5 * (sector.theta_hi + sector.theta_lo);
    let th = 0.5 * (sector.theta_hi - sector.theta_lo);
    let mut coarse = vec![0.0; dim];
    let mut angular_err: f64 = 0.0;
    let radial = |r: f64, out: &mut [f64]| {
        coarse.iter_mut().for_each(|v| *v = 0.0);
        for &(x, w) in hi {
            kernel(C64::from_polar(r, tc + th * x), w * th * r, out);
        }
        for &(x, w) in lo {
            kernel(C64::from_polar(r, tc + th * x), w * th * r, &mut coarse);
        }
        let diff = out
            .iter()
            .zip(coarse.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        angular_err = angular_err.max(diff);
    };
    let mut res = integrate_adaptive(radial, sector.r_lo, sector.r_hi, dim, abs_tol, 0.0, 400)?;
    res.error += angular_err * (sector.r_hi - sector.r_lo);
    res.evaluations *= 3 * ANGULAR_ORDER;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let r = integrate_adaptive(|x, o| o[0] = x.powi(7) - 2.0 * x, 0.0, 2.0, 1, 1e-14, 0.0, 10).unwrap();
        assert!((r.value[0] - (32.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_tail() {
        let r = integrate_adaptive(|x, o| o[0] = (-x * x).exp(), 0.0, 30.0, 1, 1e-14, 0.0, 200).unwrap();
        assert!((r.value[0] - 0.5 * PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn vector_valued() {
        let r = integrate_adaptive(
            |x, o| {
                o[0] = x.sin();
                o[1] = x.cos();
            },
            0.0,
            PI,
            2,
            1e-13,
            0.0,
            50,
        )
        .unwrap();
        assert!((r.value[0] - 2.0).abs() < 1e-12);
        assert!(r.value[1].abs() < 1e-12);
    }

    #[test]
    fn reports_failure() {
        let r = integrate_adaptive(|x, o| o[0] = 1.0 / x.sqrt(), 0.0, 1.0, 1, 1e-15, 0.0, 8);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn disk_area_and_gaussian_mass() {
        let s = Sector { r_lo: 0.0, r_hi: 2.0, theta_lo: 0.0, theta_hi: 2.0 * PI };
        let r = integrate_sector(|_, w, acc| acc[0] += w, s, 1, 1e-13).unwrap();
        assert!((r.value[0] - 4.0 * PI).abs() < 1e-11);

        let centre = C64::new(0.7, -0.4);
        let s = Sector { r_lo: 0.0, r_hi: 20.0, theta_lo: 0.0, theta_hi: 2.0 * PI };
        let r = integrate_sector(|z, w, acc| acc[0] += w * (-(z - centre).norm_sqr()).exp() / PI, s, 1, 1e-13)
            .unwrap();
        assert!((r.value[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_moments() {
        let rule = hermite_rule(40);
        let m2: f64 = rule.iter().map(|(x, w)| w * x * x).sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-13);
    }
}
