//! Almost stochastic order test.
//!
//! `epsilon_min(A, B)` bounds the fraction of the quantile range on which
//! scores of `A` fall below those of `B`. Values below 0.5 mean `A` almost
//! stochastically dominates `B`.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
/// Quantile grid spacing for the violation integral.
pub const QUANTILE_STEP: f64 = 0.005;

/// Inverse standard normal CDF (Acklam's rational approximation refined by
/// one Halley step).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let low = 0.024_25;
    let x = if p < low {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2) - p;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(x * x / 2.0);
    x - u / (1.0 + x * u / 2.0)
}

/// Empirical quantile function of sorted data: `x[ceil(t n) - 1]`.
fn quantile(sorted: &[f64], t: f64) -> f64 {
    let n = sorted.len();
    let k = libm::ceil(t * n as f64) as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Fraction of the squared quantile difference where `A` lies below `B`;
/// 0.5 when the quantile functions coincide.
pub fn violation_ratio(sorted_a: &[f64], sorted_b: &[f64]) -> f64 {
    let steps = libm::round(1.0 / QUANTILE_STEP) as usize;
    let (mut violated, mut total) = (0.0, 0.0);
    for k in 0..steps {
        let t = (k as f64 + 0.5) * QUANTILE_STEP;
        let d = quantile(sorted_a, t) - quantile(sorted_b, t);
        let sq = d * d;
        total += sq;
        if d < 0.0 {
            violated += sq;
        }
    }
    if total == 0.0 {
        0.5
    } else {
        violated / total
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn resample<R: Rng + ?Sized>(v: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// `epsilon_min` of scores `a` against `b` at level `alpha` with
/// `bootstrap` resamples.
pub fn aso<R: Rng + ?Sized>(a: &[f64], b: &[f64], alpha: f64, bootstrap: usize, rng: &mut R) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        bail!(Invalid, "ASO needs at least two scores per side, got {} and {}", a.len(), b.len());
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        bail!(Numeric, "ASO scores must be finite");
    }
    if !(alpha > 0.0 && alpha < 1.0) || bootstrap < 2 {
        bail!(Invalid, "alpha must lie in (0, 1) and bootstrap must be >= 2");
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let eps = violation_ratio(&sa, &sb);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let scale = libm::sqrt(n * m / (n + m));
    let samples: Vec<f64> = (0..bootstrap)
        .map(|_| {
            let ra = resample(a, rng);
            let rb = resample(b, rng);
            scale * (violation_ratio(&ra, &rb) - eps)
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / samples.len() as f64;
    let sigma = libm::sqrt(var);
    Ok((eps - sigma / scale * inverse_normal_cdf(alpha)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_normal_reference_values() {
        assert!((inverse_normal_cdf(0.05) + 1.644_853_626_951_472_2).abs() < 1e-13);
        assert!((inverse_normal_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
        assert!(inverse_normal_cdf(0.5).abs() < 1e-15);
        assert!((inverse_normal_cdf(1e-4) + 3.719_016_485_455_68).abs() < 1e-11);
    }

    #[test]
    fn disjoint_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..50).map(|i| 2.0 + i as f64 / 50.0).collect();
        let b: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        assert!(aso(&a, &b, DEFAULT_ALPHA, 200, &mut rng).unwrap() < 0.05);
        assert!(aso(&b, &a, DEFAULT_ALPHA, 200, &mut rng).unwrap() > 0.95);
        assert!(aso(&a[..1], &b, DEFAULT_ALPHA, 200, &mut rng).is_err());
    }
}
