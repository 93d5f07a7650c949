use std::f64::consts::PI;

use ksampler_core::forward::*;
use ksampler_core::{fft, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_complex(dims: &[usize], seed: u64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().product();
    Tensor::complex(dims, (0..2 * n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct centered DFT with the origin at index n / 2 on both axes.
fn dft2_oracle(x: &Tensor, inverse: bool) -> Tensor {
    let (n1, n2) = (x.dims()[0], x.dims()[1]);
    let (c1, c2) = ((n1 / 2) as f64, (n2 / 2) as f64);
    let sign = if inverse { 1.0 } else { -1.0 };
    let norm = 1.0 / ((n1 * n2) as f64).sqrt();
    let mut out = Tensor::zeros(&[n1, n2], ksampler_core::Kind::Complex);
    for k1 in 0..n1 {
        for k2 in 0..n2 {
            let (mut re, mut im) = (0.0, 0.0);
            for a in 0..n1 {
                for b in 0..n2 {
                    let phase = sign
                        * 2.0
                        * PI
                        * ((k1 as f64 - c1) * (a as f64 - c1) / n1 as f64 + (k2 as f64 - c2) * (b as f64 - c2) / n2 as f64);
                    let (c, s) = (phase.cos(), phase.sin());
                    let v = x.c(a * n2 + b);
                    re += v.0 * c - v.1 * s;
                    im += v.0 * s + v.1 * c;
                }
            }
            out.set_c(k1 * n2 + k2, (re * norm, im * norm));
        }
    }
    out
}

fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn fft_matches_direct_dft() {
    for (n1, n2) in [(8, 8), (6, 10), (5, 7), (1, 4)] {
        let x = random_complex(&[n1, n2], (n1 * 100 + n2) as u64);
        let y = fft::fft2c(&x, (0, 1)).unwrap();
        assert!(max_diff(&y, &dft2_oracle(&x, false)) <= 1e-10, "{n1}x{n2}");
        let z = fft::ifft2c(&x, (0, 1)).unwrap();
        assert!(max_diff(&z, &dft2_oracle(&x, true)) <= 1e-10, "{n1}x{n2}");
    }
}

#[test]
fn centered_delta_has_flat_spectrum() {
    let mut x = Tensor::zeros(&[8, 8], ksampler_core::Kind::Complex);
    x.set_c(4 * 8 + 4, (1.0, 0.0));
    let y = fft::fft2c(&x, (0, 1)).unwrap();
    for i in 0..64 {
        let v = y.c(i);
        assert!((v.0 - 0.125).abs() < 1e-15 && v.1.abs() < 1e-15);
    }
}

#[test]
fn fft_is_unitary_on_trailing_axes() {
    let x = random_complex(&[4, 6, 3, 2], 7);
    let y = fft::fft2c(&x, (0, 1)).unwrap();
    assert!((x.norm() - y.norm()).abs() < 1e-12);
    let back = fft::ifft2c(&y, (0, 1)).unwrap();
    assert!(max_diff(&x, &back) < 1e-12);
}

fn setup(seed: u64) -> (DynamicImage, SensitivityMaps, SamplingSet) {
    let x = DynamicImage::new(random_complex(&[8, 8, 3], seed)).unwrap();
    let s = SensitivityMaps::new(random_complex(&[8, 8, 2], seed + 1)).unwrap();
    let lambda = SamplingSet::new(SampleMode::Lines, 8, 8, vec![vec![1, 4, 5], vec![0, 4], vec![2, 3, 4, 7]]).unwrap();
    (x, s, lambda)
}

#[test]
fn adjoint_dot_test() {
    for seed in 0..5 {
        let (x, s, lambda) = setup(seed * 10);
        let y = KSpaceVolume::new(random_complex(&[8, 8, 2, 3], seed * 10 + 5)).unwrap();
        let y = apply_mask(&lambda, &y).unwrap();
        let ax = forward_operator(&x, &s, &lambda).unwrap();
        let ahy = sense_reduce(&y, &s).unwrap();
        let lhs = ax.tensor().cdot(y.tensor()).unwrap();
        let rhs = x.tensor().cdot(ahy.tensor()).unwrap();
        let scale = lhs.0.hypot(lhs.1).max(1e-300);
        assert!((lhs.0 - rhs.0).hypot(lhs.1 - rhs.1) / scale <= 1e-10);
    }
}

#[test]
fn apply_mask_is_idempotent_and_zeroes_the_rest() {
    let (x, s, lambda) = setup(3);
    let full = forward_operator(&x, &s, &SamplingSet::full(SampleMode::Lines, 8, 8, 3)).unwrap();
    let once = apply_mask(&lambda, &full).unwrap();
    assert_eq!(apply_mask(&lambda, &once).unwrap(), once);
    let t = once.tensor();
    for i1 in 0..8 {
        for i2 in 0..8 {
            for k in 0..2 {
                for f in 0..3 {
                    let v = t.c(((i1 * 8 + i2) * 2 + k) * 3 + f);
                    if !lambda.contains(f, i2) {
                        assert_eq!(v, (0.0, 0.0));
                    } else {
                        assert_eq!(v, full.tensor().c(((i1 * 8 + i2) * 2 + k) * 3 + f));
                    }
                }
            }
        }
    }
}

#[test]
fn full_sampling_with_normalized_maps_inverts() {
    let (x, s, _) = setup(9);
    let mut tape = ksampler_core::autodiff::Tape::new();
    let sv = tape.constant(s.tensor().clone());
    let sn = tape.rss_normalize(sv).unwrap();
    let s = SensitivityMaps::new(tape.value(sn).clone()).unwrap();
    let y = forward_operator(&x, &s, &SamplingSet::full(SampleMode::Lines, 8, 8, 3)).unwrap();
    let back = sense_reduce(&y, &s).unwrap();
    assert!(max_diff(back.tensor(), x.tensor()) < 1e-12);
}

#[test]
fn acs_regions() {
    let acs = acs_region(16, 16, 2, SampleMode::Lines, 0.04).unwrap();
    assert_eq!(acs.frame(0), &[8]);
    let acs = acs_region(16, 100, 1, SampleMode::Lines, 0.04).unwrap();
    assert_eq!(acs.frame(0), &[48, 49, 50, 51]);
    let acs = acs_region(16, 16, 1, SampleMode::Points, 0.0625).unwrap();
    assert_eq!(acs.frame(0).len(), 16);
    assert!(acs.contains(0, 8 * 16 + 8));
    assert!(acs_region(16, 16, 1, SampleMode::Lines, 0.0).is_err());
}

#[test]
fn budget_floor_convention() {
    assert_eq!(budget_count(16, 8.0).unwrap(), 2);
    assert_eq!(budget_count(16, 6.0).unwrap(), 2);
    assert_eq!(budget_count(100, 3.0).unwrap(), 33);
    assert_eq!(budget_count(256, 4.0).unwrap(), 64);
}

#[test]
fn percentile_interpolates() {
    let v: Vec<f64> = (0..=100).map(f64::from).collect();
    assert!((percentile(&v, 0.995).unwrap() - 99.5).abs() < 1e-12);
    assert_eq!(percentile(&[3.0], 0.5).unwrap(), 3.0);
}

#[test]
fn maps_from_acs_have_unit_rss() {
    use ksampler_core::pipeline::{gen_phantom, PhantomSpec};
    let p = gen_phantom(&PhantomSpec::default()).unwrap();
    let acs = acs_region(16, 16, 4, SampleMode::Lines, 0.25).unwrap();
    let s = estimate_sensitivities(&apply_mask(&acs, &p.y).unwrap()).unwrap();
    for r in s.rss() {
        assert!(r == 0.0 || (r - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn masked_energy_never_exceeds_full(seed in 0u64..1000, cols in proptest::collection::btree_set(0usize..8, 0..8)) {
        let (x, s, _) = setup(seed);
        let lambda = SamplingSet::new(SampleMode::Lines, 8, 8, vec![cols.into_iter().collect(); 3]).unwrap();
        let full = forward_operator(&x, &s, &SamplingSet::full(SampleMode::Lines, 8, 8, 3)).unwrap();
        let part = apply_mask(&lambda, &full).unwrap();
        prop_assert!(part.tensor().norm() <= full.tensor().norm() + 1e-12);
    }

    #[test]
    fn rows_round_trip(seed in 0u64..1000) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<Vec<usize>> = (0..3).map(|_| (0..12).filter(|_| r.random_bool(0.4)).collect()).collect();
        let lambda = SamplingSet::new(SampleMode::Points, 3, 4, frames).unwrap();
        let rows = lambda.to_rows(false);
        prop_assert_eq!(SamplingSet::from_rows(SampleMode::Points, 3, 4, 3, &rows).unwrap(), lambda);
    }
}
