use ksampler_core::ads::*;
use ksampler_core::autodiff::{ParamStore, Tape};
use ksampler_core::forward::*;
use ksampler_core::pipeline::{gen_phantom, PhantomSpec};
use ksampler_core::schemes::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_exact(lambda: &SamplingSet, r: f64, acs_fraction: f64) {
    let (n1, n2, nf) = (lambda.n1(), lambda.n2(), lambda.nf());
    let target = budget_count(lambda.omega(), r).unwrap();
    let acs = acs_region(n1, n2, nf, lambda.mode(), acs_fraction).unwrap();
    for t in 0..nf {
        assert_eq!(lambda.frame(t).len(), target, "frame {t}");
    }
    assert!(acs.is_subset_of(lambda));
}

#[test]
fn every_scheme_hits_the_budget_exactly() {
    for kind in SchemeKind::ALL {
        let grids: &[(usize, usize)] = match kind.mode() {
            SampleMode::Lines => &[(16, 16), (12, 20), (8, 33)],
            SampleMode::Points => &[(16, 16), (12, 20)],
        };
        for &(n1, n2) in grids {
            for r in [2.0, 4.0, 6.0, 8.0] {
                for policy in [FramePolicy::FrameSpecific, FramePolicy::Unified] {
                    if kind.is_kt() && policy == FramePolicy::Unified {
                        continue;
                    }
                    for seed in 0..10 {
                        let spec = SchemeSpec::new(kind, r, policy);
                        let lambda = generate(&spec, n1, n2, 5, &mut rng(seed)).unwrap();
                        check_exact(&lambda, r, spec.acs_fraction);
                        if policy == FramePolicy::Unified {
                            assert!(lambda.is_unified());
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn kt_variants_interleave() {
    for kind in [SchemeKind::KtEquispaced, SchemeKind::KtGaussian1d, SchemeKind::KtRadial] {
        for r in [2.0, 4.0, 8.0] {
            for seed in 0..50 {
                let spec = SchemeSpec::new(kind, r, FramePolicy::FrameSpecific);
                let lambda = generate(&spec, 16, 16, 6, &mut rng(seed)).unwrap();
                let acs = acs_region(16, 16, 1, kind.mode(), spec.acs_fraction).unwrap();
                let omega = lambda.omega();
                let budget = budget_count(omega, r).unwrap();
                let pool = omega - acs.frame(0).len();
                let need = budget - acs.frame(0).len();
                if pool < 2 * need {
                    continue;
                }
                for t in 1..6 {
                    let shared = lambda
                        .frame(t)
                        .iter()
                        .filter(|&&i| lambda.contains(t - 1, i) && !acs.contains(0, i))
                        .count();
                    assert_eq!(shared, 0, "{kind:?} R={r} seed={seed} frame {t}");
                }
            }
        }
    }
}

#[test]
fn kt_equispaced_shifts_offset_per_frame() {
    let spec = SchemeSpec::new(SchemeKind::KtEquispaced, 4.0, FramePolicy::FrameSpecific);
    let lambda = generate(&spec, 16, 16, 4, &mut rng(1)).unwrap();
    let acs = acs_region(16, 16, 1, SampleMode::Lines, spec.acs_fraction).unwrap();
    let residues: Vec<usize> = (0..4)
        .map(|t| lambda.frame(t).iter().find(|&&c| !acs.contains(0, c)).unwrap() % 4)
        .collect();
    for t in 1..4 {
        assert_eq!(residues[t], (residues[t - 1] + 1) % 4);
    }
}

#[test]
fn gaussian_density_peaks_at_the_center() {
    let mut counts = [0usize; 32];
    for seed in 0..400 {
        let spec = SchemeSpec::new(SchemeKind::Gaussian1d, 4.0, FramePolicy::Unified);
        let lambda = generate(&spec, 8, 32, 1, &mut rng(seed)).unwrap();
        for &c in lambda.frame(0) {
            counts[c] += 1;
        }
    }
    let near: usize = counts[12..20].iter().sum();
    let far: usize = counts[..4].iter().chain(&counts[28..]).sum();
    assert!(near > 2 * far, "near {near} far {far}");
}

#[test]
fn random_scheme_is_roughly_uniform_off_the_acs() {
    let mut counts = [0usize; 32];
    for seed in 0..2000 {
        let spec = SchemeSpec::new(SchemeKind::Random, 4.0, FramePolicy::Unified);
        let lambda = generate(&spec, 8, 32, 1, &mut rng(seed)).unwrap();
        for &c in lambda.frame(0) {
            counts[c] += 1;
        }
    }
    let acs = acs_region(8, 32, 1, SampleMode::Lines, 0.04).unwrap();
    let free: Vec<usize> = (0..32).filter(|&c| !acs.contains(0, c)).map(|c| counts[c]).collect();
    // (8 - 2) picks over 30 free columns: 400 expected per column
    let expected = 2000.0 * 6.0 / 30.0;
    for &c in &free {
        assert!((c as f64 - expected).abs() < 5.0 * expected.sqrt(), "{c}");
    }
}

#[test]
fn radial_spokes_cross_the_center() {
    for (angle, points) in radial_spokes(16, 16, 0.3, 5) {
        assert!(points.contains(&(8 * 16 + 8)), "angle {angle}");
    }
    let spokes = radial_spokes(16, 16, 0.0, 3);
    let d = spokes[1].0 - spokes[0].0;
    assert!((d - GOLDEN_ANGLE).abs() < 1e-12 || (d + std::f64::consts::PI - GOLDEN_ANGLE).abs() < 1e-12);
}

#[test]
fn fixed_seed_reproduces_patterns() {
    let mut spec = SchemeSpec::new(SchemeKind::Gaussian2d, 6.0, FramePolicy::FrameSpecific);
    spec.seed = Some(42);
    let a = generate_seeded(&spec, 16, 16, 3, &mut rng(0)).unwrap();
    let b = generate_seeded(&spec, 16, 16, 3, &mut rng(1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn equispaced_rejects_fractional_acceleration() {
    let spec = SchemeSpec::new(SchemeKind::Equispaced, 4.5, FramePolicy::Unified);
    assert!(generate(&spec, 16, 16, 2, &mut rng(0)).is_err());
}

#[test]
fn infeasible_budget_is_reported() {
    let mut spec = SchemeSpec::new(SchemeKind::Random, 8.0, FramePolicy::Unified);
    spec.acs_fraction = 0.5;
    let err = generate(&spec, 16, 16, 2, &mut rng(0)).unwrap_err();
    assert!(matches!(err, ksampler_core::Error::Budget(_)));
}

#[test]
fn seed_policy_streams() {
    let mut p = SeedPolicy::new(7);
    let a: u64 = p.inference(3).random();
    let _ = p.training();
    let b: u64 = p.inference(3).random();
    assert_eq!(a, b);
    let c: u64 = p.inference(4).random();
    assert_ne!(a, c);
    let t1: u64 = p.training().random();
    let t2: u64 = p.training().random();
    assert_ne!(t1, t2);
    assert_ne!(t1, a);
}

fn ads_setup(cascades: usize, policy: FramePolicy, mode: SampleMode, seed: u64) -> (AdsNet, ParamStore, KSpaceVolume, SensitivityMaps) {
    let p = gen_phantom(&PhantomSpec {
        n1: 8,
        n2: 12,
        nc: 2,
        nf: 3,
        seed,
        ..PhantomSpec::default()
    })
    .unwrap();
    let mut store = ParamStore::new();
    let cfg = AdsConfig {
        cascades,
        policy,
        sampling: mode,
        enc_channels: 2,
        enc_scales: 2,
        mlp_hidden: 16,
        ..AdsConfig::default()
    };
    let net = AdsNet::new(&mut store, "ads", &cfg, [8, 12, 2, 3], &mut rng(seed)).unwrap();
    (net, store, p.y, p.s)
}

#[test]
fn cascades_are_disjoint_and_aggregate_exactly() {
    for cascades in 1..=3 {
        for policy in [FramePolicy::FrameSpecific, FramePolicy::Unified] {
            for mode in [SampleMode::Lines, SampleMode::Points] {
                let (net, store, y, s) = ads_setup(cascades, policy, mode, cascades as u64);
                for r in [2.0, 4.0] {
                    let mut tape = Tape::new();
                    let yv = tape.constant(y.tensor().clone());
                    let sv = tape.constant(s.tensor().clone());
                    let lambda0 = acs_region(8, 12, 3, mode, 0.1).unwrap();
                    let out = net.sample(&mut tape, &store, yv, sv, &lambda0, r, &mut rng(9)).unwrap();
                    assert_eq!(out.cascades.len(), cascades);
                    check_exact(&out.lambda, r, 0.1);
                    let mut union = lambda0.clone();
                    for (m, c) in out.cascades.iter().enumerate() {
                        for other in &out.cascades[m + 1..] {
                            for t in 0..3 {
                                assert!(c.frame(t).iter().all(|&i| !other.contains(t, i)));
                            }
                        }
                        for t in 0..3 {
                            assert!(c.frame(t).iter().all(|&i| !lambda0.contains(t, i)));
                        }
                        union = union.union(c).unwrap();
                    }
                    assert_eq!(union, out.lambda);
                    let support = apply_mask(&out.lambda, &y).unwrap();
                    assert_eq!(tape.value(out.y), support.tensor());
                    assert_eq!(tape.value(out.stages[0]), apply_mask(&lambda0, &y).unwrap().tensor());
                    assert_eq!(out.stages.len(), cascades + 1);
                }
            }
        }
    }
}

#[test]
fn optimized_sampler_budget_and_parameters() {
    let p = gen_phantom(&PhantomSpec::default()).unwrap();
    for (policy, rows) in [(FramePolicy::FrameSpecific, 4), (FramePolicy::Unified, 1)] {
        let mut store = ParamStore::new();
        let opt = OptSampler::new(&mut store, "opt", policy, SampleMode::Lines, 16, 16, 4);
        assert_eq!(store.numel(), rows * 16);
        let mut tape = Tape::new();
        let yv = tape.constant(p.y.tensor().clone());
        let lambda0 = acs_region(16, 16, 4, SampleMode::Lines, 0.04).unwrap();
        for r in [4.0, 6.0, 8.0] {
            let out = opt.sample(&mut tape, &store, yv, &lambda0, r, &mut rng(r as u64)).unwrap();
            check_exact(&out.lambda, r, 0.04);
        }
    }
}

#[test]
fn weighted_allocation_moves_budget_between_frames() {
    let b = compute_budget(16, &[1, 1, 1, 1], 4.0, &Allocation::Weighted(vec![1.0, 2.0, 1.0, 2.0]), 2).unwrap();
    assert_eq!(b.per_frame.iter().sum::<usize>(), 12);
    assert_eq!(b.per_frame, vec![2, 4, 2, 4]);
    for t in 0..4 {
        assert_eq!(b.per_cascade[0][t] + b.per_cascade[1][t], b.per_frame[t]);
    }
}

#[test]
fn ste_boundary_and_analytic_derivative() {
    assert_eq!(ste_backward(&[1.0], &[0.4], &[0.4], STE_SLOPE), vec![2.5]);
    let mut r = rng(5);
    for _ in 0..1000 {
        let (p, u, g): (f64, f64, f64) = (r.random(), r.random(), r.random_range(-2.0..2.0));
        let s = 1.0 / (1.0 + (-10.0 * (p - u)).exp());
        let want = g * 10.0 * s * (1.0 - s);
        assert!((ste_backward(&[g], &[p], &[u], STE_SLOPE)[0] - want).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn rescale_hits_the_target_mean(
        row in proptest::collection::vec(0.0f64..5.0, 2..40),
        free_bits in any::<u64>(),
        target in 0.0f64..1.0,
    ) {
        let free: Vec<bool> = (0..row.len()).map(|i| free_bits >> (i % 64) & 1 == 1 || i == 0).collect();
        let out = rescale(&row, &free, target).unwrap();
        let n_free = free.iter().filter(|&&f| f).count();
        let mean: f64 = out.iter().zip(&free).filter(|(_, &f)| f).map(|(x, _)| x).sum::<f64>() / n_free as f64;
        prop_assert!((mean - target).abs() <= 1e-9);
        prop_assert!(out.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(out.iter().zip(&free).all(|(&x, &f)| f || x == 0.0));
    }

    #[test]
    fn ste_forward_selects_exactly_k(
        p in proptest::collection::vec(0.0f64..1.0, 1..30),
        seed in any::<u64>(),
        frac in 0.0f64..1.0,
    ) {
        let free = vec![true; p.len()];
        let k = (frac * p.len() as f64) as usize;
        let d = ste_forward(&p, &free, k, &mut rng(seed)).unwrap();
        prop_assert_eq!(d.selected.len(), k);
        let mut sorted = d.selected.clone();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
        prop_assert_eq!(d.u.len(), p.len());
    }
}
