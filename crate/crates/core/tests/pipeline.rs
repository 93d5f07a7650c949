use ksampler_core::ads::AdsConfig;
use ksampler_core::autodiff::ParamStore;
use ksampler_core::forward::SampleMode;
use ksampler_core::pipeline::*;
use ksampler_core::schemes::{FramePolicy, SchemeKind, SeedPolicy};
use ksampler_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zero_filled() -> ModelConfig {
    ModelConfig {
        sampler: SamplerConfig::Scheme {
            kind: SchemeKind::Random,
            policy: FramePolicy::Unified,
        },
        recon: None,
        smp: None,
        ..ModelConfig::default()
    }
}

fn small_set(count: usize) -> Dataset {
    Dataset::phantoms(&PhantomSpec::default(), count, 0.04).unwrap()
}

#[test]
fn schedule_values() {
    let s = LrSchedule::desk(100.0);
    assert_eq!(s.at(0), 1e-3);
    assert_eq!(s.at(s.warmup), 3e-3);
    assert!((s.at(s.decay_every) - 2.4e-3).abs() < 1e-15);
    assert!(s.at(s.warmup - 1) < 3e-3);
    let full = LrSchedule::desk(1.0);
    assert_eq!((full.warmup, full.decay_every), (2000, 10000));
}

#[test]
fn adam_first_step_is_lr_times_sign() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::real(&[3], vec![1.0, -2.0, 0.5]).unwrap());
    let mut tape = ksampler_core::autodiff::Tape::new();
    let w = tape.param(&store, id);
    let sq = tape.square(w).unwrap();
    let loss = tape.sum(sq).unwrap();
    let grads = tape.backward(loss).unwrap();
    store.zero_grad();
    store.accumulate(&tape, &grads);
    let mut adam = Adam::new(&store);
    adam.step(&mut store, 0.1);
    let v = store.value(id).data();
    for (got, want) in v.iter().zip([0.9, -1.9, 0.4]) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn split_proportions() {
    let d = small_set(10);
    assert_eq!((d.train.len(), d.val.len(), d.test.len()), (6, 2, 2));
    assert_eq!(d.dims(), Some([16, 16, 2, 4]));
    let ids: Vec<u64> = d.test.iter().map(|s| s.id).collect();
    assert_eq!(ids, vec![8, 9]);
}

#[test]
fn full_sampling_control_is_near_exact() {
    let d = small_set(5);
    let cfg = ModelConfig {
        sampler: SamplerConfig::Scheme {
            kind: SchemeKind::Random,
            policy: FramePolicy::Unified,
        },
        recon: Some(Default::default()),
        smp: None,
        ..ModelConfig::default()
    };
    let mut model = E2eModel::new(&cfg, d.dims().unwrap(), 0).unwrap();
    // A zero denoiser leaves x0 = A^H y untouched at full sampling.
    for id in model.store.ids().collect::<Vec<_>>() {
        if model.store.name(id).contains("denoiser") {
            model.store.value_mut(id).data_mut().fill(0.0);
        }
    }
    let all: Vec<Scan> = d.train.iter().chain(&d.val).chain(&d.test).cloned().collect();
    let report = evaluate(&model, &all, 1.0, &SeedPolicy::new(0)).unwrap();
    for rec in &report.records {
        assert!(rec.metrics.ssim > 0.99, "scan {}: {}", rec.scan_id, rec.metrics.ssim);
    }
}

#[test]
fn more_data_helps_zero_filled() {
    let d = small_set(10);
    let model = E2eModel::new(&zero_filled(), d.dims().unwrap(), 0).unwrap();
    let seeds = SeedPolicy::new(3);
    let scans: Vec<Scan> = d.train.iter().chain(&d.val).cloned().collect();
    let r4 = evaluate(&model, &scans, 4.0, &seeds).unwrap().summary();
    let r8 = evaluate(&model, &scans, 8.0, &seeds).unwrap().summary();
    assert!(r8.ssim.mean < r4.ssim.mean, "{} vs {}", r8.ssim.mean, r4.ssim.mean);
}

#[test]
fn evaluation_is_repeatable() {
    let d = small_set(5);
    let cfg = ModelConfig {
        sampler: SamplerConfig::Adaptive(AdsConfig {
            policy: FramePolicy::Unified,
            ..AdsConfig::default()
        }),
        ..ModelConfig::default()
    };
    let model = E2eModel::new(&cfg, d.dims().unwrap(), 2).unwrap();
    let seeds = SeedPolicy::new(1);
    let a = evaluate(&model, &d.test, 8.0, &seeds).unwrap();
    let b = evaluate(&model, &d.test, 8.0, &seeds).unwrap();
    assert_eq!(a, b);
}

#[test]
fn compare_harness_examples() {
    let d = small_set(15);
    let model = E2eModel::new(&zero_filled(), d.dims().unwrap(), 0).unwrap();
    let seeds = SeedPolicy::new(5);
    let scans: Vec<Scan> = d.train.iter().chain(&d.val).chain(&d.test).cloned().collect();
    let r4 = evaluate(&model, &scans, 4.0, &seeds).unwrap();
    let r8 = evaluate(&model, &scans, 8.0, &seeds).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cmp = compare(&[("R4".into(), r4.clone()), ("R8".into(), r8.clone())], 0.05, 500, &mut rng).unwrap();
    assert_eq!(cmp.rows.len(), 2);
    assert_eq!(cmp.best, 0);
    assert!(cmp.aso[0][1] < 0.5, "{:?}", cmp.aso);
    assert!(cmp.aso[0][0] >= 0.5 && cmp.aso[1][1] >= 0.5);

    let same = compare(&[("a".into(), r4.clone()), ("b".into(), r4.clone())], 0.05, 500, &mut rng).unwrap();
    assert!(same.aso[0][1] >= 0.5 && same.aso[1][0] >= 0.5);
    assert!(same.not_dominated.iter().all(|&f| f));

    let mut both = r4.clone();
    both.records.extend(r8.records.iter().cloned());
    let mut other = both.clone();
    for rec in &mut other.records {
        rec.metrics.ssim *= 0.5;
    }
    let cmp = compare(&[("x".into(), both), ("y".into(), other)], 0.05, 100, &mut rng).unwrap();
    assert_eq!(cmp.rows.len(), 2 * 2);

    let short = ksampler_core::metrics::MetricsReport {
        records: r4.records[1..].to_vec(),
    };
    assert!(compare(&[("a".into(), r4), ("b".into(), short)], 0.05, 100, &mut rng).is_err());
}

#[test]
fn training_reduces_the_loss() {
    let d = small_set(10);
    let cfg = ModelConfig {
        sampler: SamplerConfig::Adaptive(AdsConfig {
            policy: FramePolicy::Unified,
            ..AdsConfig::default()
        }),
        ..ModelConfig::default()
    };
    let mut model = E2eModel::new(&cfg, d.dims().unwrap(), 1).unwrap();
    let tc = TrainConfig {
        steps: 300,
        val_every: 100,
        ..TrainConfig::default()
    };
    let report = Trainer::run(&mut model, &d, &tc).unwrap();
    let late: f64 = report.losses[280..].iter().sum::<f64>() / 20.0;
    assert!(late <= 0.7 * report.losses[10], "step 10: {} late: {}", report.losses[10], late);
    assert_eq!(report.validation.len(), 3);
    assert!(report.validation.iter().any(|&(s, v)| s == report.best_step && v == report.best_ssim));
}

#[test]
fn identical_seeds_reproduce_training() {
    let d = small_set(5);
    let cfg = ModelConfig {
        sampler: SamplerConfig::Adaptive(AdsConfig {
            policy: FramePolicy::FrameSpecific,
            ..AdsConfig::default()
        }),
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        steps: 12,
        val_every: 6,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model = E2eModel::new(&cfg, d.dims().unwrap(), 4).unwrap();
        let rep = Trainer::run(&mut model, &d, &tc).unwrap();
        let eval = evaluate(&model, &d.test, 6.0, &SeedPolicy::new(9)).unwrap();
        (rep.losses, rep.validation, model.store, eval)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.3, b.3);
    for ((na, ta), (nb, tb)) in a.2.iter().zip(b.2.iter()) {
        assert_eq!(na, nb);
        assert_eq!(ta, tb);
    }
}

#[test]
fn optimized_sampler_learns_frame_specific_rows() {
    let d = small_set(5);
    let cfg = ModelConfig {
        sampler: SamplerConfig::Optimized {
            policy: FramePolicy::FrameSpecific,
            mode: SampleMode::Lines,
        },
        ..ModelConfig::default()
    };
    let mut model = E2eModel::new(&cfg, d.dims().unwrap(), 0).unwrap();
    let id = model.store.find("opt.logits").unwrap();
    assert_eq!(model.store.value(id).dims(), &[4, 16]);
    let tc = TrainConfig {
        steps: 40,
        val_every: 40,
        ..TrainConfig::default()
    };
    Trainer::run(&mut model, &d, &tc).unwrap();
    let p = model.store.value(id).data();
    assert!((1..4).any(|t| p[t * 16..(t + 1) * 16] != p[..16]));
}

#[test]
fn equispaced_initialization() {
    let d = small_set(5);
    let cfg = ModelConfig {
        sampler: SamplerConfig::Adaptive(AdsConfig {
            policy: FramePolicy::FrameSpecific,
            ..AdsConfig::default()
        }),
        init: InitPattern::Equispaced { offset: 4.0 },
        ..ModelConfig::default()
    };
    let model = E2eModel::new(&cfg, d.dims().unwrap(), 0).unwrap();
    let mut tape = ksampler_core::autodiff::Tape::new();
    let out = e2e_forward(&model, &mut tape, &d.test[0], 8.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(out.lambda0.is_subset_of(&out.lambda));
    for t in 0..4 {
        assert_eq!(out.lambda0.frame(t).len(), 1);
        assert_eq!(out.lambda.frame(t).len(), 2);
    }
    assert!(e2e_forward(&model, &mut tape, &d.test[0], 5.5, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn nan_input_is_rejected_before_training() {
    let t = Tensor::full(&[4, 4, 1, 2], f64::NAN).to_complex();
    assert!(ksampler_core::forward::KSpaceVolume::new(t).is_err());
}
