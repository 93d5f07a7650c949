use std::path::Path;

use ksampler::checkpoint;
use ksampler::config::{DataSource, ExperimentConfig};
use ksampler::ktn::{decode, encode, read_tensor, write_tensor};
use ksampler::mask::{from_text, read_mask, to_text, write_mask};
use ksampler::render::{image_pgm, mask_pgm, mask_png};
use ksampler::report::{read_csv, summary_json, write_csv};
use ksampler::Error;
use ksampler_core::forward::{SampleMode, SamplingSet};
use ksampler_core::metrics::{MetricsReport, ScanMetrics, ScanRecord};
use ksampler_core::pipeline::{gen_phantom, PhantomSpec, SamplerConfig};
use ksampler_core::schemes::{generate, FramePolicy, SchemeKind, SchemeSpec};
use ksampler_core::{Kind, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ktn_bytes_follow_the_layout() {
    let t = Tensor::complex(&[1, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let mut bytes = Vec::new();
    encode(&t, &mut bytes).unwrap();
    assert_eq!(&bytes[..4], b"KTN1");
    assert_eq!(bytes[4], 1);
    assert_eq!(bytes[5], 2);
    assert_eq!(&bytes[6..10], &1u32.to_le_bytes());
    assert_eq!(&bytes[10..14], &2u32.to_le_bytes());
    assert_eq!(&bytes[14..22], &1.0f64.to_le_bytes());
    assert_eq!(&bytes[38..46], &3.0f64.to_le_bytes());
    assert_eq!(bytes.len(), 14 + 4 * 8);
    assert_eq!(decode(&bytes[..]).unwrap().unwrap(), t);
}

#[test]
fn ktn_round_trips_phantom_volumes() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen_phantom(&PhantomSpec::default()).unwrap();
    let path = dir.path().join("y.ktn");
    write_tensor(&path, p.y.tensor()).unwrap();
    let back = read_tensor(&path).unwrap();
    assert_eq!(&back, p.y.tensor());
    assert_eq!(back.dims(), &[16, 16, 2, 4]);

    let r = Tensor::real(&[3], vec![f64::MIN_POSITIVE, -0.0, 1e300]).unwrap();
    write_tensor(&path, &r).unwrap();
    let back = read_tensor(&path).unwrap();
    assert_eq!(back.kind(), Kind::Real);
    assert!(back.data().iter().zip(r.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn ktn_rejects_malformed_files() {
    assert!(decode(&b"KTN2\x00\x00"[..]).unwrap().is_err());
    assert!(decode(&b"KTN1\x07\x00"[..]).unwrap().is_err());
    let mut short = Vec::new();
    encode(&Tensor::real(&[2], vec![1.0, 2.0]).unwrap(), &mut short).unwrap();
    short.pop();
    assert!(decode(&short[..]).unwrap().is_err());
    assert!(decode(&b"KT"[..]).is_err());
}

#[test]
fn mask_text_round_trips_every_scheme() {
    let dir = tempfile::tempdir().unwrap();
    for kind in SchemeKind::ALL {
        let spec = SchemeSpec::new(kind, 4.0, FramePolicy::FrameSpecific);
        let lambda = generate(&spec, 16, 12, 3, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let path = dir.path().join(format!("{}.mask", kind.name()));
        write_mask(&path, &lambda).unwrap();
        assert_eq!(read_mask(&path).unwrap(), lambda);
    }
}

#[test]
fn mask_text_format() {
    let lambda = SamplingSet::new(SampleMode::Lines, 4, 6, vec![vec![5, 1], vec![], vec![0, 2, 3]]).unwrap();
    assert_eq!(to_text(&lambda), "line1d 4 6 3\n1 5\n\n0 2 3\n");
    assert!(from_text("line1d 4 6 1\n7\n").is_err());
    assert!(from_text("line1d 4 6\n1\n").is_err());
    assert!(from_text("line1d 4 6 1\n1\n2\n").is_err());
    assert!(from_text("cube 4 6 1\n1\n").is_err());
}

#[test]
fn renders_have_the_strip_layout() {
    let dir = tempfile::tempdir().unwrap();
    let lambda = SamplingSet::new(SampleMode::Lines, 3, 4, vec![vec![1], vec![2]]).unwrap();
    let pgm = dir.path().join("m.pgm");
    mask_pgm(&pgm, &lambda).unwrap();
    let bytes = std::fs::read(&pgm).unwrap();
    let header = b"P5\n9 3\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    let px = &bytes[header.len()..];
    assert_eq!(px.len(), 27);
    assert_eq!(&px[..9], &[0, 255, 0, 0, 96, 0, 0, 255, 0]);

    let png = dir.path().join("m.png");
    mask_png(&png, &lambda).unwrap();
    assert_eq!(&std::fs::read(&png).unwrap()[1..4], b"PNG");

    let p = gen_phantom(&PhantomSpec::default()).unwrap();
    let img = dir.path().join("x.pgm");
    image_pgm(&img, &p.x).unwrap();
    let bytes = std::fs::read(&img).unwrap();
    assert!(bytes.starts_with(b"P5\n67 16\n255\n"));
    assert!(bytes.contains(&255));
}

fn sample_report() -> MetricsReport {
    let mut r = MetricsReport::default();
    for (id, ssim) in [(2u64, 0.8), (0, 0.1 + 0.2), (1, 0.95)] {
        r.push(ScanRecord {
            scan_id: id,
            r: 8.0,
            scheme: "ads-line1d-unified".into(),
            metrics: ScanMetrics {
                ssim,
                psnr: 30.0 + id as f64 / 3.0,
                nmse: 1.0 / 7.0,
            },
        });
    }
    r
}

#[test]
fn csv_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let report = sample_report();
    write_csv(&path, &report).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("scan_id,R,scheme,ssim,psnr,nmse\n0,8,"));
    let back = read_csv(&path).unwrap();
    let sorted: Vec<ScanRecord> = report.sorted().into_iter().cloned().collect();
    assert_eq!(back.records, sorted);

    std::fs::write(&path, "id,R\n1,2\n").unwrap();
    assert!(matches!(read_csv(&path), Err(Error::Format { .. })));
}

#[test]
fn summary_has_mean_and_std() {
    let v = summary_json(&sample_report());
    let ssim = &v["overall"]["ssim"];
    let mean = (0.1 + 0.2 + 0.8 + 0.95) / 3.0;
    assert!((ssim["mean"].as_f64().unwrap() - mean).abs() < 1e-15);
    assert!(ssim["std"].as_f64().unwrap() > 0.0);
    assert_eq!(v["by_R"][0]["count"], 3);
}

#[test]
fn checkpoints_round_trip() {
    use ksampler_core::pipeline::{E2eModel, ModelConfig};
    let dir = tempfile::tempdir().unwrap();
    let model = E2eModel::new(&ModelConfig::default(), [16, 16, 2, 4], 7).unwrap();
    checkpoint::save(dir.path(), &model.store).unwrap();
    let loaded = checkpoint::load(dir.path()).unwrap();
    let mut other = E2eModel::new(&ModelConfig::default(), [16, 16, 2, 4], 8).unwrap();
    other.store.load_from(&loaded).unwrap();
    assert!(other.store.iter().zip(model.store.iter()).all(|(a, b)| a == b));

    let manifest = std::fs::read_to_string(dir.path().join(checkpoint::MANIFEST)).unwrap();
    assert_eq!(manifest.lines().count(), model.store.len());

    // A model of another shape refuses the checkpoint.
    let mut small = E2eModel::new(&ModelConfig::default(), [16, 16, 2, 2], 8).unwrap();
    assert!(small.store.load_from(&loaded).is_err());

    std::fs::write(dir.path().join("t0000.ktn"), b"junk").unwrap();
    assert!(checkpoint::load(dir.path()).is_err());
}

#[test]
fn config_parsing() {
    let path = Path::new("/exp/a.cfg");
    let cfg = ExperimentConfig::parse(
        path,
        "# comment\nsampler = scheme\nscheme = kt-equispaced\nsteps = 10  # inline\nr_train = 8\nphantoms = 12\nout_dir = runs/a\n",
    )
    .unwrap();
    assert_eq!(cfg.name, "a");
    assert_eq!(
        cfg.model.sampler,
        SamplerConfig::Scheme {
            kind: SchemeKind::KtEquispaced,
            policy: FramePolicy::FrameSpecific
        }
    );
    assert_eq!(cfg.train.steps, 10);
    assert_eq!(cfg.train.r_values, vec![8.0]);
    assert_eq!(cfg.out_dir, Path::new("/exp/runs/a"));
    assert!(matches!(cfg.data, DataSource::Phantoms { count: 12, .. }));

    let defaults = ExperimentConfig::parse(path, "").unwrap();
    assert_eq!(defaults.train.lr.warmup, 20);
    assert_eq!(defaults.train.lr.decay_every, 100);
    assert_eq!(defaults.r_eval, vec![4.0, 6.0, 8.0]);

    for (text, line) in [
        ("steps = 10\nbogus = 1\n", 2),
        ("steps = ten\n", 1),
        ("sampler = magic\n", 1),
        ("no equals sign\n", 1),
        ("steps = 1\nsteps = 2\n", 2),
    ] {
        match ExperimentConfig::parse(path, text) {
            Err(e @ Error::Config { line: l, .. }) => {
                assert_eq!(l, line, "{text:?}");
                assert_eq!(e.exit_code(), 2);
            }
            other => panic!("{text:?}: {other:?}"),
        }
    }
    assert!(ExperimentConfig::parse(path, "r_eval = 1\n").is_err());
    assert!(ExperimentConfig::parse(path, "steps = 0\n").is_err());
}

#[test]
fn exit_codes_follow_error_kinds() {
    use ksampler_core::Error as C;
    assert_eq!(Error::Core(C::Numeric("nan".into())).exit_code(), 3);
    assert_eq!(Error::Core(C::Budget("x".into())).exit_code(), 4);
    assert_eq!(Error::Core(C::Invalid("x".into())).exit_code(), 2);
    assert_eq!(Error::format(Path::new("f"), "x").exit_code(), 1);
}
