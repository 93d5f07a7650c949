use ksampler_core::autodiff::{gradcheck, gradcheck_params, MaskLayout, RescaleRow, Tape, Var};
use ksampler_core::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn real(dims: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = dims.iter().product();
    Tensor::real(dims, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn positive(dims: &[usize], seed: u64) -> Tensor {
    real(dims, seed).map(|x| 0.3 + x.abs())
}

fn complex(dims: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n: usize = dims.iter().product();
    Tensor::complex(dims, (0..2 * n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces any node to a scalar through fixed random weights.
fn project(tape: &mut Tape, v: Var) -> Result<Var> {
    let v = if tape.value(v).is_complex() { tape.to_channels(v)? } else { v };
    let dims = tape.value(v).dims().to_vec();
    let w = tape.constant(real(&dims, 999));
    let p = tape.mul(v, w)?;
    tape.sum(p)
}

fn check<F>(name: &str, inputs: &[Tensor], f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let err = gradcheck(inputs, H, |t, v| {
        let out = f(t, v)?;
        project(t, out)
    })
    .unwrap();
    assert!(err < TOL, "{name}: relative error {err:e}");
}

#[test]
fn elementwise_primitives() {
    let a = real(&[3, 4], 1);
    let b = real(&[3, 4], 2);
    let pos = positive(&[3, 4], 3);
    check("add", &[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]));
    check("sub", &[a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]));
    check("mul", &[a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]));
    check("div", &[a.clone(), pos.clone()], |t, v| t.div(v[0], v[1]));
    check("scale", &[a.clone()], |t, v| Ok(t.scale(v[0], -2.5)));
    check("add_const", &[a.clone()], |t, v| t.add_const(v[0], 0.7));
    check("scale_by", &[complex(&[2, 3], 4), Tensor::scalar(0.6)], |t, v| t.scale_by(v[0], v[1]));
    check("abs", &[pos.map(|x| -x)], |t, v| t.abs(v[0]));
    check("sqrt", &[pos.clone()], |t, v| t.sqrt(v[0]));
    check("square", &[a.clone()], |t, v| t.square(v[0]));
    let away = a.map(|x| if x.abs() < 0.1 { x + 0.3 } else { x });
    check("relu", &[away.clone()], |t, v| t.relu(v[0]));
    check("leaky_relu", &[away], |t, v| t.leaky_relu(v[0], 0.01));
    check("softplus", &[a.clone()], |t, v| t.softplus(v[0]));
    check("sigmoid", &[a.clone()], |t, v| t.sigmoid(v[0], 10.0));
    check("sum", &[a.clone()], |t, v| t.sum(v[0]));
    check("mean", &[a.clone()], |t, v| t.mean(v[0]));
}

#[test]
fn complex_primitives() {
    let a = complex(&[3, 4], 5);
    let b = complex(&[3, 4], 6);
    check("cmul", &[a.clone(), b.clone()], |t, v| t.cmul(v[0], v[1]));
    check("cmul_conj", &[a.clone(), b.clone()], |t, v| t.cmul_conj(v[0], v[1]));
    check("cabs", &[a.clone()], |t, v| t.cabs(v[0]));
    check("complex add", &[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]));
    check("to_channels", &[a.clone()], |t, v| t.to_channels(v[0]));
    check("from_channels", &[real(&[2, 3, 4], 7)], |t, v| t.from_channels(v[0]));
    let img = complex(&[4, 6, 2], 8);
    check("fft2c", &[img.clone()], |t, v| t.fft2c(v[0], (0, 1)));
    check("ifft2c", &[img.clone()], |t, v| t.ifft2c(v[0], (0, 1)));
    check("fft2c odd", &[complex(&[3, 5], 9)], |t, v| t.fft2c(v[0], (0, 1)));
}

#[test]
fn shape_primitives() {
    let a = real(&[2, 3, 4], 10);
    check("sum_axis", &[a.clone()], |t, v| t.sum_axis(v[0], 1));
    check("reshape", &[a.clone()], |t, v| t.reshape(v[0], &[6, 4]));
    check("gather", &[a.clone()], |t, v| t.gather(v[0], vec![3, 3, 0, 23, 7], &[5]));
    check("permute", &[a.clone()], |t, v| t.permute(v[0], &[2, 0, 1]));
    check("concat_channels", &[real(&[2, 1, 3], 11), real(&[2, 2, 3], 12)], |t, v| {
        t.concat_channels(v[0], v[1])
    });
    check("mask_const", &[complex(&[2, 3], 13)], |t, v| t.mask_const(v[0], vec![1.0, 0.0, 0.5, 1.0, 0.0, 2.0]));
}

#[test]
fn network_primitives() {
    check("linear", &[real(&[5], 14), real(&[3, 5], 15), real(&[3], 16)], |t, v| t.linear(v[0], v[1], v[2]));
    check(
        "conv",
        &[real(&[1, 2, 2, 4, 3], 17), real(&[3, 2, 3, 3, 3], 18), real(&[3], 19)],
        |t, v| t.conv(v[0], v[1], v[2]),
    );
    check("conv 1x1", &[real(&[2, 3, 1, 2, 2], 20), real(&[1, 3, 1, 1, 1], 21), real(&[1], 22)], |t, v| {
        t.conv(v[0], v[1], v[2])
    });
    // Distinct values keep the pooled maxima away from ties.
    let mut r = rng(23);
    let mut vals: Vec<f64> = (0..2 * 2 * 4 * 4).map(|i| i as f64 * 0.1).collect();
    use rand::seq::SliceRandom;
    vals.shuffle(&mut r);
    let pool = Tensor::real(&[1, 2, 2, 4, 4], vals).unwrap();
    check("maxpool", &[pool.clone()], |t, v| t.maxpool(v[0], [1, 2, 2]));
    check("maxpool depth", &[pool], |t, v| t.maxpool(v[0], [2, 2, 2]));
    check("instance_norm", &[real(&[2, 2, 3, 3], 24)], |t, v| t.instance_norm(v[0], 1e-5));
    check("box_axis", &[real(&[6, 5, 2], 25)], |t, v| t.box_axis(v[0], 1, 3));
    let kernel: Vec<f64> = real(&[9], 26).into_data();
    check("filter2d", &[real(&[5, 6, 2], 27)], |t, v| t.filter2d(v[0], kernel.clone(), 3));
}

#[test]
fn mri_primitives() {
    let y = complex(&[3, 4, 2, 2], 28);
    let lines = positive(&[2, 4], 29);
    check("mask_kspace lines", &[y.clone(), lines], |t, v| t.mask_kspace(v[0], v[1], MaskLayout::Lines));
    let points = positive(&[1, 12], 30);
    check("mask_kspace points", &[y.clone(), points], |t, v| t.mask_kspace(v[0], v[1], MaskLayout::Points));
    let x = complex(&[3, 4, 2], 31);
    let s = complex(&[3, 4, 2], 32);
    check("coil_expand", &[x, s.clone()], |t, v| t.coil_expand(v[0], v[1]));
    check("coil_combine", &[y, s.clone()], |t, v| t.coil_combine(v[0], v[1]));
    check("rss_normalize", &[s], |t, v| t.rss_normalize(v[0]));
}

#[test]
fn sampling_primitives() {
    let p = Tensor::real(&[2, 5], vec![0.3, 0.9, 0.5, 1.2, 0.1, 0.7, 0.2, 0.05, 0.4, 0.6]).unwrap();
    let rows = vec![
        RescaleRow {
            free: vec![true, false, true, true, true],
            target_mean: 0.2,
        },
        RescaleRow {
            free: vec![true, true, true, false, true],
            target_mean: 0.8,
        },
    ];
    check("rescale", &[p.clone()], |t, v| t.rescale(v[0], rows.clone()));

    // With the smooth forward value the straight-through gradient is exact.
    let u: Vec<f64> = vec![0.2, 0.5, 0.45, 0.9, 0.15, 0.65, 0.1, 0.3, 0.6, 0.5];
    check("ste", &[p], |t, v| {
        let value = t.value(v[0]).zip_map(&Tensor::real(&[2, 5], u.clone()).unwrap(), |p, u| {
            1.0 / (1.0 + (-10.0 * (p - u)).exp())
        })?;
        t.ste(v[0], value, u.clone(), 10.0)
    });
}

#[test]
fn composed_pipeline() {
    use ksampler_core::ads::{AdsConfig, SteMode};
    use ksampler_core::forward::SmpConfig;
    use ksampler_core::pipeline::*;
    use ksampler_core::recon::ReconConfig;
    use ksampler_core::schemes::FramePolicy;

    let spec = PhantomSpec {
        n1: 8,
        n2: 8,
        nc: 2,
        nf: 2,
        seed: 3,
        ..PhantomSpec::default()
    };
    let p = gen_phantom(&spec).unwrap();
    let scan = Scan::new(0, p.y, p.x, p.s, 0.1).unwrap();
    for policy in [FramePolicy::Unified, FramePolicy::FrameSpecific] {
        let cfg = ModelConfig {
            sampler: SamplerConfig::Adaptive(AdsConfig {
                policy,
                enc_channels: 2,
                enc_scales: 2,
                mlp_hidden: 8,
                ste: SteMode::Surrogate,
                ..AdsConfig::default()
            }),
            recon: Some(ReconConfig { steps: 2, width: 4, depth: 2 }),
            smp: Some(SmpConfig { channels: vec![2, 4] }),
            ..ModelConfig::default()
        };
        let mut model = E2eModel::new(&cfg, scan.dims(), 5).unwrap();
        // Zero-initialized output layers would hide the upstream gradients.
        for id in model.store.ids().collect::<Vec<_>>() {
            let n = model.store.value(id).data().len();
            if model.store.value(id).data().iter().all(|&x| x == 0.0) {
                let fill = real(&[n], id.index() as u64);
                for (d, f) in model.store.value_mut(id).data_mut().iter_mut().zip(fill.data()) {
                    *d = 0.05 * f;
                }
            }
        }
        let err = gradcheck_params(&model.store, 1e-5, 2, |tape, store| {
            let mut m = model.clone();
            m.store = store.clone();
            let mut r = rng(11);
            let out = e2e_forward(&m, tape, &scan, 4.0, &mut r)?;
            e2e_loss(&m, tape, &out)
        })
        .unwrap();
        assert!(err < 1e-3, "{policy:?}: relative error {err:e}");
    }
}
