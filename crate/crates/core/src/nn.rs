//! Small network building blocks on top of the tape.
//!
//! Convolutional blocks work on five-axis `(B, C, D, H, W)` values; 2D
//! blocks keep `D = 1` and use `1 x 3 x 3` kernels.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{bail, Result};
use crate::tensor::Tensor;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;

fn uniform<R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound).collect()
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    /// Weights and bias drawn from `U(-1/sqrt(n_in), 1/sqrt(n_in))`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / libm::sqrt(n_in as f64);
        let w = Tensor::real(&[n_out, n_in], uniform(rng, n_in * n_out, bound)).expect("dims");
        let b = Tensor::real(&[n_out], uniform(rng, n_out, bound)).expect("dims");
        Self {
            w: store.add(format!("{name}.weight"), w),
            b: store.add(format!("{name}.bias"), b),
            n_in,
            n_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let flat = tape.reshape(x, &[self.n_in])?;
        tape.linear(flat, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
}

impl Conv {
    /// `kernel` is `[kd, kh, kw]`, e.g. `[3, 3, 3]` or `[1, 3, 3]`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        rng: &mut R,
    ) -> Self {
        let fan_in = cin * kernel.iter().product::<usize>();
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        let dims = [cout, cin, kernel[0], kernel[1], kernel[2]];
        let w = Tensor::real(&dims, uniform(rng, cout * fan_in, bound)).expect("dims");
        let b = Tensor::real(&[cout], uniform(rng, cout, bound)).expect("dims");
        Self {
            w: store.add(format!("{name}.weight"), w),
            b: store.add(format!("{name}.bias"), b),
            cin,
            cout,
        }
    }

    /// Same as [`Conv::new`] with all weights and biases at zero.
    pub fn zeroed(store: &mut ParamStore, name: &str, cin: usize, cout: usize, kernel: [usize; 3]) -> Self {
        let dims = [cout, cin, kernel[0], kernel[1], kernel[2]];
        Self {
            w: store.add(format!("{name}.weight"), Tensor::full(&dims, 0.0)),
            b: store.add(format!("{name}.bias"), Tensor::full(&[cout], 0.0)),
            cin,
            cout,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.conv(x, w, b)
    }
}

/// 2x pooling on every spatial axis whose extent allows it; extent-1 axes
/// pass through.
pub fn pool2(tape: &mut Tape, x: Var) -> Result<Var> {
    let d = tape.value(x).dims().to_vec();
    let k = [d[2].min(2), d[3].min(2), d[4].min(2)];
    tape.maxpool(x, k)
}

/// Nearest-neighbour upsampling of `(B, C, D, H, W)` to the given spatial size.
pub fn upsample_to(tape: &mut Tape, x: Var, size: [usize; 3]) -> Result<Var> {
    let d = tape.value(x).dims().to_vec();
    let [od, oh, ow] = size;
    let mut index = Vec::with_capacity(d[0] * d[1] * od * oh * ow);
    for plane in 0..d[0] * d[1] {
        for z in 0..od {
            let sz = (z * d[2] / od).min(d[2] - 1);
            for y in 0..oh {
                let sy = (y * d[3] / oh).min(d[3] - 1);
                for xx in 0..ow {
                    let sx = (xx * d[4] / ow).min(d[4] - 1);
                    index.push(((plane * d[2] + sz) * d[3] + sy) * d[4] + sx);
                }
            }
        }
    }
    tape.gather(x, index, &[d[0], d[1], od, oh, ow])
}

/// Conv -> instance norm -> ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv,
}

impl ConvBlock {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let c = self.conv.forward(tape, store, x)?;
        let n = tape.instance_norm(c, INSTANCE_NORM_EPS)?;
        tape.relu(n)
    }
}

/// U-Net style encoder: `scales` conv blocks with max pooling before every
/// block except the first; widths double per scale.
#[derive(Debug, Clone)]
pub struct Encoder3d {
    pub blocks: Vec<ConvBlock>,
}

impl Encoder3d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        base: usize,
        scales: usize,
        rng: &mut R,
    ) -> Self {
        let mut blocks = Vec::with_capacity(scales);
        let mut c = cin;
        for s in 0..scales {
            let cout = base << s;
            blocks.push(ConvBlock {
                conv: Conv::new(store, &format!("{name}.enc{s}"), c, cout, [3, 3, 3], rng),
            });
            c = cout;
        }
        Self { blocks }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (s, block) in self.blocks.iter().enumerate() {
            if s > 0 {
                h = pool2(tape, h)?;
            }
            h = block.forward(tape, store, h)?;
        }
        Ok(h)
    }

    /// Flattened feature count for a `(1, C, d, h, w)` input.
    pub fn output_len(&self, spatial: [usize; 3]) -> usize {
        let mut s = spatial;
        for _ in 1..self.blocks.len() {
            for e in &mut s {
                if *e >= 2 {
                    *e /= 2;
                }
            }
        }
        let c = self.blocks.last().map_or(0, |b| b.conv.cout);
        c * s.iter().product::<usize>()
    }
}

/// Stack of dense layers with leaky ReLU between layers (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, sizes: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.fc{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i + 1 < self.layers.len() {
                h = tape.leaky_relu(h, LEAKY_SLOPE)?;
            }
        }
        Ok(h)
    }
}

/// 2D U-Net on `(B, C, 1, H, W)` with skip connections; the output layer
/// starts at zero so a fresh network predicts a zero residual.
#[derive(Debug, Clone)]
pub struct Unet2d {
    down: Vec<ConvBlock>,
    up: Vec<Conv>,
    head: Conv,
}

impl Unet2d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        channels: &[usize],
        cin: usize,
        cout: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if channels.is_empty() {
            bail!(Invalid, "U-Net needs at least one scale");
        }
        let k = [1, 3, 3];
        let mut down = Vec::new();
        let mut c = cin;
        for (s, &w) in channels.iter().enumerate() {
            down.push(ConvBlock {
                conv: Conv::new(store, &format!("{name}.down{s}"), c, w, k, rng),
            });
            c = w;
        }
        let mut up = Vec::new();
        for s in (0..channels.len() - 1).rev() {
            let cin = channels[s] + channels[s + 1];
            up.push(Conv::new(store, &format!("{name}.up{s}"), cin, channels[s], k, rng));
        }
        let head = Conv::zeroed(store, &format!("{name}.head"), channels[0], cout, k);
        Ok(Self { down, up, head })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut skips = Vec::new();
        let mut h = x;
        for (s, block) in self.down.iter().enumerate() {
            if s > 0 {
                h = pool2(tape, h)?;
            }
            h = block.forward(tape, store, h)?;
            skips.push(h);
        }
        skips.pop();
        for conv in &self.up {
            let skip = skips.pop().expect("one skip per decoder level");
            let sd = tape.value(skip).dims().to_vec();
            let u = upsample_to(tape, h, [sd[2], sd[3], sd[4]])?;
            let cat = tape.concat_channels(skip, u)?;
            let c = conv.forward(tape, store, cat)?;
            h = tape.relu(c)?;
        }
        self.head.forward(tape, store, h)
    }
}

/// Residual-free conv stack `cin -> width -> ... -> cout` with ReLU between
/// layers and a zero-initialized last layer.
#[derive(Debug, Clone)]
pub struct ConvStack {
    layers: Vec<Conv>,
}

impl ConvStack {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        width: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if depth < 2 {
            bail!(Invalid, "conv stack depth must be at least 2, got {}", depth);
        }
        let mut layers = Vec::with_capacity(depth);
        let mut c = cin;
        for i in 0..depth - 1 {
            layers.push(Conv::new(store, &format!("{name}.conv{i}"), c, width, [3, 3, 3], rng));
            c = width;
        }
        layers.push(Conv::zeroed(store, &format!("{name}.conv{}", depth - 1), c, cin, [3, 3, 3]));
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, conv) in self.layers.iter().enumerate() {
            h = conv.forward(tape, store, h)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Helper for building per-module parameter name prefixes.
pub fn scoped(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}
