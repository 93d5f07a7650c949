//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every primitive application in topological order. Each
//! node keeps its forward value together with whatever the adjoint needs, and
//! [`Tape::backward`] walks the record in reverse.
//!
//! Complex tensors are differentiated as real vectors of interleaved pairs:
//! the gradient stored for a complex node is `dL/dre + i dL/dim`, which makes
//! the adjoint of a complex-linear map its conjugate transpose.

mod gradcheck;
pub mod kernels;
mod params;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use gradcheck::{gradcheck, gradcheck_params, relative_error};
pub use kernels::ConvGeom;
pub use params::{ParamId, ParamStore};

use crate::error::{bail, Error, Result};
use crate::fft;
use crate::tensor::{numel, Kind, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a `(rows, n_a)` sampling mask maps onto `(n1, n2, nc, nf)` k-space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskLayout {
    /// Ω indexes columns `0..n2`.
    Lines,
    /// Ω indexes points `i1 * n2 + i2`.
    Points,
}

/// Per-row parameters of the differentiable rescale.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaleRow {
    pub free: Vec<bool>,
    pub target_mean: f64,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    ScaleBy(Var, Var),
    CMul(Var, Var),
    CMulConj(Var, Var),
    Abs(Var),
    CAbs(Var),
    Sqrt(Var),
    Square(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Softplus(Var),
    Sigmoid(Var, f64),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    Reshape(Var),
    Gather(Var, Vec<usize>),
    Concat(Var, Var, [usize; 3]),
    ToChannels(Var),
    FromChannels(Var),
    Fft(Var, (usize, usize), bool),
    Linear(Var, Var, Var),
    Conv(Var, Var, Var, ConvGeom),
    MaxPool(Var, Vec<usize>),
    InstanceNorm(Var, Vec<f64>, usize),
    BoxAxis(Var, usize, usize),
    Filter2d(Var, Vec<f64>, usize),
    MaskConst(Var, Vec<f64>),
    MaskVar(Var, Var, MaskLayout),
    CoilExpand(Var, Var),
    CoilCombine(Var, Var),
    RssNormalize(Var),
    Ste(Var, Vec<f64>, f64),
    Rescale(Var, Vec<RescaleRow>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Grads {
    slots: Vec<Option<Vec<f64>>>,
}

impl Grads {
    /// Raw gradient of a node (interleaved for complex nodes), if it was
    /// reached from the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.slots.get(v.0).and_then(|g| g.as_deref())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Parameter behind a node, if the node is a parameter leaf.
    pub fn param_of(&self, v: Var) -> Option<ParamId> {
        match self.nodes[v.0].op {
            Op::Param(id) => Some(id),
            _ => None,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; gradients are not propagated into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Free input that collects a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Trainable parameter pulled from a store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    fn same(&self, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            bail!(Shape, "{:?}/{:?} vs {:?}/{:?}", x.dims(), x.kind(), y.dims(), y.kind());
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same(a, b)?;
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b), self.rg(&[a, b])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same(a, b)?;
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b), self.rg(&[a, b])))
    }

    /// Elementwise product of real tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same(a, b)?;
        self.value(a).require_real()?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), self.rg(&[a, b])))
    }

    /// Elementwise quotient of real tensors.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same(a, b)?;
        self.value(a).require_real()?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y)?;
        Ok(self.push(v, Op::Div(a, b), self.rg(&[a, b])))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s), self.rg(&[a]))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        self.value(a).require_real()?;
        let v = self.value(a).map(|x| x + c);
        Ok(self.push(v, Op::AddConst(a), self.rg(&[a])))
    }

    /// Multiplies any tensor by a one-element real tensor.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.numel() != 1 || sv.is_complex() {
            bail!(Shape, "scale_by needs a real scalar, got {:?}", sv.dims());
        }
        let k = sv.data()[0];
        let v = self.value(a).scale(k);
        Ok(self.push(v, Op::ScaleBy(a, s), self.rg(&[a, s])))
    }

    fn complex_pair(&self, a: Var, b: Var) -> Result<()> {
        self.same(a, b)?;
        self.value(a).require_complex()
    }

    pub fn cmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.complex_pair(a, b)?;
        let v = self.value(a).zip_pairs(self.value(b), |x, y| {
            (x.0 * y.0 - x.1 * y.1, x.0 * y.1 + x.1 * y.0)
        });
        Ok(self.push(v, Op::CMul(a, b), self.rg(&[a, b])))
    }

    /// `a * conj(b)` elementwise.
    pub fn cmul_conj(&mut self, a: Var, b: Var) -> Result<Var> {
        self.complex_pair(a, b)?;
        let v = self.value(a).zip_pairs(self.value(b), |x, y| {
            (x.0 * y.0 + x.1 * y.1, x.1 * y.0 - x.0 * y.1)
        });
        Ok(self.push(v, Op::CMulConj(a, b), self.rg(&[a, b])))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.value(a).require_real()?;
        let v = self.value(a).map(f64::abs);
        Ok(self.push(v, Op::Abs(a), self.rg(&[a])))
    }

    /// Magnitude of a complex tensor.
    pub fn cabs(&mut self, a: Var) -> Result<Var> {
        self.value(a).require_complex()?;
        let v = self.value(a).abs();
        Ok(self.push(v, Op::CAbs(a), self.rg(&[a])))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.value(a).require_real()?;
        let v = self.value(a).map(|x| libm::sqrt(x.max(0.0)));
        Ok(self.push(v, Op::Sqrt(a), self.rg(&[a])))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.value(a).require_real()?;
        let v = self.value(a).map(|x| x * x);
        Ok(self.push(v, Op::Square(a), self.rg(&[a])))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.value(a).require_real()?;
        let v = self.value(a).map(|x| x.max(0.0));
        Ok(self.push(v, Op::Relu(a), self.rg(&[a])))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.value(a).require_real()?;
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        Ok(self.push(v, Op::LeakyRelu(a, slope), self.rg(&[a])))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.value(a).require_real()?;
        let v = self.value(a).map(softplus);
        Ok(self.push(v, Op::Softplus(a), self.rg(&[a])))
    }

    /// `1 / (1 + exp(-scale * x))`.
    pub fn sigmoid(&mut self, a: Var, scale: f64) -> Result<Var> {
        self.value(a).require_real()?;
        let v = self.value(a).map(|x| logistic(scale * x));
        Ok(self.push(v, Op::Sigmoid(a, scale), self.rg(&[a])))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.value(a).require_real()?;
        let v = Tensor::scalar(self.value(a).sum());
        Ok(self.push(v, Op::Sum(a), self.rg(&[a])))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.value(a).require_real()?;
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.numel() as f64);
        Ok(self.push(v, Op::Mean(a), self.rg(&[a])))
    }

    /// Sums a real tensor over one axis, dropping it.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        t.require_real()?;
        if axis >= t.rank() {
            return Err(Error::Axis {
                axis,
                rank: t.rank(),
            });
        }
        let dims = t.dims();
        let n = dims[axis];
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = (o * n + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += t.data()[src + i];
                }
            }
        }
        let mut nd = dims.to_vec();
        nd.remove(axis);
        let v = Tensor::real(&nd, out)?;
        Ok(self.push(v, Op::SumAxis(a, axis), self.rg(&[a])))
    }

    pub fn reshape(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(dims)?;
        Ok(self.push(v, Op::Reshape(a), self.rg(&[a])))
    }

    /// Output element `j` is input element `index[j]` (logical elements, kind
    /// preserved).
    pub fn gather(&mut self, a: Var, index: Vec<usize>, dims: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if numel(dims) != index.len() {
            bail!(Shape, "gather index length {} vs {:?}", index.len(), dims);
        }
        let n = t.numel();
        let w = t.kind().width();
        let mut out = Vec::with_capacity(index.len() * w);
        for &i in &index {
            if i >= n {
                bail!(Shape, "gather index {} out of range {}", i, n);
            }
            out.extend_from_slice(&t.data()[i * w..(i + 1) * w]);
        }
        let v = Tensor::new(dims, out, t.kind())?;
        Ok(self.push(v, Op::Gather(a, index), self.rg(&[a])))
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let dims = self.value(a).dims().to_vec();
        if perm.len() != dims.len() {
            bail!(Shape, "permutation {:?} for rank {}", perm, dims.len());
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                bail!(Invalid, "not a permutation: {:?}", perm);
            }
            seen[p] = true;
        }
        let in_strides = crate::tensor::strides(&dims);
        let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
        let n = numel(&dims);
        let mut index = Vec::with_capacity(n);
        let mut counter = vec![0usize; out_dims.len()];
        for _ in 0..n {
            let src: usize = counter
                .iter()
                .zip(perm)
                .map(|(&c, &p)| c * in_strides[p])
                .sum();
            index.push(src);
            for ax in (0..counter.len()).rev() {
                counter[ax] += 1;
                if counter[ax] < out_dims[ax] {
                    break;
                }
                counter[ax] = 0;
            }
        }
        self.gather(a, index, &out_dims)
    }

    /// Concatenates two real `(batch, C, ...)` tensors along axis 1.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.require_real()?;
        tb.require_real()?;
        let (da, db) = (ta.dims(), tb.dims());
        if da.len() < 2 || da.len() != db.len() || da[0] != db[0] || da[2..] != db[2..] {
            bail!(Shape, "cannot concat {:?} with {:?}", da, db);
        }
        let batch = da[0];
        let inner: usize = da[2..].iter().product();
        let (ca, cb) = (da[1], db[1]);
        let mut out = Vec::with_capacity(ta.numel() + tb.numel());
        for bi in 0..batch {
            out.extend_from_slice(&ta.data()[bi * ca * inner..(bi + 1) * ca * inner]);
            out.extend_from_slice(&tb.data()[bi * cb * inner..(bi + 1) * cb * inner]);
        }
        let mut dims = da.to_vec();
        dims[1] = ca + cb;
        let v = Tensor::real(&dims, out)?;
        Ok(self.push(v, Op::Concat(a, b, [batch, ca * inner, cb * inner]), self.rg(&[a, b])))
    }

    pub fn to_channels(&mut self, a: Var) -> Result<Var> {
        let v = crate::tensor::complex_to_channels(self.value(a))?;
        Ok(self.push(v, Op::ToChannels(a), self.rg(&[a])))
    }

    pub fn from_channels(&mut self, a: Var) -> Result<Var> {
        let v = crate::tensor::channels_to_complex(self.value(a))?;
        Ok(self.push(v, Op::FromChannels(a), self.rg(&[a])))
    }

    pub fn fft2c(&mut self, a: Var, axes: (usize, usize)) -> Result<Var> {
        let v = fft::fft2c(self.value(a), axes)?;
        Ok(self.push(v, Op::Fft(a, axes, false), self.rg(&[a])))
    }

    pub fn ifft2c(&mut self, a: Var, axes: (usize, usize)) -> Result<Var> {
        let v = fft::ifft2c(self.value(a), axes)?;
        Ok(self.push(v, Op::Fft(a, axes, true), self.rg(&[a])))
    }

    /// Dense layer `w x + b` on a flat real vector; `w` is `(out, in)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        tx.require_real()?;
        if tw.rank() != 2 || tw.dims()[1] != tx.numel() || tb.numel() != tw.dims()[0] {
            bail!(Shape, "linear: x {:?}, w {:?}, b {:?}", tx.dims(), tw.dims(), tb.dims());
        }
        let (n_out, n_in) = (tw.dims()[0], tw.dims()[1]);
        let mut out = tb.data().to_vec();
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &tw.data()[o * n_in..(o + 1) * n_in];
            *slot += row.iter().zip(tx.data()).map(|(a, b)| a * b).sum::<f64>();
        }
        let v = Tensor::real(&[n_out], out)?;
        Ok(self.push(v, Op::Linear(x, w, b), self.rg(&[x, w, b])))
    }

    /// Same-padded stride-1 convolution on `(B, C, D, H, W)` input with
    /// `(Cout, Cin, KD, KH, KW)` weights.
    pub fn conv(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (dx, dw) = (tx.dims(), tw.dims());
        if dx.len() != 5 || dw.len() != 5 || dw[1] != dx[1] || tb.numel() != dw[0] {
            bail!(Shape, "conv: x {:?}, w {:?}, b {:?}", dx, dw, tb.dims());
        }
        if dw[2..].iter().any(|k| k % 2 == 0) {
            bail!(Invalid, "conv kernel extents must be odd: {:?}", dw);
        }
        let g = ConvGeom {
            batch: dx[0],
            cin: dx[1],
            cout: dw[0],
            d: dx[2],
            h: dx[3],
            w: dx[4],
            kd: dw[2],
            kh: dw[3],
            kw: dw[4],
        };
        let out = kernels::conv_forward(&g, tx.data(), tw.data(), tb.data());
        let v = Tensor::real(&[g.batch, g.cout, g.d, g.h, g.w], out)?;
        Ok(self.push(v, Op::Conv(x, w, b, g), self.rg(&[x, w, b])))
    }

    /// Max pooling on `(B, C, D, H, W)`; kernel and stride coincide.
    pub fn maxpool(&mut self, x: Var, kernel: [usize; 3]) -> Result<Var> {
        let t = self.value(x);
        let d = t.dims();
        if d.len() != 5 || kernel.contains(&0) {
            bail!(Shape, "maxpool on {:?} with {:?}", d, kernel);
        }
        let (od, out, arg) = kernels::maxpool_forward([d[0], d[1], d[2], d[3], d[4]], kernel, t.data());
        if od.contains(&0) {
            bail!(Shape, "maxpool {:?} empties {:?}", kernel, d);
        }
        let v = Tensor::real(&od, out)?;
        Ok(self.push(v, Op::MaxPool(x, arg), self.rg(&[x])))
    }

    /// Per-(batch, channel) normalization of `(B, C, ...)` input.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        t.require_real()?;
        if t.rank() < 3 {
            bail!(Shape, "instance norm needs spatial axes, got {:?}", t.dims());
        }
        let group: usize = t.dims()[2..].iter().product();
        let res = kernels::instance_norm_forward(t.data(), group, eps);
        let v = Tensor::real(t.dims(), res.y)?;
        Ok(self.push(v, Op::InstanceNorm(x, res.inv_std, group), self.rg(&[x])))
    }

    /// Valid moving average of width `window` along `axis` (real input).
    pub fn box_axis(&mut self, a: Var, axis: usize, window: usize) -> Result<Var> {
        let t = self.value(a);
        t.require_real()?;
        if axis >= t.rank() || window == 0 || window > t.dims()[axis] {
            bail!(Shape, "box filter of {} on axis {} of {:?}", window, axis, t.dims());
        }
        let (dims, out) = kernels::box_axis_forward(t.dims(), axis, window, t.data());
        let v = Tensor::real(&dims, out)?;
        Ok(self.push(v, Op::BoxAxis(a, axis, window), self.rg(&[a])))
    }

    /// `k x k` correlation over the two leading axes with reflective borders.
    pub fn filter2d(&mut self, a: Var, kernel: Vec<f64>, k: usize) -> Result<Var> {
        let t = self.value(a);
        t.require_real()?;
        if t.rank() < 2 || kernel.len() != k * k || k % 2 == 0 {
            bail!(Shape, "filter2d kernel {} on {:?}", k, t.dims());
        }
        let out = kernels::filter2d_forward(t.dims(), &kernel, k, t.data());
        let v = Tensor::real(t.dims(), out)?;
        Ok(self.push(v, Op::Filter2d(a, kernel, k), self.rg(&[a])))
    }

    /// Multiplies each logical element by a constant factor.
    pub fn mask_const(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let t = self.value(a);
        if mask.len() != t.numel() {
            bail!(Shape, "mask of {} for {:?}", mask.len(), t.dims());
        }
        let w = t.kind().width();
        let mut v = t.clone();
        for (chunk, m) in v.data_mut().chunks_exact_mut(w).zip(&mask) {
            for x in chunk {
                *x *= m;
            }
        }
        Ok(self.push(v, Op::MaskConst(a, mask), self.rg(&[a])))
    }

    /// Applies a `(rows, n_a)` real mask to `(n1, n2, nc, nf)` complex
    /// k-space; `rows` is 1 (shared by all frames) or `nf`.
    pub fn mask_kspace(&mut self, y: Var, m: Var, layout: MaskLayout) -> Result<Var> {
        let (ty, tm) = (self.value(y), self.value(m));
        ty.require_complex()?;
        tm.require_real()?;
        let shape = MaskShape::new(ty.dims(), tm.dims(), layout)?;
        let mut v = ty.clone();
        let data = v.data_mut();
        shape.for_each(|e, mi| {
            let f = tm.data()[mi];
            data[2 * e] *= f;
            data[2 * e + 1] *= f;
        });
        Ok(self.push(v, Op::MaskVar(y, m, layout), self.rg(&[y, m])))
    }

    /// `(n1, n2, nf)` image times `(n1, n2, nc)` maps -> `(n1, n2, nc, nf)`.
    pub fn coil_expand(&mut self, x: Var, s: Var) -> Result<Var> {
        let (tx, ts) = (self.value(x), self.value(s));
        let (n, nc, nf) = coil_dims(tx, ts)?;
        let mut out = vec![0.0; 2 * n * nc * nf];
        for i in 0..n {
            for k in 0..nc {
                let sv = ts.c(i * nc + k);
                for t in 0..nf {
                    let xv = tx.c(i * nf + t);
                    let e = (i * nc + k) * nf + t;
                    out[2 * e] = sv.0 * xv.0 - sv.1 * xv.1;
                    out[2 * e + 1] = sv.0 * xv.1 + sv.1 * xv.0;
                }
            }
        }
        let (n1, n2) = (tx.dims()[0], tx.dims()[1]);
        let v = Tensor::complex(&[n1, n2, nc, nf], out)?;
        Ok(self.push(v, Op::CoilExpand(x, s), self.rg(&[x, s])))
    }

    /// `sum_k conj(S_k) * m_k` per frame: `(n1, n2, nc, nf)` -> `(n1, n2, nf)`.
    pub fn coil_combine(&mut self, m: Var, s: Var) -> Result<Var> {
        let (tm, ts) = (self.value(m), self.value(s));
        tm.require_complex()?;
        ts.require_complex()?;
        let (dm, ds) = (tm.dims(), ts.dims());
        if dm.len() != 4 || ds.len() != 3 || dm[..3] != ds[..] {
            bail!(Shape, "coil combine {:?} with maps {:?}", dm, ds);
        }
        let (n1, n2, nc, nf) = (dm[0], dm[1], dm[2], dm[3]);
        let n = n1 * n2;
        let mut out = vec![0.0; 2 * n * nf];
        for i in 0..n {
            for k in 0..nc {
                let sv = ts.c(i * nc + k);
                for t in 0..nf {
                    let mv = tm.c((i * nc + k) * nf + t);
                    let o = i * nf + t;
                    out[2 * o] += sv.0 * mv.0 + sv.1 * mv.1;
                    out[2 * o + 1] += sv.0 * mv.1 - sv.1 * mv.0;
                }
            }
        }
        let v = Tensor::complex(&[n1, n2, nf], out)?;
        Ok(self.push(v, Op::CoilCombine(m, s), self.rg(&[m, s])))
    }

    /// Divides `(n1, n2, nc)` maps by their root-sum-of-squares over coils;
    /// voxels with RSS below 1e-12 become zero.
    pub fn rss_normalize(&mut self, s: Var) -> Result<Var> {
        let t = self.value(s);
        t.require_complex()?;
        if t.rank() != 3 {
            bail!(Shape, "maps must be (n1, n2, nc), got {:?}", t.dims());
        }
        let nc = t.dims()[2];
        let mut v = t.clone();
        for i in 0..t.numel() / nc {
            let r = rss_at(t, i, nc);
            let inv = if r > RSS_EPS { 1.0 / r } else { 0.0 };
            for k in 0..nc {
                let c = t.c(i * nc + k);
                v.set_c(i * nc + k, (c.0 * inv, c.1 * inv));
            }
        }
        Ok(self.push(v, Op::RssNormalize(s), self.rg(&[s])))
    }

    /// Straight-through binarization: the forward value is `value` (the hard
    /// mask, or a smoothed surrogate), the backward pass uses the derivative
    /// of `sigmoid(slope * (p - u))`.
    pub fn ste(&mut self, p: Var, value: Tensor, u: Vec<f64>, slope: f64) -> Result<Var> {
        let tp = self.value(p);
        if !tp.same_shape(&value) || u.len() != tp.numel() {
            bail!(Shape, "ste value {:?} / u {} for p {:?}", value.dims(), u.len(), tp.dims());
        }
        Ok(self.push(value, Op::Ste(p, u, slope), self.rg(&[p])))
    }

    /// Row-wise rescale of a `(rows, n_a)` nonnegative tensor to the given
    /// free-index means (see [`crate::ads::rescale`]).
    pub fn rescale(&mut self, p: Var, rows: Vec<RescaleRow>) -> Result<Var> {
        let t = self.value(p);
        t.require_real()?;
        if t.rank() != 2 || t.dims()[0] != rows.len() {
            bail!(Shape, "rescale of {:?} with {} rows", t.dims(), rows.len());
        }
        let n_a = t.dims()[1];
        let mut out = Vec::with_capacity(t.numel());
        for (r, row) in rows.iter().enumerate() {
            if row.free.len() != n_a {
                bail!(Shape, "free mask of {} for rows of {}", row.free.len(), n_a);
            }
            let src = &t.data()[r * n_a..(r + 1) * n_a];
            out.extend(crate::ads::rescale(src, &row.free, row.target_mean)?);
        }
        let v = Tensor::real(t.dims(), out)?;
        Ok(self.push(v, Op::Rescale(p, rows), self.rg(&[p])))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Tape(format!("node {} is not on this tape", loss.0)))?;
        if node.value.numel() != 1 || node.value.is_complex() {
            bail!(Tape, "loss must be a real scalar, got {:?}", node.value.dims());
        }
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        slots[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = slots[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut slots)?;
            }
            slots[i] = Some(g);
        }
        Ok(Grads { slots })
    }

    fn propagate(&self, i: usize, g: &[f64], slots: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let len = self.nodes[v.0].value.data().len();
            let slot = slots[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |s| zip3(s, g, vb, |gi, bi| gi * bi));
                acc(*b, &mut |s| zip3(s, g, va, |gi, ai| gi * ai));
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |s| zip3(s, g, vb, |gi, bi| gi / bi));
                acc(*b, &mut |s| {
                    for (k, x) in s.iter_mut().enumerate() {
                        *x -= g[k] * va[k] / (vb[k] * vb[k]);
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |s| zip3(s, g, g, |gi, _| gi * c)),
            Op::AddConst(a) | Op::Reshape(a) => acc(*a, &mut |s| add_into(s, g)),
            Op::ScaleBy(a, sv) => {
                let k = self.value(*sv).data()[0];
                let va = self.value(*a).data();
                acc(*a, &mut |s| zip3(s, g, g, |gi, _| gi * k));
                acc(*sv, &mut |s| s[0] += g.iter().zip(va).map(|(x, y)| x * y).sum::<f64>());
            }
            Op::CMul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |s| cmac(s, g, vb, false, true));
                acc(*b, &mut |s| cmac(s, g, va, false, true));
            }
            Op::CMulConj(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                // z = a conj(b): grad_a = g b, grad_b = conj(g) a
                acc(*a, &mut |s| cmac(s, g, vb, false, false));
                acc(*b, &mut |s| cmac(s, g, va, true, false));
            }
            Op::Abs(a) => {
                let va = self.value(*a).data();
                acc(*a, &mut |s| zip3(s, g, va, |gi, x| gi * sign(x)));
            }
            Op::CAbs(a) => {
                let va = self.value(*a).data();
                let mag = out.data();
                acc(*a, &mut |s| {
                    for k in 0..mag.len() {
                        if mag[k] > 0.0 {
                            s[2 * k] += g[k] * va[2 * k] / mag[k];
                            s[2 * k + 1] += g[k] * va[2 * k + 1] / mag[k];
                        }
                    }
                });
            }
            Op::Sqrt(a) => {
                let o = out.data();
                acc(*a, &mut |s| {
                    zip3(s, g, o, |gi, r| if r > 0.0 { gi / (2.0 * r) } else { 0.0 })
                });
            }
            Op::Square(a) => {
                let va = self.value(*a).data();
                acc(*a, &mut |s| zip3(s, g, va, |gi, x| 2.0 * x * gi));
            }
            Op::Relu(a) => {
                let va = self.value(*a).data();
                acc(*a, &mut |s| zip3(s, g, va, |gi, x| if x > 0.0 { gi } else { 0.0 }));
            }
            Op::LeakyRelu(a, slope) => {
                let va = self.value(*a).data();
                acc(*a, &mut |s| zip3(s, g, va, |gi, x| if x > 0.0 { gi } else { slope * gi }));
            }
            Op::Softplus(a) => {
                let va = self.value(*a).data();
                acc(*a, &mut |s| zip3(s, g, va, |gi, x| gi * logistic(x)));
            }
            Op::Sigmoid(a, k) => {
                let o = out.data();
                acc(*a, &mut |s| zip3(s, g, o, |gi, y| gi * k * y * (1.0 - y)));
            }
            Op::Sum(a) => acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = self.value(*a).numel() as f64;
                acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::SumAxis(a, axis) => {
                let dims = self.value(*a).dims();
                let n = dims[*axis];
                let outer: usize = dims[..*axis].iter().product();
                let inner: usize = dims[*axis + 1..].iter().product();
                acc(*a, &mut |s| {
                    for o in 0..outer {
                        for k in 0..n {
                            for j in 0..inner {
                                s[(o * n + k) * inner + j] += g[o * inner + j];
                            }
                        }
                    }
                });
            }
            Op::Gather(a, index) => {
                let w = out.kind().width();
                acc(*a, &mut |s| {
                    for (j, &src) in index.iter().enumerate() {
                        for c in 0..w {
                            s[src * w + c] += g[j * w + c];
                        }
                    }
                });
            }
            Op::Concat(a, b, [batch, sa, sb]) => {
                let (batch, sa, sb) = (*batch, *sa, *sb);
                acc(*a, &mut |s| {
                    for bi in 0..batch {
                        let src = bi * (sa + sb);
                        add_into(&mut s[bi * sa..(bi + 1) * sa], &g[src..src + sa]);
                    }
                });
                acc(*b, &mut |s| {
                    for bi in 0..batch {
                        let src = bi * (sa + sb) + sa;
                        add_into(&mut s[bi * sb..(bi + 1) * sb], &g[src..src + sb]);
                    }
                });
            }
            Op::ToChannels(a) => {
                let n = out.numel() / 2;
                acc(*a, &mut |s| {
                    for k in 0..n {
                        s[2 * k] += g[k];
                        s[2 * k + 1] += g[n + k];
                    }
                });
            }
            Op::FromChannels(a) => {
                let n = out.numel();
                acc(*a, &mut |s| {
                    for k in 0..n {
                        s[k] += g[2 * k];
                        s[n + k] += g[2 * k + 1];
                    }
                });
            }
            Op::Fft(a, axes, inverse) => {
                let gt = Tensor::complex(out.dims(), g.to_vec())?;
                let back = if *inverse {
                    fft::fft2c(&gt, *axes)?
                } else {
                    fft::ifft2c(&gt, *axes)?
                };
                acc(*a, &mut |s| add_into(s, back.data()));
            }
            Op::Linear(x, w, b) => {
                let (vx, vw) = (self.value(*x).data(), self.value(*w).data());
                let n_in = vx.len();
                acc(*x, &mut |s| {
                    for (o, go) in g.iter().enumerate() {
                        let row = &vw[o * n_in..(o + 1) * n_in];
                        s.iter_mut().zip(row).for_each(|(si, wi)| *si += go * wi);
                    }
                });
                acc(*w, &mut |s| {
                    for (o, go) in g.iter().enumerate() {
                        s[o * n_in..(o + 1) * n_in]
                            .iter_mut()
                            .zip(vx)
                            .for_each(|(si, xi)| *si += go * xi);
                    }
                });
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Conv(x, w, b, geom) => {
                let (vx, vw) = (self.value(*x).data(), self.value(*w).data());
                let (gx, gw, gb) = kernels::conv_backward(geom, vx, vw, g);
                acc(*x, &mut |s| add_into(s, &gx));
                acc(*w, &mut |s| add_into(s, &gw));
                acc(*b, &mut |s| add_into(s, &gb));
            }
            Op::MaxPool(x, arg) => acc(*x, &mut |s| {
                for (j, &src) in arg.iter().enumerate() {
                    s[src] += g[j];
                }
            }),
            Op::InstanceNorm(x, inv_std, group) => {
                let gx = kernels::instance_norm_backward(out.data(), inv_std, *group, g);
                acc(*x, &mut |s| add_into(s, &gx));
            }
            Op::BoxAxis(a, axis, window) => {
                let gx = kernels::box_axis_backward(self.value(*a).dims(), *axis, *window, g);
                acc(*a, &mut |s| add_into(s, &gx));
            }
            Op::Filter2d(a, kernel, k) => {
                let gx = kernels::filter2d_backward(out.dims(), kernel, *k, g);
                acc(*a, &mut |s| add_into(s, &gx));
            }
            Op::MaskConst(a, mask) => {
                let w = out.kind().width();
                acc(*a, &mut |s| {
                    for (j, m) in mask.iter().enumerate() {
                        for c in 0..w {
                            s[j * w + c] += g[j * w + c] * m;
                        }
                    }
                });
            }
            Op::MaskVar(y, m, layout) => {
                let (ty, tm) = (self.value(*y), self.value(*m));
                let shape = MaskShape::new(ty.dims(), tm.dims(), *layout)?;
                let (vy, vm) = (ty.data(), tm.data());
                acc(*y, &mut |s| {
                    shape.for_each(|e, mi| {
                        s[2 * e] += g[2 * e] * vm[mi];
                        s[2 * e + 1] += g[2 * e + 1] * vm[mi];
                    })
                });
                acc(*m, &mut |s| {
                    shape.for_each(|e, mi| {
                        s[mi] += g[2 * e] * vy[2 * e] + g[2 * e + 1] * vy[2 * e + 1];
                    })
                });
            }
            Op::CoilExpand(x, sm) => {
                let (tx, ts) = (self.value(*x), self.value(*sm));
                let (n, nc, nf) = coil_dims(tx, ts)?;
                acc(*x, &mut |s| {
                    for i in 0..n {
                        for k in 0..nc {
                            let sv = ts.c(i * nc + k);
                            for t in 0..nf {
                                let e = (i * nc + k) * nf + t;
                                let gv = (g[2 * e], g[2 * e + 1]);
                                // g * conj(S)
                                s[2 * (i * nf + t)] += gv.0 * sv.0 + gv.1 * sv.1;
                                s[2 * (i * nf + t) + 1] += gv.1 * sv.0 - gv.0 * sv.1;
                            }
                        }
                    }
                });
                acc(*sm, &mut |s| {
                    for i in 0..n {
                        for k in 0..nc {
                            for t in 0..nf {
                                let xv = tx.c(i * nf + t);
                                let e = (i * nc + k) * nf + t;
                                let gv = (g[2 * e], g[2 * e + 1]);
                                s[2 * (i * nc + k)] += gv.0 * xv.0 + gv.1 * xv.1;
                                s[2 * (i * nc + k) + 1] += gv.1 * xv.0 - gv.0 * xv.1;
                            }
                        }
                    }
                });
            }
            Op::CoilCombine(m, sm) => {
                let (tm, ts) = (self.value(*m), self.value(*sm));
                let d = tm.dims();
                let (n, nc, nf) = (d[0] * d[1], d[2], d[3]);
                acc(*m, &mut |s| {
                    for i in 0..n {
                        for k in 0..nc {
                            let sv = ts.c(i * nc + k);
                            for t in 0..nf {
                                let gv = (g[2 * (i * nf + t)], g[2 * (i * nf + t) + 1]);
                                let e = (i * nc + k) * nf + t;
                                // g * S
                                s[2 * e] += gv.0 * sv.0 - gv.1 * sv.1;
                                s[2 * e + 1] += gv.0 * sv.1 + gv.1 * sv.0;
                            }
                        }
                    }
                });
                acc(*sm, &mut |s| {
                    for i in 0..n {
                        for k in 0..nc {
                            for t in 0..nf {
                                let gv = (g[2 * (i * nf + t)], g[2 * (i * nf + t) + 1]);
                                let mv = tm.c((i * nc + k) * nf + t);
                                // conj(g) * m
                                s[2 * (i * nc + k)] += gv.0 * mv.0 + gv.1 * mv.1;
                                s[2 * (i * nc + k) + 1] += gv.0 * mv.1 - gv.1 * mv.0;
                            }
                        }
                    }
                });
            }
            Op::RssNormalize(sm) => {
                let ts = self.value(*sm);
                let nc = ts.dims()[2];
                acc(*sm, &mut |s| {
                    for i in 0..ts.numel() / nc {
                        let r = rss_at(ts, i, nc);
                        if r <= RSS_EPS {
                            continue;
                        }
                        let mut proj = 0.0;
                        for k in 0..nc {
                            let e = i * nc + k;
                            let c = ts.c(e);
                            proj += g[2 * e] * c.0 + g[2 * e + 1] * c.1;
                        }
                        let r3 = r * r * r;
                        for k in 0..nc {
                            let e = i * nc + k;
                            let c = ts.c(e);
                            s[2 * e] += g[2 * e] / r - c.0 * proj / r3;
                            s[2 * e + 1] += g[2 * e + 1] / r - c.1 * proj / r3;
                        }
                    }
                });
            }
            Op::Ste(p, u, slope) => {
                let vp = self.value(*p).data();
                let gp = crate::ads::ste_backward(g, vp, u, *slope);
                acc(*p, &mut |s| add_into(s, &gp));
            }
            Op::Rescale(p, rows) => {
                let tp = self.value(*p);
                let n_a = tp.dims()[1];
                acc(*p, &mut |s| {
                    for (r, row) in rows.iter().enumerate() {
                        let span = r * n_a..(r + 1) * n_a;
                        let gp = crate::ads::rescale_vjp(
                            &tp.data()[span.clone()],
                            &row.free,
                            row.target_mean,
                            &g[span.clone()],
                        );
                        add_into(&mut s[span], &gp);
                    }
                });
            }
        }
        Ok(())
    }
}

const RSS_EPS: f64 = 1e-12;

fn rss_at(t: &Tensor, i: usize, nc: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..nc {
        let c = t.c(i * nc + k);
        acc += c.0 * c.0 + c.1 * c.1;
    }
    libm::sqrt(acc)
}

fn coil_dims(x: &Tensor, s: &Tensor) -> Result<(usize, usize, usize)> {
    x.require_complex()?;
    s.require_complex()?;
    let (dx, ds) = (x.dims(), s.dims());
    if dx.len() != 3 || ds.len() != 3 || dx[..2] != ds[..2] {
        bail!(Shape, "image {:?} vs maps {:?}", dx, ds);
    }
    Ok((dx[0] * dx[1], ds[2], dx[2]))
}

#[derive(Debug, Clone, Copy)]
struct MaskShape {
    n1: usize,
    n2: usize,
    nc: usize,
    nf: usize,
    rows: usize,
    n_a: usize,
    layout: MaskLayout,
}

impl MaskShape {
    fn new(ydims: &[usize], mdims: &[usize], layout: MaskLayout) -> Result<Self> {
        if ydims.len() != 4 || mdims.len() != 2 {
            bail!(Shape, "mask {:?} on k-space {:?}", mdims, ydims);
        }
        let (n1, n2, nc, nf) = (ydims[0], ydims[1], ydims[2], ydims[3]);
        let (rows, n_a) = (mdims[0], mdims[1]);
        let expect = match layout {
            MaskLayout::Lines => n2,
            MaskLayout::Points => n1 * n2,
        };
        if n_a != expect || (rows != 1 && rows != nf) {
            bail!(Shape, "mask {:?} does not fit k-space {:?} ({:?})", mdims, ydims, layout);
        }
        Ok(Self {
            n1,
            n2,
            nc,
            nf,
            rows,
            n_a,
            layout,
        })
    }

    /// Calls `f(element, mask_index)` for every k-space element.
    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        for i1 in 0..self.n1 {
            for i2 in 0..self.n2 {
                let omega = match self.layout {
                    MaskLayout::Lines => i2,
                    MaskLayout::Points => i1 * self.n2 + i2,
                };
                for k in 0..self.nc {
                    for t in 0..self.nf {
                        let row = if self.rows == 1 { 0 } else { t };
                        let e = ((i1 * self.n2 + i2) * self.nc + k) * self.nf + t;
                        f(e, row * self.n_a + omega);
                    }
                }
            }
        }
    }
}

#[inline]
fn add_into(s: &mut [f64], g: &[f64]) {
    s.iter_mut().zip(g).for_each(|(x, y)| *x += y);
}

#[inline]
fn zip3(s: &mut [f64], g: &[f64], v: &[f64], f: impl Fn(f64, f64) -> f64) {
    for ((x, gi), vi) in s.iter_mut().zip(g).zip(v) {
        *x += f(*gi, *vi);
    }
}

/// `s += op(g) * op(v)` pairwise, where `conj_g`/`conj_v` select conjugation.
fn cmac(s: &mut [f64], g: &[f64], v: &[f64], conj_g: bool, conj_v: bool) {
    for ((sc, gc), vc) in s.chunks_exact_mut(2).zip(g.chunks_exact(2)).zip(v.chunks_exact(2)) {
        let gr = gc[0];
        let gi = if conj_g { -gc[1] } else { gc[1] };
        let vr = vc[0];
        let vi = if conj_v { -vc[1] } else { vc[1] };
        sc[0] += gr * vr - gi * vi;
        sc[1] += gr * vi + gi * vr;
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Tensor {
    fn zip_pairs(&self, other: &Tensor, f: impl Fn((f64, f64), (f64, f64)) -> (f64, f64)) -> Tensor {
        let mut out = Tensor::zeros(self.dims(), Kind::Complex);
        for i in 0..self.numel() {
            out.set_c(i, f(self.c(i), other.c(i)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_and_activations() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::real(&[3], vec![0.0, -1.0, 2.0]).unwrap());
        let sp = t.softplus(x).unwrap();
        assert!((t.value(sp).data()[0] - core::f64::consts::LN_2).abs() < 1e-15);
        let lr = t.leaky_relu(x, 0.01).unwrap();
        assert_eq!(t.value(lr).data()[1], -0.01);
        let r = t.relu(x).unwrap();
        assert_eq!(t.value(r).data()[1], 0.0);
    }

    #[test]
    fn weighted_sum_gradient_is_input() {
        let mut t = Tape::new();
        let xv = Tensor::real(&[4], vec![1.5, -2.0, 0.25, 3.0]).unwrap();
        let x = t.constant(xv.clone());
        let w = t.input(Tensor::real(&[4], vec![0.1, 0.2, 0.3, 0.4]).unwrap());
        let p = t.mul(w, x).unwrap();
        let l = t.sum(p).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap(), xv.data());
        assert!(g.get(x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.input(Tensor::real(&[2], vec![1.0, 2.0]).unwrap());
        assert!(t.backward(x).is_err());
        assert!(t.backward(Var(17)).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut t = Tape::new();
        let a = t.input(Tensor::real(&[2], vec![1.0, 2.0]).unwrap());
        let b = t.input(Tensor::real(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        assert!(t.add(a, b).is_err());
        assert!(t.mul(a, b).is_err());
    }

    #[test]
    fn permute_swaps_axes() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::real(&[2, 3], (0..6).map(|v| v as f64).collect()).unwrap());
        let y = t.permute(x, &[1, 0]).unwrap();
        assert_eq!(t.value(y).dims(), &[3, 2]);
        assert_eq!(t.value(y).data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn replay_is_bit_identical() {
        let build = || {
            let mut t = Tape::new();
            let x = t.input(Tensor::real(&[1, 1, 2, 3, 3], (0..18).map(|v| (v as f64).sin()).collect()).unwrap());
            let w = t.input(Tensor::real(&[2, 1, 3, 3, 3], (0..54).map(|v| (v as f64 * 0.3).cos()).collect()).unwrap());
            let b = t.input(Tensor::real(&[2], vec![0.1, -0.2]).unwrap());
            let c = t.conv(x, w, b).unwrap();
            let n = t.instance_norm(c, 1e-5).unwrap();
            let s = t.softplus(n).unwrap();
            let l = t.sum(s).unwrap();
            let g = t.backward(l).unwrap();
            (t.value(l).data()[0], g.get(w).unwrap().to_vec())
        };
        let (a, ga) = build();
        let (b, gb) = build();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(ga, gb);
    }
}
