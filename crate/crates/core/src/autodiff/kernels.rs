//! Forward and adjoint kernels for the structured tape primitives.
//!
//! Convolution, pooling and normalization work on five-axis layouts
//! `(batch, channel, depth, height, width)`; 2D variants use depth 1.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub kd: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    fn vol(&self) -> usize {
        self.d * self.h * self.w
    }

    fn widx(&self, co: usize, ci: usize, a: usize, b: usize, c: usize) -> usize {
        (((co * self.cin + ci) * self.kd + a) * self.kh + b) * self.kw + c
    }
}

/// Valid output range `lo..hi` for an offset `off` applied to `0..n`.
#[inline]
fn span(n: usize, off: isize) -> (usize, usize) {
    let lo = if off < 0 { (-off) as usize } else { 0 };
    let hi = if off > 0 {
        n.saturating_sub(off as usize)
    } else {
        n
    };
    (lo.min(n), hi)
}

/// Visits every (output offset, input offset, weight index, length) run of a
/// same-padded stride-1 convolution.
fn for_each_run(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize)) {
    let (pd, ph, pw) = (g.kd / 2, g.kh / 2, g.kw / 2);
    let vol = g.vol();
    for bb in 0..g.batch {
        for co in 0..g.cout {
            let obase = (bb * g.cout + co) * vol;
            for ci in 0..g.cin {
                let ibase = (bb * g.cin + ci) * vol;
                for a in 0..g.kd {
                    let dz = a as isize - pd as isize;
                    let (z0, z1) = span(g.d, dz);
                    for b in 0..g.kh {
                        let dy = b as isize - ph as isize;
                        let (y0, y1) = span(g.h, dy);
                        for c in 0..g.kw {
                            let dx = c as isize - pw as isize;
                            let (x0, x1) = span(g.w, dx);
                            if x1 <= x0 {
                                continue;
                            }
                            let wi = g.widx(co, ci, a, b, c);
                            for z in z0..z1 {
                                let zi = (z as isize + dz) as usize;
                                for y in y0..y1 {
                                    let yi = (y as isize + dy) as usize;
                                    let o = obase + (z * g.h + y) * g.w + x0;
                                    let i = ibase
                                        + (zi * g.h + yi) * g.w
                                        + (x0 as isize + dx) as usize;
                                    f(o, i, wi, x1 - x0);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv_forward(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let vol = g.vol();
    let mut out = vec![0.0; g.batch * g.cout * vol];
    for bb in 0..g.batch {
        for co in 0..g.cout {
            let base = (bb * g.cout + co) * vol;
            out[base..base + vol].fill(b[co]);
        }
    }
    for_each_run(g, |o, i, wi, len| {
        let wt = w[wi];
        for (ov, iv) in out[o..o + len].iter_mut().zip(&x[i..i + len]) {
            *ov += wt * iv;
        }
    });
    out
}

/// Returns gradients with respect to (input, weight, bias).
pub fn conv_backward(
    g: &ConvGeom,
    x: &[f64],
    w: &[f64],
    grad: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let vol = g.vol();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; g.cout];
    for bb in 0..g.batch {
        for (co, slot) in gb.iter_mut().enumerate() {
            let base = (bb * g.cout + co) * vol;
            *slot += grad[base..base + vol].iter().sum::<f64>();
        }
    }
    for_each_run(g, |o, i, wi, len| {
        let wt = w[wi];
        let go = &grad[o..o + len];
        let mut acc = 0.0;
        for ((gxv, xv), gv) in gx[i..i + len].iter_mut().zip(&x[i..i + len]).zip(go) {
            *gxv += wt * gv;
            acc += gv * xv;
        }
        gw[wi] += acc;
    });
    (gx, gw, gb)
}

/// Max pooling with per-axis kernel equal to its stride. Returns output values
/// and, per output, the flat input index that produced it.
pub fn maxpool_forward(
    dims: [usize; 5],
    kernel: [usize; 3],
    x: &[f64],
) -> ([usize; 5], Vec<f64>, Vec<usize>) {
    let [bsz, ch, d, h, w] = dims;
    let [kd, kh, kw] = kernel;
    let (od, oh, ow) = (d / kd, h / kh, w / kw);
    let mut out = Vec::with_capacity(bsz * ch * od * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for plane in 0..bsz * ch {
        let base = plane * d * h * w;
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = base;
                    for a in 0..kd {
                        for b in 0..kh {
                            for c in 0..kw {
                                let i = base + ((z * kd + a) * h + y * kh + b) * w + xx * kw + c;
                                if x[i] > best {
                                    best = x[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    ([bsz, ch, od, oh, ow], out, arg)
}

pub struct InstanceNormOut {
    pub y: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Per (batch, channel) normalization over the spatial axes, no affine.
pub fn instance_norm_forward(x: &[f64], group: usize, eps: f64) -> InstanceNormOut {
    let groups = x.len() / group;
    let mut y = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(groups);
    for gi in 0..groups {
        let seg = &x[gi * group..(gi + 1) * group];
        let mean = seg.iter().sum::<f64>() / group as f64;
        let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group as f64;
        let is = 1.0 / libm::sqrt(var + eps);
        for (o, v) in y[gi * group..(gi + 1) * group].iter_mut().zip(seg) {
            *o = (v - mean) * is;
        }
        inv_std.push(is);
    }
    InstanceNormOut { y, inv_std }
}

pub fn instance_norm_backward(y: &[f64], inv_std: &[f64], group: usize, grad: &[f64]) -> Vec<f64> {
    let n = group as f64;
    let mut gx = vec![0.0; y.len()];
    for (gi, &is) in inv_std.iter().enumerate() {
        let r = gi * group..(gi + 1) * group;
        let gs = &grad[r.clone()];
        let ys = &y[r.clone()];
        let sum_g: f64 = gs.iter().sum();
        let sum_gy: f64 = gs.iter().zip(ys).map(|(a, b)| a * b).sum();
        for ((o, gv), yv) in gx[r].iter_mut().zip(gs).zip(ys) {
            *o = is * (gv - sum_g / n - yv * sum_gy / n);
        }
    }
    gx
}

/// Valid moving average of width `window` along `axis`.
pub fn box_axis_forward(dims: &[usize], axis: usize, window: usize, x: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let n = dims[axis];
    let m = n + 1 - window;
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out_dims = dims.to_vec();
    out_dims[axis] = m;
    let mut out = vec![0.0; outer * m * inner];
    let inv = 1.0 / window as f64;
    for o in 0..outer {
        for j in 0..m {
            let dst = (o * m + j) * inner;
            for k in 0..window {
                let src = (o * n + j + k) * inner;
                for i in 0..inner {
                    out[dst + i] += x[src + i];
                }
            }
            for v in &mut out[dst..dst + inner] {
                *v *= inv;
            }
        }
    }
    (out_dims, out)
}

pub fn box_axis_backward(dims: &[usize], axis: usize, window: usize, grad: &[f64]) -> Vec<f64> {
    let n = dims[axis];
    let m = n + 1 - window;
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let inv = 1.0 / window as f64;
    let mut gx = vec![0.0; outer * n * inner];
    for o in 0..outer {
        for j in 0..m {
            let src = (o * m + j) * inner;
            for k in 0..window {
                let dst = (o * n + j + k) * inner;
                for i in 0..inner {
                    gx[dst + i] += grad[src + i] * inv;
                }
            }
        }
    }
    gx
}

/// Mirror index without repeating the edge sample (`d c b | a b c d | c b a`).
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Same-size 2D correlation over the two leading axes of `(n1, n2, rest)`
/// with a `k x k` kernel and reflective borders.
pub fn filter2d_forward(dims: &[usize], kernel: &[f64], k: usize, x: &[f64]) -> Vec<f64> {
    let (n1, n2) = (dims[0], dims[1]);
    let rest: usize = dims[2..].iter().product();
    let r = (k / 2) as isize;
    let mut out = vec![0.0; x.len()];
    for i in 0..n1 {
        for j in 0..n2 {
            let dst = (i * n2 + j) * rest;
            for a in 0..k {
                let si = reflect(i as isize + a as isize - r, n1);
                for b in 0..k {
                    let sj = reflect(j as isize + b as isize - r, n2);
                    let kv = kernel[a * k + b];
                    let src = (si * n2 + sj) * rest;
                    for t in 0..rest {
                        out[dst + t] += kv * x[src + t];
                    }
                }
            }
        }
    }
    out
}

pub fn filter2d_backward(dims: &[usize], kernel: &[f64], k: usize, grad: &[f64]) -> Vec<f64> {
    let (n1, n2) = (dims[0], dims[1]);
    let rest: usize = dims[2..].iter().product();
    let r = (k / 2) as isize;
    let mut gx = vec![0.0; grad.len()];
    for i in 0..n1 {
        for j in 0..n2 {
            let src = (i * n2 + j) * rest;
            for a in 0..k {
                let si = reflect(i as isize + a as isize - r, n1);
                for b in 0..k {
                    let sj = reflect(j as isize + b as isize - r, n2);
                    let kv = kernel[a * k + b];
                    let dst = (si * n2 + sj) * rest;
                    for t in 0..rest {
                        gx[dst + t] += kv * grad[src + t];
                    }
                }
            }
        }
    }
    gx
}
