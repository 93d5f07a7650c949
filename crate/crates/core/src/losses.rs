//! Training losses on the tape.
//!
//! Image losses act on real magnitude volumes `(n1, n2, nf)`; per-frame
//! terms are summed over frames.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{bail, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const HFEN_SIZE: usize = 15;
pub const HFEN_SIGMA: f64 = 1.5;
pub const NMAE_WEIGHT: f64 = 3.0;

/// Reference dynamic range `max - min`, or 1 when degenerate.
pub fn dynamic_range(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let r = hi - lo;
    if r > 0.0 && r.is_finite() {
        r
    } else {
        1.0
    }
}

fn real3(tape: &Tape, v: Var) -> Result<[usize; 3]> {
    let t = tape.value(v);
    t.require_real()?;
    match *t.dims() {
        [a, b] => Ok([a, b, 1]),
        [a, b, c] => Ok([a, b, c]),
        _ => bail!(Shape, "expected a real (n1, n2[, nf]) volume, got {:?}", t.dims()),
    }
}

fn pair(tape: &mut Tape, a: Var, b: Var) -> Result<(Var, Var, [usize; 3])> {
    let da = real3(tape, a)?;
    let db = real3(tape, b)?;
    if da != db {
        bail!(Shape, "{:?} vs {:?}", da, db);
    }
    let a = tape.reshape(a, &da)?;
    let b = tape.reshape(b, &db)?;
    Ok((a, b, da))
}

/// Local-statistics SSIM map with box windows along `axes`; `c1`/`c2` are
/// constants shaped like the map.
fn ssim_map(tape: &mut Tape, a: Var, b: Var, axes: &[(usize, usize)], c1: Var, c2: Var) -> Result<Var> {
    let boxed = |tape: &mut Tape, v: Var| -> Result<Var> {
        let mut h = v;
        for &(axis, w) in axes {
            h = tape.box_axis(h, axis, w)?;
        }
        Ok(h)
    };
    let ma = boxed(tape, a)?;
    let mb = boxed(tape, b)?;
    let aa = tape.mul(a, a)?;
    let bb = tape.mul(b, b)?;
    let ab = tape.mul(a, b)?;
    let eaa = boxed(tape, aa)?;
    let ebb = boxed(tape, bb)?;
    let eab = boxed(tape, ab)?;
    let ma2 = tape.mul(ma, ma)?;
    let mb2 = tape.mul(mb, mb)?;
    let mab = tape.mul(ma, mb)?;
    let va = tape.sub(eaa, ma2)?;
    let vb = tape.sub(ebb, mb2)?;
    let cov = tape.sub(eab, mab)?;
    let n1 = tape.scale(mab, 2.0);
    let n1 = tape.add(n1, c1)?;
    let n2 = tape.scale(cov, 2.0);
    let n2 = tape.add(n2, c2)?;
    let d1 = tape.add(ma2, mb2)?;
    let d1 = tape.add(d1, c1)?;
    let d2 = tape.add(va, vb)?;
    let d2 = tape.add(d2, c2)?;
    let num = tape.mul(n1, n2)?;
    let den = tape.mul(d1, d2)?;
    tape.div(num, den)
}

/// Mean over frames of the per-frame 2D SSIM (7x7 window clipped to the
/// extent, range from the reference `b` per frame).
pub fn ssim(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (a, b, [n1, n2, nf]) = pair(tape, a, b)?;
    let (w1, w2) = (SSIM_WINDOW.min(n1), SSIM_WINDOW.min(n2));
    let bt = tape.value(b).clone();
    let ranges: Vec<f64> = (0..nf)
        .map(|t| dynamic_range((0..n1 * n2).map(|i| bt.data()[i * nf + t])))
        .collect();
    let map_len = (n1 - w1 + 1) * (n2 - w2 + 1);
    let dims = [n1 - w1 + 1, n2 - w2 + 1, nf];
    let c = |k: f64| -> Result<Tensor> {
        let mut v = vec![0.0; map_len * nf];
        for i in 0..map_len {
            for t in 0..nf {
                v[i * nf + t] = (k * ranges[t]) * (k * ranges[t]);
            }
        }
        Tensor::real(&dims, v)
    };
    let c1 = tape.constant(c(SSIM_K1)?);
    let c2 = tape.constant(c(SSIM_K2)?);
    let map = ssim_map(tape, a, b, &[(0, w1), (1, w2)], c1, c2)?;
    tape.mean(map)
}

/// SSIM over the whole `(n1, n2, nf)` volume with a 7x7x7 window clipped to
/// the extents and the range of `b`.
pub fn ssim3d(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (a, b, [n1, n2, nf]) = pair(tape, a, b)?;
    let w = [SSIM_WINDOW.min(n1), SSIM_WINDOW.min(n2), SSIM_WINDOW.min(nf)];
    let range = dynamic_range(tape.value(b).data().iter().copied());
    let dims = [n1 - w[0] + 1, n2 - w[1] + 1, nf - w[2] + 1];
    let c1 = tape.constant(Tensor::full(&dims, (SSIM_K1 * range) * (SSIM_K1 * range)));
    let c2 = tape.constant(Tensor::full(&dims, (SSIM_K2 * range) * (SSIM_K2 * range)));
    let map = ssim_map(tape, a, b, &[(0, w[0]), (1, w[1]), (2, w[2])], c1, c2)?;
    tape.mean(map)
}

/// `mean |a - b|` for real tensors.
pub fn l1(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let d = tape.abs(d)?;
    tape.mean(d)
}

/// `mean |a - b|^2`; complex inputs use the squared modulus.
pub fn mse(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let d = if tape.value(d).is_complex() { tape.to_channels(d)? } else { d };
    let sq = tape.square(d)?;
    let total = tape.sum(sq)?;
    let n = tape.value(a).numel() as f64;
    Ok(tape.scale(total, 1.0 / n))
}

/// `sum |y_hat - y| / sum |y|` for complex k-space with constant `y`.
pub fn nmae(tape: &mut Tape, y_hat: Var, y: Var) -> Result<Var> {
    let yt = tape.value(y);
    yt.require_complex()?;
    let den: f64 = yt.abs().sum();
    if den == 0.0 {
        bail!(Numeric, "NMAE reference is identically zero");
    }
    let d = tape.sub(y_hat, y)?;
    let m = tape.cabs(d)?;
    let s = tape.sum(m)?;
    Ok(tape.scale(s, 1.0 / den))
}

/// Zero-mean 15x15 Laplacian-of-Gaussian kernel with sigma 1.5, row-major.
pub fn log_kernel() -> Vec<f64> {
    let k = HFEN_SIZE;
    let r = (k / 2) as f64;
    let s2 = HFEN_SIGMA * HFEN_SIGMA;
    let mut v: Vec<f64> = (0..k * k)
        .map(|i| {
            let (x, y) = ((i / k) as f64 - r, (i % k) as f64 - r);
            let q = (x * x + y * y) / (2.0 * s2);
            -(1.0 - q) * libm::exp(-q) / (core::f64::consts::PI * s2 * s2)
        })
        .collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in &mut v {
        *x -= mean;
    }
    v
}

/// Sum over frames of `||LoG(a_t) - LoG(b_t)|| / ||LoG(b_t)||` with
/// reflective borders.
pub fn hfen(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (a, b, [n1, n2, nf]) = pair(tape, a, b)?;
    let kernel = log_kernel();
    let lb = crate::autodiff::kernels::filter2d_forward(&[n1, n2, nf], &kernel, HFEN_SIZE, tape.value(b).data());
    let mut inv = vec![0.0; nf];
    for (t, slot) in inv.iter_mut().enumerate() {
        let norm = libm::sqrt((0..n1 * n2).map(|i| lb[i * nf + t] * lb[i * nf + t]).sum());
        if norm == 0.0 {
            bail!(Numeric, "HFEN reference frame {} has no high-frequency content", t);
        }
        *slot = 1.0 / norm;
    }
    let d = tape.sub(a, b)?;
    let f = tape.filter2d(d, kernel, HFEN_SIZE)?;
    let sq = tape.square(f)?;
    let rows = tape.sum_axis(sq, 0)?;
    let per_frame = tape.sum_axis(rows, 0)?;
    let norms = tape.sqrt(per_frame)?;
    let w = tape.constant(Tensor::real(&[nf], inv)?);
    let ratio = tape.mul(norms, w)?;
    tape.sum(ratio)
}

/// `w_j = 10^((j - T) / (T - 1))` for `j = 1..T`; a single step gets 1.
pub fn step_weights(t: usize) -> Vec<f64> {
    if t <= 1 {
        return vec![1.0; t];
    }
    (1..=t)
        .map(|j| libm::pow(10.0, (j as f64 - t as f64) / (t as f64 - 1.0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Image (SSIM, L1, HFEN, SSIM3D) plus k-space NMAE terms.
    DualDomain,
    /// Image-domain magnitude MSE with weights 0.1 for intermediate steps
    /// and 1 for the last.
    Mse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::DualDomain => "dual",
            LossKind::Mse => "mse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dual" => Some(LossKind::DualDomain),
            "mse" => Some(LossKind::Mse),
            _ => None,
        }
    }
}

/// Per-frame image terms of the dual-domain loss for one step.
fn image_terms(tape: &mut Tape, x: Var, target_mag: Var, nf: usize) -> Result<Var> {
    let mag = tape.cabs(x)?;
    let s = ssim(tape, mag, target_mag)?;
    // sum_t (1 - SSIM_t) = nf - nf * mean_t SSIM_t
    let s = tape.scale(s, -(nf as f64));
    let s = tape.add_const(s, nf as f64)?;
    let l = l1(tape, mag, target_mag)?;
    let l = tape.scale(l, nf as f64);
    let h = hfen(tape, mag, target_mag)?;
    let s3 = ssim3d(tape, mag, target_mag)?;
    let s3 = tape.scale(s3, -1.0);
    let s3 = tape.add_const(s3, 1.0)?;
    let acc = tape.add(s, l)?;
    let acc = tape.add(acc, h)?;
    tape.add(acc, s3)
}

/// Composite objective over the unrolled sequence `xs` against the complex
/// target `x_star`; `kspace` is `(y_hat, y)` on the full grid for the NMAE
/// term (ignored by [`LossKind::Mse`]).
pub fn composite_loss(
    tape: &mut Tape,
    kind: LossKind,
    xs: &[Var],
    x_star: Var,
    kspace: Option<(Var, Var)>,
) -> Result<Var> {
    if xs.is_empty() {
        bail!(Invalid, "empty reconstruction sequence");
    }
    let target = tape.value(x_star);
    target.require_complex()?;
    if target.rank() != 3 {
        bail!(Shape, "target must be (n1, n2, nf), got {:?}", target.dims());
    }
    let nf = target.dims()[2];
    let t = xs.len();
    let mut total: Option<Var> = None;
    let push = |tape: &mut Tape, total: &mut Option<Var>, term: Var| -> Result<()> {
        *total = Some(match *total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
        Ok(())
    };
    match kind {
        LossKind::DualDomain => {
            let target_mag = tape.cabs(x_star)?;
            for (&x, w) in xs.iter().zip(step_weights(t)) {
                let term = image_terms(tape, x, target_mag, nf)?;
                let term = tape.scale(term, w);
                push(tape, &mut total, term)?;
            }
            let (y_hat, y) = kspace.ok_or_else(|| crate::Error::Invalid("dual-domain loss needs k-space".into()))?;
            let k = nmae(tape, y_hat, y)?;
            let k = tape.scale(k, NMAE_WEIGHT);
            push(tape, &mut total, k)?;
        }
        LossKind::Mse => {
            let target_mag = tape.cabs(x_star)?;
            for (j, &x) in xs.iter().enumerate() {
                let w = if j + 1 == t { 1.0 } else { 0.1 };
                let mag = tape.cabs(x)?;
                let m = mse(tape, mag, target_mag)?;
                let m = tape.scale(m, w * nf as f64);
                push(tape, &mut total, m)?;
            }
        }
    }
    Ok(total.expect("at least one term"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(f: impl Fn(&mut Tape, Var, Var) -> Result<Var>, a: Tensor, b: Tensor) -> f64 {
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a), tape.constant(b));
        let out = f(&mut tape, va, vb).unwrap();
        tape.value(out).data()[0]
    }

    fn ramp(n1: usize, n2: usize, nf: usize) -> Tensor {
        let data = (0..n1 * n2 * nf).map(|i| ((i * 37) % 17) as f64 / 17.0).collect();
        Tensor::real(&[n1, n2, nf], data).unwrap()
    }

    #[test]
    fn weights_at_eight_steps() {
        let w = step_weights(8);
        assert!((w[0] - 0.1).abs() < 1e-15);
        assert_eq!(w[7], 1.0);
        assert_eq!(step_weights(1), vec![1.0]);
    }

    #[test]
    fn ssim_identity_is_one() {
        let a = ramp(9, 9, 2);
        assert!((eval(ssim, a.clone(), a.clone()) - 1.0).abs() < 1e-12);
        assert!((eval(ssim3d, a.clone(), a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_cases() {
        let b = Tensor::real(&[4], vec![1.0; 4]).unwrap();
        let a = Tensor::real(&[4], vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((eval(l1, a.clone(), b.clone()) - 0.25).abs() < 1e-15);
        assert!((eval(mse, a, b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hfen_dc_invariance_and_scaling() {
        let b = ramp(16, 16, 2);
        let shifted = b.map(|x| x + 3.0);
        assert!(eval(hfen, shifted, b.clone()).abs() < 1e-10);
        let doubled = b.scale(2.0);
        assert!((eval(hfen, doubled, b.clone()) - 2.0).abs() < 1e-12);
        assert!(eval(hfen, b.clone(), b).abs() < 1e-15);
    }

    #[test]
    fn log_kernel_sums_to_zero() {
        let k = log_kernel();
        assert_eq!(k.len(), 225);
        assert!(k.iter().sum::<f64>().abs() < 1e-15);
    }
}
