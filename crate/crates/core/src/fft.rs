//! Centered, orthonormal discrete Fourier transforms.
//!
//! The zero frequency sits at index `n / 2` (integer division) on every
//! transformed axis, and each 1D pass is scaled by `1/sqrt(n)`, so the
//! transforms are unitary. Power-of-two lengths use an iterative radix-2
//! kernel; other lengths go through Bluestein's chirp-z algorithm.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{strides, Tensor};

type C = (f64, f64);

#[inline]
fn cmul(a: C, b: C) -> C {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn radix2(buf: &mut [C], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = ang * k as f64;
                let w = (libm::cos(a), libm::sin(a));
                let u = buf[start + k];
                let v = cmul(buf[start + k + half], w);
                buf[start + k] = (u.0 + v.0, u.1 + v.1);
                buf[start + k + half] = (u.0 - v.0, u.1 - v.1);
            }
        }
        len <<= 1;
    }
}

fn bluestein(buf: &mut [C], inverse: bool) {
    let n = buf.len();
    let m = (2 * n - 1).next_power_of_two();
    let sign = if inverse { 1.0 } else { -1.0 };
    // k^2 mod 2n keeps the chirp phase small for large k.
    let chirp: Vec<C> = (0..n)
        .map(|k| {
            let kk = (k * k) % (2 * n);
            let a = sign * PI * kk as f64 / n as f64;
            (libm::cos(a), libm::sin(a))
        })
        .collect();
    let mut a = vec![(0.0, 0.0); m];
    for k in 0..n {
        a[k] = cmul(buf[k], chirp[k]);
    }
    let mut b = vec![(0.0, 0.0); m];
    b[0] = (chirp[0].0, -chirp[0].1);
    for k in 1..n {
        let c = (chirp[k].0, -chirp[k].1);
        b[k] = c;
        b[m - k] = c;
    }
    radix2(&mut a, false);
    radix2(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x = cmul(*x, *y);
    }
    radix2(&mut a, true);
    let inv_m = 1.0 / m as f64;
    for k in 0..n {
        let v = (a[k].0 * inv_m, a[k].1 * inv_m);
        buf[k] = cmul(v, chirp[k]);
    }
}

/// Unnormalized in-place DFT of a complex line.
pub fn dft_in_place(buf: &mut [C], inverse: bool) {
    match buf.len() {
        0 | 1 => {}
        n if n.is_power_of_two() => radix2(buf, inverse),
        _ => bluestein(buf, inverse),
    }
}

/// Centered orthonormal 1D transform along `axis` of a complex tensor.
fn transform_axis(x: &mut Tensor, axis: usize, inverse: bool) {
    let dims = x.dims().to_vec();
    let n = dims[axis];
    if n == 0 {
        return;
    }
    let st = strides(&dims);
    let stride = st[axis];
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let half = n / 2;
    let scale = 1.0 / libm::sqrt(n as f64);
    let mut line = vec![(0.0, 0.0); n];
    let data = x.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * stride + i;
            // ifftshift on the way in
            for (k, slot) in line.iter_mut().enumerate() {
                let src = base + ((k + half) % n) * stride;
                *slot = (data[2 * src], data[2 * src + 1]);
            }
            dft_in_place(&mut line, inverse);
            // fftshift on the way out
            for (k, v) in line.iter().enumerate() {
                let dst = base + ((k + half) % n) * stride;
                data[2 * dst] = v.0 * scale;
                data[2 * dst + 1] = v.1 * scale;
            }
        }
    }
}

fn check_axes(x: &Tensor, axes: (usize, usize)) -> Result<()> {
    x.require_complex()?;
    for axis in [axes.0, axes.1] {
        if axis >= x.rank() {
            return Err(Error::Axis {
                axis,
                rank: x.rank(),
            });
        }
    }
    if axes.0 == axes.1 {
        return Err(Error::Invalid(alloc::format!(
            "spatial axes must differ, got {:?}",
            axes
        )));
    }
    Ok(())
}

/// Centered orthonormal forward 2D DFT over the two given axes.
pub fn fft2c(x: &Tensor, axes: (usize, usize)) -> Result<Tensor> {
    check_axes(x, axes)?;
    let mut y = x.clone();
    transform_axis(&mut y, axes.0, false);
    transform_axis(&mut y, axes.1, false);
    Ok(y)
}

/// Centered orthonormal inverse 2D DFT over the two given axes.
pub fn ifft2c(y: &Tensor, axes: (usize, usize)) -> Result<Tensor> {
    check_axes(y, axes)?;
    let mut x = y.clone();
    transform_axis(&mut x, axes.0, true);
    transform_axis(&mut x, axes.1, true);
    Ok(x)
}
