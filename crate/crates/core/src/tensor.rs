//! Dense row-major tensors of `f64`, real or complex.
//!
//! Complex tensors store interleaved `(re, im)` pairs, so a complex tensor
//! with extents `dims` holds `2 * product(dims)` floats.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Real,
    Complex,
}

impl Kind {
    /// Number of stored floats per element.
    pub fn width(self) -> usize {
        match self {
            Kind::Real => 1,
            Kind::Complex => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
    kind: Kind,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f64>, kind: Kind) -> Result<Self> {
        let expected = numel(dims) * kind.width();
        if data.len() != expected {
            bail!(
                Shape,
                "{:?} {:?} tensor needs {} values, got {}",
                dims,
                kind,
                expected,
                data.len()
            );
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
            kind,
        })
    }

    pub fn real(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::new(dims, data, Kind::Real)
    }

    pub fn complex(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::new(dims, data, Kind::Complex)
    }

    pub fn zeros(dims: &[usize], kind: Kind) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; numel(dims) * kind.width()],
            kind,
        }
    }

    pub fn full(dims: &[usize], value: f64) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![value; numel(dims)],
            kind: Kind::Real,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            dims: Vec::new(),
            data: vec![value],
            kind: Kind::Real,
        }
    }

    /// Builds a complex tensor from separate real and imaginary parts.
    pub fn from_parts(dims: &[usize], re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            bail!(Shape, "real/imaginary parts differ in length");
        }
        let mut data = Vec::with_capacity(2 * re.len());
        for (a, b) in re.iter().zip(im) {
            data.push(*a);
            data.push(*b);
        }
        Self::complex(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn is_complex(&self) -> bool {
        self.kind == Kind::Complex
    }

    /// Number of logical elements (complex pairs count once).
    pub fn numel(&self) -> usize {
        numel(&self.dims)
    }

    /// Raw storage; complex tensors are interleaved.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        if numel(dims) != self.numel() {
            bail!(Shape, "cannot reshape {:?} into {:?}", self.dims, dims);
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn require_complex(&self) -> Result<()> {
        if self.kind != Kind::Complex {
            return Err(Error::Kind { expected: "complex" });
        }
        Ok(())
    }

    pub fn require_real(&self) -> Result<()> {
        if self.kind != Kind::Real {
            return Err(Error::Kind { expected: "real" });
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.dims == other.dims && self.kind == other.kind
    }

    /// Complex element `i` as `(re, im)`.
    #[inline]
    pub fn c(&self, i: usize) -> (f64, f64) {
        (self.data[2 * i], self.data[2 * i + 1])
    }

    #[inline]
    pub fn set_c(&mut self, i: usize, v: (f64, f64)) {
        self.data[2 * i] = v.0;
        self.data[2 * i + 1] = v.1;
    }

    /// Flat element index of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm over all stored floats.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Per-element magnitude; identity on real tensors up to sign.
    pub fn abs(&self) -> Tensor {
        let data = match self.kind {
            Kind::Real => self.data.iter().map(|v| v.abs()).collect(),
            Kind::Complex => self
                .data
                .chunks_exact(2)
                .map(|c| libm::hypot(c[0], c[1]))
                .collect(),
        };
        Tensor {
            dims: self.dims.clone(),
            data,
            kind: Kind::Real,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            kind: self.kind,
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if !self.same_shape(other) {
            bail!(Shape, "{:?} vs {:?}", self.dims, other.dims);
        }
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            kind: self.kind,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    /// Real inner product over the raw storage, i.e. `Re <a, b>` for complex.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if !self.same_shape(other) {
            bail!(Shape, "{:?} vs {:?}", self.dims, other.dims);
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Complex inner product `<a, b> = sum conj(a) * b`.
    pub fn cdot(&self, other: &Tensor) -> Result<(f64, f64)> {
        self.require_complex()?;
        if !self.same_shape(other) {
            bail!(Shape, "{:?} vs {:?}", self.dims, other.dims);
        }
        let mut re = 0.0;
        let mut im = 0.0;
        for (a, b) in self.data.chunks_exact(2).zip(other.data.chunks_exact(2)) {
            re += a[0] * b[0] + a[1] * b[1];
            im += a[0] * b[1] - a[1] * b[0];
        }
        Ok((re, im))
    }

    pub fn real_part(&self) -> Tensor {
        match self.kind {
            Kind::Real => self.clone(),
            Kind::Complex => Tensor {
                dims: self.dims.clone(),
                data: self.data.iter().step_by(2).copied().collect(),
                kind: Kind::Real,
            },
        }
    }

    pub fn to_complex(&self) -> Tensor {
        match self.kind {
            Kind::Complex => self.clone(),
            Kind::Real => Tensor {
                dims: self.dims.clone(),
                data: self.data.iter().flat_map(|&v| [v, 0.0]).collect(),
                kind: Kind::Complex,
            },
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Splits a complex tensor into a real tensor with a leading channel axis of
/// extent 2 holding the real and imaginary parts.
pub fn complex_to_channels(x: &Tensor) -> Result<Tensor> {
    x.require_complex()?;
    let n = x.numel();
    let mut data = vec![0.0; 2 * n];
    for i in 0..n {
        data[i] = x.data[2 * i];
        data[n + i] = x.data[2 * i + 1];
    }
    let mut dims = vec![2];
    dims.extend_from_slice(&x.dims);
    Tensor::real(&dims, data)
}

/// Inverse of [`complex_to_channels`].
pub fn channels_to_complex(x: &Tensor) -> Result<Tensor> {
    x.require_real()?;
    if x.dims.first() != Some(&2) {
        bail!(Shape, "channel axis must have extent 2, got {:?}", x.dims);
    }
    let n = x.numel() / 2;
    let mut data = vec![0.0; 2 * n];
    for i in 0..n {
        data[2 * i] = x.data[i];
        data[2 * i + 1] = x.data[n + i];
    }
    Tensor::complex(&x.dims[1..], data)
}

pub fn numel(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Row-major strides for `dims`.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(Tensor::real(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::complex(&[2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn channels_of_scalar() {
        let x = Tensor::complex(&[1], vec![3.0, 4.0]).unwrap();
        let c = complex_to_channels(&x).unwrap();
        assert_eq!(c.dims(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 4.0]);
    }

    #[test]
    fn imaginary_input_has_zero_real_channel() {
        let x = Tensor::from_parts(&[3], &[0.0; 3], &[1.0, -2.0, 5.0]).unwrap();
        let c = complex_to_channels(&x).unwrap();
        assert!(c.data()[..3].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channels_inverse_checks_extent() {
        let bad = Tensor::real(&[3, 2], vec![0.0; 6]).unwrap();
        assert!(channels_to_complex(&bad).is_err());
    }

    #[test]
    fn strides_row_major() {
        assert_eq!(strides(&[2, 3, 4]), vec![12, 4, 1]);
        let t = Tensor::zeros(&[2, 3, 4], Kind::Real);
        assert_eq!(t.offset(&[1, 2, 3]), 23);
    }
}
