//! Acquisition model: sample space, masks, the multi-coil forward operator
//! and its adjoint, coil sensitivities and preprocessing.
//!
//! Layouts (row-major):
//! - k-space `(n1, n2, nc, nf)`
//! - images `(n1, n2, nf)`
//! - sensitivity maps `(n1, n2, nc)`

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{MaskLayout, ParamStore, Tape, Var};
use crate::error::{bail, Error, Result};
use crate::fft;
use crate::nn::Unet2d;
use crate::tensor::Tensor;

/// Spatial axes of k-space volumes, images and maps.
pub const SPATIAL: (usize, usize) = (0, 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleMode {
    /// Ω = columns `0..n2` (phase-encode lines).
    Lines,
    /// Ω = points `i1 * n2 + i2`.
    Points,
}

impl SampleMode {
    pub fn layout(self) -> MaskLayout {
        match self {
            SampleMode::Lines => MaskLayout::Lines,
            SampleMode::Points => MaskLayout::Points,
        }
    }

    pub fn omega(self, n1: usize, n2: usize) -> usize {
        match self {
            SampleMode::Lines => n2,
            SampleMode::Points => n1 * n2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SampleMode::Lines => "line1d",
            SampleMode::Points => "point2d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "line1d" | "1d" | "lines" => Some(SampleMode::Lines),
            "point2d" | "2d" | "points" => Some(SampleMode::Points),
            _ => None,
        }
    }
}

/// Per-frame acquired index sets Λ = {Λ^t} over Ω.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplingSet {
    mode: SampleMode,
    n1: usize,
    n2: usize,
    frames: Vec<Vec<usize>>,
}

impl SamplingSet {
    /// Sorts and validates each frame (unique, in range).
    pub fn new(mode: SampleMode, n1: usize, n2: usize, frames: Vec<Vec<usize>>) -> Result<Self> {
        let omega = mode.omega(n1, n2);
        if frames.is_empty() {
            bail!(Invalid, "sampling set needs at least one frame");
        }
        let mut frames = frames;
        for (t, f) in frames.iter_mut().enumerate() {
            f.sort_unstable();
            if f.windows(2).any(|w| w[0] == w[1]) {
                bail!(Invalid, "frame {} has duplicate indices", t);
            }
            if f.last().is_some_and(|&i| i >= omega) {
                bail!(Invalid, "frame {} has an index outside |Ω| = {}", t, omega);
            }
        }
        Ok(Self { mode, n1, n2, frames })
    }

    pub fn empty(mode: SampleMode, n1: usize, n2: usize, nf: usize) -> Self {
        Self {
            mode,
            n1,
            n2,
            frames: vec![Vec::new(); nf],
        }
    }

    pub fn full(mode: SampleMode, n1: usize, n2: usize, nf: usize) -> Self {
        let all: Vec<usize> = (0..mode.omega(n1, n2)).collect();
        Self {
            mode,
            n1,
            n2,
            frames: vec![all; nf],
        }
    }

    pub fn mode(&self) -> SampleMode {
        self.mode
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn nf(&self) -> usize {
        self.frames.len()
    }

    /// |Ω|.
    pub fn omega(&self) -> usize {
        self.mode.omega(self.n1, self.n2)
    }

    pub fn frame(&self, t: usize) -> &[usize] {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Vec<usize>] {
        &self.frames
    }

    pub fn total(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, t: usize, omega: usize) -> bool {
        self.frames[t].binary_search(&omega).is_ok()
    }

    fn check_compatible(&self, other: &SamplingSet) -> Result<()> {
        if self.mode != other.mode || self.n1 != other.n1 || self.n2 != other.n2 || self.nf() != other.nf() {
            bail!(Shape, "sampling sets live on different grids");
        }
        Ok(())
    }

    pub fn union(&self, other: &SamplingSet) -> Result<SamplingSet> {
        self.check_compatible(other)?;
        let frames = self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| {
                let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
                u.sort_unstable();
                u.dedup();
                u
            })
            .collect();
        Ok(SamplingSet { frames, ..self.clone() })
    }

    pub fn is_subset_of(&self, other: &SamplingSet) -> bool {
        self.check_compatible(other).is_ok()
            && self
                .frames
                .iter()
                .enumerate()
                .all(|(t, f)| f.iter().all(|&i| other.contains(t, i)))
    }

    /// True when every frame holds the same indices.
    pub fn is_unified(&self) -> bool {
        self.frames.windows(2).all(|w| w[0] == w[1])
    }

    /// 0/1 mask of shape `(rows, |Ω|)`; `rows` is 1 when `shared`, else nf.
    pub fn to_rows(&self, shared: bool) -> Tensor {
        let rows = if shared { 1 } else { self.nf() };
        let omega = self.omega();
        let mut data = vec![0.0; rows * omega];
        for r in 0..rows {
            for &i in &self.frames[r] {
                data[r * omega + i] = 1.0;
            }
        }
        Tensor::real(&[rows, omega], data).expect("mask dims")
    }

    /// Inverse of [`SamplingSet::to_rows`]; a single row is broadcast to `nf`
    /// frames. Entries above 0.5 count as sampled.
    pub fn from_rows(mode: SampleMode, n1: usize, n2: usize, nf: usize, rows: &Tensor) -> Result<Self> {
        let omega = mode.omega(n1, n2);
        if rows.rank() != 2 || rows.dims()[1] != omega {
            bail!(Shape, "mask rows {:?} for |Ω| = {}", rows.dims(), omega);
        }
        let r = rows.dims()[0];
        let frames = (0..nf)
            .map(|t| {
                let row = if r == 1 { 0 } else { t };
                (0..omega).filter(|&i| rows.data()[row * omega + i] > 0.5).collect()
            })
            .collect();
        Self::new(mode, n1, n2, frames)
    }

    /// Per-element 0/1 factors over `(n1, n2, nc, nf)` k-space.
    pub fn kspace_mask(&self, nc: usize) -> Vec<f64> {
        let nf = self.nf();
        let mut m = vec![0.0; self.n1 * self.n2 * nc * nf];
        for (t, f) in self.frames.iter().enumerate() {
            for &w in f {
                let points: Vec<(usize, usize)> = match self.mode {
                    SampleMode::Lines => (0..self.n1).map(|i1| (i1, w)).collect(),
                    SampleMode::Points => vec![(w / self.n2, w % self.n2)],
                };
                for (i1, i2) in points {
                    for k in 0..nc {
                        m[((i1 * self.n2 + i2) * nc + k) * nf + t] = 1.0;
                    }
                }
            }
        }
        m
    }
}

/// Dynamic multi-coil k-space `(n1, n2, nc, nf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceVolume {
    data: Tensor,
}

impl KSpaceVolume {
    pub fn new(data: Tensor) -> Result<Self> {
        data.require_complex()?;
        if data.rank() != 4 || data.dims().iter().any(|&d| d == 0) {
            bail!(Shape, "k-space must be (n1, n2, nc, nf) with nonzero extents, got {:?}", data.dims());
        }
        if !data.is_finite() {
            bail!(Numeric, "k-space contains non-finite values");
        }
        Ok(Self { data })
    }

    pub fn zeros(n1: usize, n2: usize, nc: usize, nf: usize) -> Self {
        Self {
            data: Tensor::zeros(&[n1, n2, nc, nf], crate::Kind::Complex),
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn n1(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn n2(&self) -> usize {
        self.data.dims()[1]
    }

    pub fn nc(&self) -> usize {
        self.data.dims()[2]
    }

    pub fn nf(&self) -> usize {
        self.data.dims()[3]
    }
}

/// Per-coil complex sensitivity profiles `(n1, n2, nc)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMaps {
    data: Tensor,
}

impl SensitivityMaps {
    pub fn new(data: Tensor) -> Result<Self> {
        data.require_complex()?;
        if data.rank() != 3 {
            bail!(Shape, "maps must be (n1, n2, nc), got {:?}", data.dims());
        }
        Ok(Self { data })
    }

    /// Single coil with unit sensitivity everywhere.
    pub fn unit(n1: usize, n2: usize) -> Self {
        let n = n1 * n2;
        Self {
            data: Tensor::from_parts(&[n1, n2, 1], &vec![1.0; n], &vec![0.0; n]).expect("dims"),
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn nc(&self) -> usize {
        self.data.dims()[2]
    }

    /// Root-sum-of-squares magnitude per voxel, `(n1, n2)` row-major.
    pub fn rss(&self) -> Vec<f64> {
        let nc = self.nc();
        (0..self.data.numel() / nc)
            .map(|i| {
                libm::sqrt(
                    (0..nc)
                        .map(|k| {
                            let c = self.data.c(i * nc + k);
                            c.0 * c.0 + c.1 * c.1
                        })
                        .sum(),
                )
            })
            .collect()
    }
}

/// Complex dynamic image `(n1, n2, nf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicImage {
    data: Tensor,
}

impl DynamicImage {
    pub fn new(data: Tensor) -> Result<Self> {
        data.require_complex()?;
        if data.rank() != 3 {
            bail!(Shape, "images must be (n1, n2, nf), got {:?}", data.dims());
        }
        Ok(Self { data })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn nf(&self) -> usize {
        self.data.dims()[2]
    }

    /// Magnitude of frame `t` as a real `(n1, n2)` tensor.
    pub fn frame_magnitude(&self, t: usize) -> Tensor {
        let d = self.data.dims();
        let (n, nf) = (d[0] * d[1], d[2]);
        let data = (0..n)
            .map(|i| {
                let c = self.data.c(i * nf + t);
                libm::hypot(c.0, c.1)
            })
            .collect();
        Tensor::real(&[d[0], d[1]], data).expect("dims")
    }
}

fn check_grid(lambda: &SamplingSet, y: &Tensor) -> Result<()> {
    let d = y.dims();
    if lambda.n1 != d[0] || lambda.n2 != d[1] || lambda.nf() != d[3] {
        bail!(
            Shape,
            "sampling grid ({}, {}, nf={}) vs k-space {:?}",
            lambda.n1,
            lambda.n2,
            lambda.nf(),
            d
        );
    }
    Ok(())
}

/// Keeps the entries of every coil at `(t, ω ∈ Λ^t)`, zeroes the rest.
pub fn apply_mask(lambda: &SamplingSet, y: &KSpaceVolume) -> Result<KSpaceVolume> {
    check_grid(lambda, &y.data)?;
    let mask = lambda.kspace_mask(y.nc());
    let mut out = y.data.clone();
    for (c, m) in out.data_mut().chunks_exact_mut(2).zip(&mask) {
        c[0] *= m;
        c[1] *= m;
    }
    Ok(KSpaceVolume { data: out })
}

/// Tape form of `U_Λ F S x`: expands to coils, transforms, masks.
pub fn forward_op_var(tape: &mut Tape, x: Var, s: Var, mask: Option<(Var, SampleMode)>) -> Result<Var> {
    let coils = tape.coil_expand(x, s)?;
    let k = tape.fft2c(coils, SPATIAL)?;
    match mask {
        Some((m, mode)) => tape.mask_kspace(k, m, mode.layout()),
        None => Ok(k),
    }
}

/// Tape form of the SENSE combination `sum_k conj(S_k) F^-1 y_k`.
pub fn sense_reduce_var(tape: &mut Tape, y: Var, s: Var) -> Result<Var> {
    let img = tape.ifft2c(y, SPATIAL)?;
    tape.coil_combine(img, s)
}

/// `U_{Λ^t} F (S^k ⊙ x_t)` for every coil and frame.
pub fn forward_operator(x: &DynamicImage, s: &SensitivityMaps, lambda: &SamplingSet) -> Result<KSpaceVolume> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.data.clone());
    let sv = tape.constant(s.data.clone());
    let full = forward_op_var(&mut tape, xv, sv, None)?;
    let y = KSpaceVolume::new(tape.value(full).clone())?;
    apply_mask(lambda, &y)
}

/// Per frame `sum_k conj(S^k) ⊙ ifft2c(y^k)`.
pub fn sense_reduce(y: &KSpaceVolume, s: &SensitivityMaps) -> Result<DynamicImage> {
    let mut tape = Tape::new();
    let yv = tape.constant(y.data.clone());
    let sv = tape.constant(s.data.clone());
    let img = sense_reduce_var(&mut tape, yv, sv)?;
    DynamicImage::new(tape.value(img).clone())
}

fn ceil_frac(r: f64, n: usize) -> usize {
    // tolerate representation error in products like 0.04 * 100
    libm::ceil(r * n as f64 - 1e-9) as usize
}

/// Fully sampled centered calibration region, identical in every frame.
pub fn acs_region(n1: usize, n2: usize, nf: usize, mode: SampleMode, r_acs: f64) -> Result<SamplingSet> {
    if !(r_acs > 0.0 && r_acs <= 1.0) {
        bail!(Invalid, "ACS fraction must lie in (0, 1], got {}", r_acs);
    }
    let frame: Vec<usize> = match mode {
        SampleMode::Lines => {
            let count = ceil_frac(r_acs, n2).max(1);
            if count > n2 {
                bail!(Invalid, "ACS of {} columns exceeds n2 = {}", count, n2);
            }
            let start = n2 / 2 - count / 2;
            (start..start + count).collect()
        }
        SampleMode::Points => {
            let side = libm::sqrt(r_acs);
            let h = (libm::round(side * n1 as f64) as usize).clamp(1, n1);
            let w = (libm::round(side * n2 as f64) as usize).clamp(1, n2);
            let (r0, c0) = ((n1 / 2).saturating_sub(h / 2), (n2 / 2).saturating_sub(w / 2));
            let (r0, c0) = (r0.min(n1 - h), c0.min(n2 - w));
            (r0..r0 + h)
                .flat_map(|i| (c0..c0 + w).map(move |j| i * n2 + j))
                .collect()
        }
    };
    SamplingSet::new(mode, n1, n2, vec![frame; nf])
}

/// Coil maps from ACS k-space: temporal average, inverse transform, RSS
/// normalization.
pub fn estimate_sensitivities(y_acs: &KSpaceVolume) -> Result<SensitivityMaps> {
    let (n1, n2, nc, nf) = (y_acs.n1(), y_acs.n2(), y_acs.nc(), y_acs.nf());
    let mut avg = Tensor::zeros(&[n1, n2, nc], crate::Kind::Complex);
    for e in 0..n1 * n2 * nc {
        let mut acc = (0.0, 0.0);
        for t in 0..nf {
            let c = y_acs.data.c(e * nf + t);
            acc.0 += c.0;
            acc.1 += c.1;
        }
        avg.set_c(e, (acc.0 / nf as f64, acc.1 / nf as f64));
    }
    if avg.data().iter().all(|&v| v == 0.0) {
        bail!(Invalid, "ACS data is identically zero");
    }
    let img = fft::ifft2c(&avg, SPATIAL)?;
    let mut tape = Tape::new();
    let v = tape.constant(img);
    let n = tape.rss_normalize(v)?;
    SensitivityMaps::new(tape.value(n).clone())
}

/// Channel widths of the sensitivity refinement U-Net.
#[derive(Debug, Clone, PartialEq)]
pub struct SmpConfig {
    pub channels: Vec<usize>,
}

impl Default for SmpConfig {
    fn default() -> Self {
        Self { channels: vec![8, 16] }
    }
}

/// Learned residual correction of estimated coil maps followed by RSS
/// renormalization. Coils are processed as a batch by a shared 2D U-Net on
/// stacked real/imaginary channels.
#[derive(Debug, Clone)]
pub struct SensitivityRefiner {
    net: Unet2d,
}

impl SensitivityRefiner {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &SmpConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: Unet2d::new(store, name, &cfg.channels, 2, 2, rng)?,
        })
    }

    pub fn refine(&self, tape: &mut Tape, store: &ParamStore, s0: Var) -> Result<Var> {
        let d = tape.value(s0).dims().to_vec();
        if d.len() != 3 {
            return Err(Error::Shape(alloc::format!("maps must be (n1, n2, nc), got {:?}", d)));
        }
        let (n1, n2, nc) = (d[0], d[1], d[2]);
        let ch = tape.to_channels(s0)?; // (2, n1, n2, nc)
        let batched = tape.permute(ch, &[3, 0, 1, 2])?; // (nc, 2, n1, n2)
        let x = tape.reshape(batched, &[nc, 2, 1, n1, n2])?;
        let r = self.net.forward(tape, store, x)?;
        let r = tape.reshape(r, &[nc, 2, n1, n2])?;
        let r = tape.permute(r, &[1, 2, 3, 0])?;
        let r = tape.from_channels(r)?;
        let sum = tape.add(s0, r)?;
        tape.rss_normalize(sum)
    }
}

/// Convenience wrapper around [`SensitivityRefiner::refine`] for plain values.
pub fn refine_sensitivities(
    s0: &SensitivityMaps,
    refiner: &SensitivityRefiner,
    store: &ParamStore,
) -> Result<SensitivityMaps> {
    let mut tape = Tape::new();
    let v = tape.constant(s0.data.clone());
    let out = refiner.refine(&mut tape, store, v)?;
    SensitivityMaps::new(tape.value(out).clone())
}

/// Per-frame sample count `floor(|Ω| / R)` for acceleration `R >= 1`.
pub fn budget_count(omega: usize, r: f64) -> Result<usize> {
    if !(r >= 1.0) || !r.is_finite() {
        bail!(Invalid, "acceleration must be a finite value >= 1, got {}", r);
    }
    // tolerate representation error for exact ratios such as 246 / 4.1
    Ok(libm::floor(omega as f64 / r + 1e-9) as usize)
}

/// `nf |Ω| / sum_t |Λ^t|`.
pub fn acceleration_factor(lambda: &SamplingSet) -> Result<f64> {
    let total = lambda.total();
    if total == 0 {
        bail!(Invalid, "acceleration factor of an empty sampling set");
    }
    Ok((lambda.nf() * lambda.omega()) as f64 / total as f64)
}

/// Centered spatial zero-padding performed in image space.
pub fn zero_pad_to(y: &KSpaceVolume, n1: usize, n2: usize) -> Result<KSpaceVolume> {
    let (m1, m2, nc, nf) = (y.n1(), y.n2(), y.nc(), y.nf());
    if n1 < m1 || n2 < m2 {
        bail!(Invalid, "cannot pad ({}, {}) down to ({}, {})", m1, m2, n1, n2);
    }
    let img = fft::ifft2c(&y.data, SPATIAL)?;
    let mut padded = Tensor::zeros(&[n1, n2, nc, nf], crate::Kind::Complex);
    let (o1, o2) = (n1 / 2 - m1 / 2, n2 / 2 - m2 / 2);
    let inner = nc * nf;
    for i in 0..m1 {
        for j in 0..m2 {
            for e in 0..inner {
                let src = (i * m2 + j) * inner + e;
                let dst = ((i + o1) * n2 + j + o2) * inner + e;
                padded.set_c(dst, img.c(src));
            }
        }
    }
    KSpaceVolume::new(fft::fft2c(&padded, SPATIAL)?)
}

/// Quantile `q` in `[0, 1]` with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        bail!(Invalid, "percentile of an empty sample");
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = pos - lo as f64;
    Ok(v[lo] + (v[hi] - v[lo]) * frac)
}

pub const NORMALIZATION_QUANTILE: f64 = 0.995;

/// Divides k-space by the 99.5th percentile of its magnitude on the ACS
/// region. Returns the scaled volume and the scale.
pub fn normalize(y: &KSpaceVolume, acs: &SamplingSet) -> Result<(KSpaceVolume, f64)> {
    check_grid(acs, &y.data)?;
    if acs.total() == 0 {
        bail!(Invalid, "normalization needs a nonempty ACS region");
    }
    let mask = acs.kspace_mask(y.nc());
    let mags: Vec<f64> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(e, _)| {
            let c = y.data.c(e);
            libm::hypot(c.0, c.1)
        })
        .collect();
    let s = percentile(&mags, NORMALIZATION_QUANTILE)?;
    if s <= 0.0 || !s.is_finite() {
        bail!(Numeric, "normalization scale is {}", s);
    }
    Ok((KSpaceVolume { data: y.data.scale(1.0 / s) }, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_volume(n1: usize, n2: usize, nc: usize, nf: usize) -> KSpaceVolume {
        let n = n1 * n2 * nc * nf;
        let re: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let im: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        KSpaceVolume::new(Tensor::from_parts(&[n1, n2, nc, nf], &re, &im).unwrap()).unwrap()
    }

    #[test]
    fn full_mask_is_identity_and_empty_mask_zeroes() {
        let y = ramp_volume(4, 4, 2, 2);
        let full = SamplingSet::full(SampleMode::Lines, 4, 4, 2);
        assert_eq!(apply_mask(&full, &y).unwrap(), y);
        let none = SamplingSet::empty(SampleMode::Lines, 4, 4, 2);
        assert!(apply_mask(&none, &y).unwrap().tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn line_mask_keeps_selected_columns_of_one_frame() {
        let y = ramp_volume(3, 4, 1, 2);
        let lambda = SamplingSet::new(SampleMode::Lines, 3, 4, vec![vec![0, 2], vec![]]).unwrap();
        let m = apply_mask(&lambda, &y).unwrap();
        for i1 in 0..3 {
            for i2 in 0..4 {
                let e = (i1 * 4 + i2) * 2;
                let kept = i2 == 0 || i2 == 2;
                assert_eq!(m.tensor().c(e) == y.tensor().c(e), kept || y.tensor().c(e) == (0.0, 0.0));
                assert_eq!(m.tensor().c(e + 1), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn mask_grid_mismatch_is_an_error() {
        let y = ramp_volume(4, 4, 1, 2);
        let lambda = SamplingSet::full(SampleMode::Lines, 4, 5, 2);
        assert!(apply_mask(&lambda, &y).is_err());
    }

    #[test]
    fn acs_columns_are_centered() {
        let acs = acs_region(8, 100, 1, SampleMode::Lines, 0.04).unwrap();
        assert_eq!(acs.frame(0), &[48, 49, 50, 51]);
        let acs = acs_region(8, 246, 1, SampleMode::Lines, 0.04).unwrap();
        assert_eq!(acs.frame(0).len(), 10);
        let all = acs_region(4, 6, 2, SampleMode::Lines, 1.0).unwrap();
        assert_eq!(all.frame(1), &[0, 1, 2, 3, 4, 5]);
        assert!(acs_region(4, 6, 2, SampleMode::Lines, 0.0).is_err());
        assert!(acs_region(4, 6, 2, SampleMode::Lines, 1.5).is_err());
    }

    #[test]
    fn acs_rectangle_centered_with_grid_aspect() {
        let acs = acs_region(16, 16, 1, SampleMode::Points, 0.04).unwrap();
        assert_eq!(acs.frame(0).len(), 9);
        assert!(acs.contains(0, 8 * 16 + 8));
        let full = acs_region(4, 4, 1, SampleMode::Points, 1.0).unwrap();
        assert_eq!(full.frame(0).len(), 16);
    }

    #[test]
    fn acceleration_factor_cases() {
        let l = SamplingSet::new(SampleMode::Lines, 1, 8, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(acceleration_factor(&l).unwrap(), 4.0);
        assert_eq!(acceleration_factor(&SamplingSet::full(SampleMode::Lines, 2, 8, 3)).unwrap(), 1.0);
        let cols: Vec<usize> = (0..61).collect();
        let l = SamplingSet::new(SampleMode::Lines, 1, 246, vec![cols; 12]).unwrap();
        assert!((acceleration_factor(&l).unwrap() - 4.032_786_885_245_9).abs() < 1e-9);
        assert!(acceleration_factor(&SamplingSet::empty(SampleMode::Lines, 1, 8, 2)).is_err());
    }

    #[test]
    fn acs_acceleration_is_inverse_fraction() {
        let acs = acs_region(8, 100, 3, SampleMode::Lines, 0.04).unwrap();
        assert_eq!(acceleration_factor(&acs).unwrap(), 25.0);
    }

    #[test]
    fn percentile_oracle() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert!((percentile(&v, 0.995).unwrap() - 995.005).abs() < 1e-9);
        assert_eq!(percentile(&[4.0], 0.995).unwrap(), 4.0);
    }

    #[test]
    fn normalize_constant_magnitude_and_twice() {
        let mut t = Tensor::zeros(&[4, 4, 1, 1], crate::Kind::Complex);
        for i in 0..16 {
            t.set_c(i, (0.0, 3.0));
        }
        let y = KSpaceVolume::new(t).unwrap();
        let acs = acs_region(4, 4, 1, SampleMode::Lines, 0.5).unwrap();
        let (n, s) = normalize(&y, &acs).unwrap();
        assert!((s - 3.0).abs() < 1e-15);
        assert!((n.tensor().c(2).1 - 1.0).abs() < 1e-15);
        let (_, s2) = normalize(&n, &acs).unwrap();
        assert!((s2 - 1.0).abs() < 1e-12);
        let zero = KSpaceVolume::zeros(4, 4, 1, 1);
        assert!(normalize(&zero, &acs).is_err());
    }

    #[test]
    fn two_identical_coils_share_magnitude() {
        let n1 = 4;
        let mut y = KSpaceVolume::zeros(n1, n1, 2, 1).into_tensor();
        for k in 0..2 {
            y.set_c(((2 * n1 + 2) * 2 + k) * 1, (1.0, 0.5));
        }
        let maps = estimate_sensitivities(&KSpaceVolume::new(y).unwrap()).unwrap();
        for i in 0..n1 * n1 * 2 {
            let c = maps.tensor().c(i);
            assert!((libm::hypot(c.0, c.1) - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
        assert!(estimate_sensitivities(&KSpaceVolume::zeros(4, 4, 1, 1)).is_err());
    }

    #[test]
    fn single_coil_map_is_unit_phase() {
        let y = ramp_volume(6, 6, 1, 2);
        let maps = estimate_sensitivities(&y).unwrap();
        for r in maps.rss() {
            assert!(r == 0.0 || (r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pad_identity_and_support() {
        let y = ramp_volume(8, 8, 1, 1);
        let same = zero_pad_to(&y, 8, 8).unwrap();
        for (a, b) in same.tensor().data().iter().zip(y.tensor().data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let big = zero_pad_to(&y, 16, 16).unwrap();
        let img = fft::ifft2c(big.tensor(), SPATIAL).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let inside = (4..12).contains(&i) && (4..12).contains(&j);
                if !inside {
                    let c = img.c(i * 16 + j);
                    assert!(c.0.abs() < 1e-12 && c.1.abs() < 1e-12);
                }
            }
        }
        assert!((big.tensor().norm() - y.tensor().norm()).abs() < 1e-10 * y.tensor().norm());
        assert!(zero_pad_to(&y, 4, 8).is_err());
    }

    #[test]
    fn sampling_set_validation_and_rows() {
        assert!(SamplingSet::new(SampleMode::Lines, 2, 4, vec![vec![1, 1]]).is_err());
        assert!(SamplingSet::new(SampleMode::Lines, 2, 4, vec![vec![4]]).is_err());
        let s = SamplingSet::new(SampleMode::Points, 2, 3, vec![vec![5, 0], vec![1]]).unwrap();
        assert_eq!(s.frame(0), &[0, 5]);
        let rows = s.to_rows(false);
        let back = SamplingSet::from_rows(SampleMode::Points, 2, 3, 2, &rows).unwrap();
        assert_eq!(back, s);
    }
}
