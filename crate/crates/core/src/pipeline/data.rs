//! Scans, preprocessing and the train/validation/test split.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::forward::{self, acs_region, DynamicImage, KSpaceVolume, SampleMode, SensitivityMaps};

use super::phantom::{gen_phantom, PhantomSpec};

/// One normalized scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub id: u64,
    /// Fully sampled k-space divided by `scale`.
    pub y: KSpaceVolume,
    /// Ground-truth image divided by `scale`.
    pub x: DynamicImage,
    /// Ground-truth coil maps (for diagnostics only).
    pub s: SensitivityMaps,
    pub scale: f64,
}

impl Scan {
    /// Normalizes by the 99.5th percentile of `|y|` over the centered
    /// calibration columns.
    pub fn new(id: u64, y: KSpaceVolume, x: DynamicImage, s: SensitivityMaps, acs_fraction: f64) -> Result<Self> {
        let acs = acs_region(y.n1(), y.n2(), y.nf(), SampleMode::Lines, acs_fraction)?;
        let (y, scale) = forward::normalize(&y, &acs)?;
        let x = DynamicImage::new(x.tensor().scale(1.0 / scale))?;
        Ok(Self { id, y, x, s, scale })
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.y.n1(), self.y.n2(), self.y.nc(), self.y.nf()]
    }
}

/// `(train, val, test)` sizes: 60/20/20 with rounding going to training.
pub fn split_60_20_20(n: usize) -> (usize, usize, usize) {
    let val = n / 5;
    let test = n / 5;
    (n - val - test, val, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Scan>,
    pub val: Vec<Scan>,
    pub test: Vec<Scan>,
}

impl Dataset {
    /// `count` phantoms with seeds `base.seed + i` and scan ids `i`, split
    /// by index.
    pub fn phantoms(base: &PhantomSpec, count: usize, acs_fraction: f64) -> Result<Self> {
        if count < 3 {
            bail!(Invalid, "need at least three phantoms for a split, got {}", count);
        }
        let mut scans = Vec::with_capacity(count);
        for i in 0..count {
            let spec = PhantomSpec {
                seed: base.seed.wrapping_add(i as u64),
                ..base.clone()
            };
            let p = gen_phantom(&spec)?;
            scans.push(Scan::new(i as u64, p.y, p.x, p.s, acs_fraction)?);
        }
        Ok(Self::split(scans))
    }

    pub fn split(mut scans: Vec<Scan>) -> Self {
        let (ntr, nv, _) = split_60_20_20(scans.len());
        let test = scans.split_off(ntr + nv);
        let val = scans.split_off(ntr);
        Self { train: scans, val, test }
    }

    pub fn dims(&self) -> Option<[usize; 4]> {
        self.train.first().map(Scan::dims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        assert_eq!(split_60_20_20(30), (18, 6, 6));
        assert_eq!(split_60_20_20(10), (6, 2, 2));
        assert_eq!(split_60_20_20(7), (5, 1, 1));
    }
}
