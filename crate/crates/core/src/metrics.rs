//! Evaluation metrics on centrally cropped magnitude images.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::Tape;
use crate::error::{bail, Result};
use crate::forward::DynamicImage;
use crate::losses;
use crate::tensor::Tensor;

/// Reported PSNR for exact reconstructions.
pub const PSNR_CAP: f64 = 100.0;

/// `(start, len)` of the central crop: `ceil(2n/3)` samples centered at `n/2`.
pub fn crop_window(n: usize) -> (usize, usize) {
    let len = (2 * n).div_ceil(3);
    ((n / 2).saturating_sub(len / 2).min(n - len), len)
}

/// Central crop of a real `(n1, n2, nf)` volume.
pub fn crop(x: &Tensor) -> Result<Tensor> {
    x.require_real()?;
    if x.rank() != 3 {
        bail!(Shape, "crop expects (n1, n2, nf), got {:?}", x.dims());
    }
    let d = x.dims();
    let (s1, l1) = crop_window(d[0]);
    let (s2, l2) = crop_window(d[1]);
    let nf = d[2];
    let mut out = Vec::with_capacity(l1 * l2 * nf);
    for i in s1..s1 + l1 {
        for j in s2..s2 + l2 {
            let base = (i * d[1] + j) * nf;
            out.extend_from_slice(&x.data()[base..base + nf]);
        }
    }
    Tensor::real(&[l1, l2, nf], out)
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        bail!(Shape, "metric inputs of {} and {} values", a.len(), b.len());
    }
    Ok(())
}

pub fn l1(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `||a - b||^2 / ||b||^2`.
pub fn nmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        bail!(Numeric, "NMSE reference is identically zero");
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / den)
}

/// `sum |a - b| / sum |b|`.
pub fn nmae(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let den: f64 = b.iter().map(|y| y.abs()).sum();
    if den == 0.0 {
        bail!(Numeric, "NMAE reference is identically zero");
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / den)
}

/// `10 log10(max(b)^2 / mse)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    let m = mse(a, b)?;
    let peak = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * libm::log10(peak * peak / m)).min(PSNR_CAP))
}

fn tape_scalar(a: &Tensor, b: &Tensor, f: fn(&mut Tape, crate::autodiff::Var, crate::autodiff::Var) -> Result<crate::autodiff::Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let va = tape.constant(a.clone());
    let vb = tape.constant(b.clone());
    let out = f(&mut tape, va, vb)?;
    Ok(tape.value(out).data()[0])
}

/// Mean per-frame SSIM of real `(n1, n2[, nf])` volumes, range from `b`.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    tape_scalar(a, b, losses::ssim)
}

pub fn ssim3d(a: &Tensor, b: &Tensor) -> Result<f64> {
    tape_scalar(a, b, losses::ssim3d)
}

/// Sum over frames of the per-frame HFEN.
pub fn hfen(a: &Tensor, b: &Tensor) -> Result<f64> {
    tape_scalar(a, b, losses::hfen)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanMetrics {
    pub ssim: f64,
    pub psnr: f64,
    pub nmse: f64,
}

fn frame(x: &Tensor, t: usize) -> Tensor {
    let d = x.dims();
    let nf = d[2];
    let data = (0..d[0] * d[1]).map(|i| x.data()[i * nf + t]).collect();
    Tensor::real(&[d[0], d[1]], data).expect("frame dims")
}

/// Metrics of the cropped magnitudes computed per frame and averaged.
pub fn evaluate_metrics(x_hat: &DynamicImage, x_star: &DynamicImage) -> Result<ScanMetrics> {
    let (a, b) = (x_hat.tensor(), x_star.tensor());
    if a.dims() != b.dims() {
        bail!(Shape, "reconstruction {:?} vs target {:?}", a.dims(), b.dims());
    }
    let ca = crop(&a.abs())?;
    let cb = crop(&b.abs())?;
    let nf = ca.dims()[2];
    let mut acc = ScanMetrics {
        ssim: 0.0,
        psnr: 0.0,
        nmse: 0.0,
    };
    for t in 0..nf {
        let (fa, fb) = (frame(&ca, t), frame(&cb, t));
        acc.ssim += ssim(&fa, &fb)?;
        acc.psnr += psnr(fa.data(), fb.data())?;
        acc.nmse += nmse(fa.data(), fb.data())?;
    }
    let k = nf as f64;
    Ok(ScanMetrics {
        ssim: acc.ssim / k,
        psnr: acc.psnr / k,
        nmse: acc.nmse / k,
    })
}

/// One evaluated scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub scan_id: u64,
    pub r: f64,
    pub scheme: String,
    pub metrics: ScanMetrics,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub ssim: Stat,
    pub psnr: Stat,
    pub nmse: Stat,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub records: Vec<ScanRecord>,
}

impl MetricsReport {
    pub fn push(&mut self, record: ScanRecord) {
        self.records.push(record);
    }

    /// Records sorted by scan id, so summaries do not depend on the order in
    /// which scans finished.
    pub fn sorted(&self) -> Vec<&ScanRecord> {
        let mut v: Vec<&ScanRecord> = self.records.iter().collect();
        v.sort_by(|a, b| a.scan_id.cmp(&b.scan_id).then(a.r.total_cmp(&b.r)));
        v
    }

    pub fn ssim_values(&self) -> Vec<f64> {
        self.sorted().iter().map(|r| r.metrics.ssim).collect()
    }

    pub fn summary(&self) -> Summary {
        let rows = self.sorted();
        let col = |f: fn(&ScanMetrics) -> f64| -> Vec<f64> { rows.iter().map(|r| f(&r.metrics)).collect() };
        Summary {
            count: rows.len(),
            ssim: Stat::of(&col(|m| m.ssim)),
            psnr: Stat::of(&col(|m| m.psnr)),
            nmse: Stat::of(&col(|m| m.nmse)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_of_nine_is_six_centered() {
        assert_eq!(crop_window(9), (1, 6));
        assert_eq!(crop_window(16), (3, 11));
        assert_eq!(crop_window(1), (0, 1));
    }

    #[test]
    fn hand_metrics() {
        let b = [1.0; 4];
        let a = [1.0, 1.0, 1.0, 0.0];
        assert_eq!(nmse(&a, &b).unwrap(), 0.25);
        assert_eq!(nmae(&a, &b).unwrap(), 0.25);
        assert_eq!(psnr(&b, &b).unwrap(), PSNR_CAP);
        let a = [0.9, 1.1, 0.9, 1.1];
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(nmse(&a, &[0.0; 4]).is_err());
    }

    #[test]
    fn identical_scan_is_perfect() {
        let data: Vec<f64> = (0..2 * 9 * 9 * 2).map(|i| (i % 7) as f64).collect();
        let x = DynamicImage::new(Tensor::complex(&[9, 9, 2], data).unwrap()).unwrap();
        let m = evaluate_metrics(&x, &x).unwrap();
        assert!((m.ssim - 1.0).abs() < 1e-12);
        assert_eq!(m.nmse, 0.0);
        assert_eq!(m.psnr, PSNR_CAP);
    }
}
