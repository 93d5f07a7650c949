//! Synthetic dynamic cardiac-like phantoms with multi-coil k-space.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::error::{bail, Result};
use crate::fft;
use crate::forward::{DynamicImage, KSpaceVolume, SensitivityMaps, SPATIAL};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub n1: usize,
    pub n2: usize,
    pub nc: usize,
    pub nf: usize,
    /// Ellipses besides the moving one (the first is the body outline).
    pub ellipses: usize,
    /// Relative radius swing of the moving ellipse.
    pub motion: f64,
    /// Coil profile width in units of the half field of view.
    pub coil_width: f64,
    /// Standard deviation of the real and imaginary k-space noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            n1: 16,
            n2: 16,
            nc: 2,
            nf: 4,
            ellipses: 4,
            motion: 0.3,
            coil_width: 0.8,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n1 < 8 || self.n2 < 8 {
            bail!(Invalid, "phantom extents must be >= 8, got {}x{}", self.n1, self.n2);
        }
        if self.nc == 0 || self.nf < 2 || self.ellipses == 0 {
            bail!(Invalid, "phantoms need nc >= 1, nf >= 2 and at least one ellipse");
        }
        if !(self.motion >= 0.0 && self.motion < 1.0) || !(self.coil_width > 0.0) || !(self.noise >= 0.0) {
            bail!(Invalid, "motion must lie in [0, 1), coil width > 0 and noise >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub y: KSpaceVolume,
    pub x: DynamicImage,
    pub s: SensitivityMaps,
}

/// Standard normal draw (Box-Muller).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    angle: f64,
    value: f64,
}

impl Ellipse {
    /// Soft indicator with a smooth rim.
    fn at(&self, y: f64, x: f64, scale: f64) -> f64 {
        let (s, c) = (libm::sin(self.angle), libm::cos(self.angle));
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
        let rho = libm::hypot(u / (self.ax * scale), v / (self.ay * scale));
        let z = 12.0 * (1.0 - rho);
        self.value / (1.0 + libm::exp(-z))
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Generates ground-truth image, coil maps and noisy fully sampled k-space.
pub fn gen_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n1, n2, nc, nf) = (spec.n1, spec.n2, spec.nc, spec.nf);
    let mut shapes = Vec::with_capacity(spec.ellipses);
    shapes.push(Ellipse {
        cy: uniform(&mut rng, -0.05, 0.05),
        cx: uniform(&mut rng, -0.05, 0.05),
        ay: uniform(&mut rng, 0.7, 0.85),
        ax: uniform(&mut rng, 0.6, 0.8),
        angle: uniform(&mut rng, -0.3, 0.3),
        value: 0.4,
    });
    for _ in 1..spec.ellipses {
        shapes.push(Ellipse {
            cy: uniform(&mut rng, -0.4, 0.4),
            cx: uniform(&mut rng, -0.4, 0.4),
            ay: uniform(&mut rng, 0.08, 0.3),
            ax: uniform(&mut rng, 0.08, 0.3),
            angle: uniform(&mut rng, 0.0, PI),
            value: uniform(&mut rng, 0.1, 0.4),
        });
    }
    let r0 = uniform(&mut rng, 0.18, 0.26);
    let heart = Ellipse {
        cy: uniform(&mut rng, -0.2, 0.2),
        cx: uniform(&mut rng, -0.2, 0.2),
        ay: r0,
        ax: r0 * uniform(&mut rng, 0.8, 1.2),
        angle: uniform(&mut rng, 0.0, PI),
        value: 0.8,
    };
    let phase = (uniform(&mut rng, -0.5, 0.5), uniform(&mut rng, -0.5, 0.5));
    let coord = |i: usize, n: usize| (i as f64 - (n / 2) as f64) / (n as f64 / 2.0);

    let mut x = Tensor::zeros(&[n1, n2, nf], crate::Kind::Complex);
    for t in 0..nf {
        let scale = 1.0 + spec.motion * libm::cos(2.0 * PI * t as f64 / nf as f64);
        for i in 0..n1 {
            for j in 0..n2 {
                let (yy, xx) = (coord(i, n1), coord(j, n2));
                let mag: f64 = shapes.iter().map(|e| e.at(yy, xx, 1.0)).sum::<f64>() + heart.at(yy, xx, scale);
                let ph = phase.0 * yy + phase.1 * xx;
                x.set_c((i * n2 + j) * nf + t, (mag * libm::cos(ph), mag * libm::sin(ph)));
            }
        }
    }

    let mut s = Tensor::zeros(&[n1, n2, nc], crate::Kind::Complex);
    let w2 = spec.coil_width * spec.coil_width;
    for k in 0..nc {
        let theta = 2.0 * PI * k as f64 / nc as f64 + uniform(&mut rng, -0.3, 0.3);
        let (py, px) = (1.2 * libm::sin(theta), 1.2 * libm::cos(theta));
        let slope = (uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0));
        for i in 0..n1 {
            for j in 0..n2 {
                let (yy, xx) = (coord(i, n1), coord(j, n2));
                let d2 = (yy - py) * (yy - py) + (xx - px) * (xx - px);
                let mag = libm::exp(-d2 / (2.0 * w2));
                let ph = slope.0 * yy + slope.1 * xx;
                s.set_c((i * n2 + j) * nc + k, (mag * libm::cos(ph), mag * libm::sin(ph)));
            }
        }
    }
    let mut tape = Tape::new();
    let sv = tape.constant(s);
    let sn = tape.rss_normalize(sv)?;
    let s = SensitivityMaps::new(tape.value(sn).clone())?;

    let xv = tape.constant(x.clone());
    let sv = tape.constant(s.tensor().clone());
    let coils = tape.coil_expand(xv, sv)?;
    let mut y = fft::fft2c(tape.value(coils), SPATIAL)?;
    if spec.noise > 0.0 {
        for v in y.data_mut() {
            *v += spec.noise * standard_normal(&mut rng);
        }
    }
    Ok(Phantom {
        y: KSpaceVolume::new(y)?,
        x: DynamicImage::new(x)?,
        s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_moving() {
        let spec = PhantomSpec {
            seed: 4,
            ..PhantomSpec::default()
        };
        let a = gen_phantom(&spec).unwrap();
        assert_eq!(a, gen_phantom(&spec).unwrap());
        let x = a.x.tensor();
        let nf = 4;
        let frame_diff = |t0: usize, t1: usize| -> f64 {
            (0..16 * 16)
                .map(|i| {
                    let (p, q) = (x.c(i * nf + t0), x.c(i * nf + t1));
                    (p.0 - q.0) * (p.0 - q.0) + (p.1 - q.1) * (p.1 - q.1)
                })
                .sum()
        };
        assert!(frame_diff(0, 1) > 0.0);
        assert!(frame_diff(0, 2) > frame_diff(0, 1));
        for r in a.s.rss() {
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs() {
        let spec = PhantomSpec {
            n1: 4,
            ..PhantomSpec::default()
        };
        assert!(gen_phantom(&spec).is_err());
        let spec = PhantomSpec {
            nf: 1,
            ..PhantomSpec::default()
        };
        assert!(gen_phantom(&spec).is_err());
    }
}
