//! Non-adaptive sampling pattern generators.
//!
//! Every generator includes the ACS region in each frame and returns exactly
//! `floor(|Ω| / R)` locations per frame. Line schemes sample columns, point
//! schemes sample `(i1, i2)` locations flattened row-major.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::forward::{acs_region, budget_count, SampleMode, SamplingSet};

/// Angle between consecutive radial spokes, `π (√5 - 1) / 2`.
pub const GOLDEN_ANGLE: f64 = 1.941_611_038_725_466_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FramePolicy {
    /// A distinct pattern per frame.
    FrameSpecific,
    /// One pattern shared by all frames.
    Unified,
}

impl FramePolicy {
    pub fn name(self) -> &'static str {
        match self {
            FramePolicy::FrameSpecific => "frame_specific",
            FramePolicy::Unified => "unified",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "frame_specific" | "frame-specific" => Some(FramePolicy::FrameSpecific),
            "unified" => Some(FramePolicy::Unified),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Equispaced,
    Random,
    Gaussian1d,
    Gaussian2d,
    Radial,
    KtEquispaced,
    KtGaussian1d,
    KtRadial,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 8] = [
        SchemeKind::Equispaced,
        SchemeKind::Random,
        SchemeKind::Gaussian1d,
        SchemeKind::Gaussian2d,
        SchemeKind::Radial,
        SchemeKind::KtEquispaced,
        SchemeKind::KtGaussian1d,
        SchemeKind::KtRadial,
    ];

    pub fn mode(self) -> SampleMode {
        match self {
            SchemeKind::Gaussian2d | SchemeKind::Radial | SchemeKind::KtRadial => SampleMode::Points,
            _ => SampleMode::Lines,
        }
    }

    pub fn is_kt(self) -> bool {
        matches!(self, SchemeKind::KtEquispaced | SchemeKind::KtGaussian1d | SchemeKind::KtRadial)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Equispaced => "equispaced",
            SchemeKind::Random => "random",
            SchemeKind::Gaussian1d => "gaussian1d",
            SchemeKind::Gaussian2d => "gaussian2d",
            SchemeKind::Radial => "radial",
            SchemeKind::KtEquispaced => "kt-equispaced",
            SchemeKind::KtGaussian1d => "kt-gaussian1d",
            SchemeKind::KtRadial => "kt-radial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub r: f64,
    pub policy: FramePolicy,
    /// When set, [`generate_seeded`] ignores the caller's generator.
    pub seed: Option<u64>,
    pub acs_fraction: f64,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, r: f64, policy: FramePolicy) -> Self {
        Self {
            kind,
            r,
            policy,
            seed: None,
            acs_fraction: 0.04,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 1.0) || !self.r.is_finite() {
            bail!(Invalid, "acceleration must be >= 1, got {}", self.r);
        }
        if self.kind.is_kt() && self.policy != FramePolicy::FrameSpecific {
            bail!(Invalid, "{} needs the frame-specific policy", self.kind.name());
        }
        if matches!(self.kind, SchemeKind::Equispaced | SchemeKind::KtEquispaced) && libm::trunc(self.r) != self.r {
            bail!(Invalid, "equispaced schemes need an integer acceleration, got {}", self.r);
        }
        Ok(())
    }
}

/// Columns `offset, offset + step, ...` below `n2`.
pub fn progression(n2: usize, step: usize, offset: usize) -> Vec<usize> {
    (offset..n2).step_by(step.max(1)).collect()
}

/// Drops non-ACS entries farthest from `center` (ties: higher index first)
/// until `budget` remain.
fn trim_to_budget(set: &mut Vec<usize>, acs: &[usize], budget: usize, center: usize) {
    if set.len() <= budget {
        return;
    }
    let mut extra: Vec<usize> = set.iter().copied().filter(|i| !acs.contains(i)).collect();
    extra.sort_by(|a, b| a.abs_diff(center).cmp(&b.abs_diff(center)).then(a.cmp(b)));
    let drop = set.len() - budget;
    let removed: Vec<usize> = extra.split_off(extra.len() - drop);
    set.retain(|i| !removed.contains(i));
}

/// Weighted draw of `k` items without replacement. Exponential keys
/// `ln(u) / w` give the same law as sequential renormalized draws.
fn weighted_draw<R: Rng + ?Sized>(pool: &[usize], weight: impl Fn(usize) -> f64, k: usize, rng: &mut R) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = pool
        .iter()
        .map(|&i| {
            let u = 1.0 - rng.random::<f64>();
            (libm::log(u) / weight(i), i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Gaussian weight with mean `n / 2` and standard deviation `4 sqrt(n / 2)`.
pub fn gaussian_weight(i: usize, n: usize) -> f64 {
    let mu = n as f64 / 2.0;
    let sigma = 4.0 * libm::sqrt(mu);
    let d = i as f64 - mu;
    libm::exp(-d * d / (2.0 * sigma * sigma))
}

/// Rasterized line through the grid center at angle `theta`, center first
/// and then alternating outward. Returned as flattened point indices.
pub fn spoke_points(n1: usize, n2: usize, theta: f64) -> Vec<usize> {
    let (c1, c2) = ((n1 / 2) as i64, (n2 / 2) as i64);
    let (dy, dx) = (libm::sin(theta), libm::cos(theta));
    let along_cols = dx.abs() >= dy.abs();
    let slope = if along_cols { dy / dx } else { dx / dy };
    let at = |s: i64| -> Option<usize> {
        let minor = libm::round(s as f64 * slope) as i64;
        let (row, col) = if along_cols { (c1 + minor, c2 + s) } else { (c1 + s, c2 + minor) };
        if row < 0 || col < 0 || row >= n1 as i64 || col >= n2 as i64 {
            None
        } else {
            Some(row as usize * n2 + col as usize)
        }
    };
    let mut out = vec![(c1 as usize) * n2 + c2 as usize];
    let (mut fwd, mut back) = (true, true);
    let mut s = 1;
    while fwd || back {
        if fwd {
            match at(s) {
                Some(p) => out.push(p),
                None => fwd = false,
            }
        }
        if back {
            match at(-s) {
                Some(p) => out.push(p),
                None => back = false,
            }
        }
        s += 1;
    }
    out
}

/// `count` golden-angle spokes starting at `first_angle`.
pub fn radial_spokes(n1: usize, n2: usize, first_angle: f64, count: usize) -> Vec<(f64, Vec<usize>)> {
    (0..count)
        .map(|j| {
            let theta = first_angle + j as f64 * GOLDEN_ANGLE;
            (theta, spoke_points(n1, n2, theta))
        })
        .collect()
}

/// Fills `need` points spoke by spoke, skipping taken and excluded points;
/// advances `angle` past every spoke used.
fn radial_fill(n1: usize, n2: usize, taken: &mut [bool], excluded: &[bool], need: usize, angle: &mut f64) -> Vec<usize> {
    let mut picked = Vec::with_capacity(need);
    let max_spokes = 8 * (n1 + n2) + 64;
    let mut spokes = 0;
    while picked.len() < need && spokes < max_spokes {
        for p in spoke_points(n1, n2, *angle) {
            if picked.len() == need {
                break;
            }
            if !taken[p] && !excluded[p] {
                taken[p] = true;
                picked.push(p);
            }
        }
        *angle += GOLDEN_ANGLE;
        spokes += 1;
    }
    if picked.len() < need {
        let (c1, c2) = ((n1 / 2) as f64, (n2 / 2) as f64);
        let mut rest: Vec<(f64, usize)> = (0..n1 * n2)
            .filter(|&p| !taken[p] && !excluded[p])
            .map(|p| {
                let (r, c) = ((p / n2) as f64 - c1, (p % n2) as f64 - c2);
                (r * r + c * c, p)
            })
            .collect();
        rest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, p) in rest.iter().take(need - picked.len()) {
            taken[p] = true;
            picked.push(p);
        }
    }
    picked
}

/// Generates a sampling set for an `(n1, n2)` grid with `nf` frames.
pub fn generate<R: Rng + ?Sized>(spec: &SchemeSpec, n1: usize, n2: usize, nf: usize, rng: &mut R) -> Result<SamplingSet> {
    spec.validate()?;
    if n1 == 0 || n2 == 0 || nf == 0 {
        bail!(Invalid, "grid extents must be nonzero");
    }
    let mode = spec.kind.mode();
    let omega = mode.omega(n1, n2);
    let acs = acs_region(n1, n2, 1, mode, spec.acs_fraction)?.frame(0).to_vec();
    let budget = budget_count(omega, spec.r)?;
    if acs.len() > budget {
        bail!(
            Budget,
            "ACS holds {} locations but R = {} allows {} per frame",
            acs.len(),
            spec.r,
            budget
        );
    }
    let need = budget - acs.len();
    let mut is_acs = vec![false; omega];
    for &i in &acs {
        is_acs[i] = true;
    }
    let non_acs: Vec<usize> = (0..omega).filter(|&i| !is_acs[i]).collect();
    let rows = match spec.policy {
        FramePolicy::FrameSpecific => nf,
        FramePolicy::Unified => 1,
    };
    let step = spec.r as usize;
    let o0 = rng.random_range(0..step);
    let mut angle = rng.random::<f64>() * PI;
    let mut frames: Vec<Vec<usize>> = Vec::with_capacity(rows);
    for t in 0..rows {
        // previous frame's non-ACS picks, excluded by the kt variants
        let mut excluded = vec![false; omega];
        if spec.kind.is_kt() && t > 0 {
            for &i in &frames[t - 1] {
                excluded[i] = !is_acs[i];
            }
            let pool = non_acs.iter().filter(|&&i| !excluded[i]).count();
            if pool < need {
                excluded.fill(false);
            }
        }
        let mut frame = match spec.kind {
            SchemeKind::Equispaced | SchemeKind::KtEquispaced => {
                let offset = match spec.kind {
                    SchemeKind::KtEquispaced => (o0 + t) % step,
                    _ if t == 0 => o0,
                    _ => rng.random_range(0..step),
                };
                let mut cols = progression(n2, step, offset);
                let extra: Vec<usize> = acs.iter().copied().filter(|c| !cols.contains(c)).collect();
                cols.extend(extra);
                trim_to_budget(&mut cols, &acs, budget, n2 / 2);
                cols
            }
            SchemeKind::Random => {
                let mut pool = non_acs.clone();
                let (chosen, _) = pool.partial_shuffle(rng, need);
                acs.iter().chain(chosen.iter()).copied().collect()
            }
            SchemeKind::Gaussian1d | SchemeKind::KtGaussian1d => {
                let pool: Vec<usize> = non_acs.iter().copied().filter(|&i| !excluded[i]).collect();
                let chosen = weighted_draw(&pool, |i| gaussian_weight(i, n2), need, rng);
                acs.iter().chain(chosen.iter()).copied().collect()
            }
            SchemeKind::Gaussian2d => {
                let chosen = weighted_draw(
                    &non_acs,
                    |p| gaussian_weight(p / n2, n1) * gaussian_weight(p % n2, n2),
                    need,
                    rng,
                );
                acs.iter().chain(chosen.iter()).copied().collect()
            }
            SchemeKind::Radial | SchemeKind::KtRadial => {
                if spec.kind == SchemeKind::Radial && t > 0 {
                    angle = rng.random::<f64>() * PI;
                }
                let mut taken = is_acs.clone();
                let chosen = radial_fill(n1, n2, &mut taken, &excluded, need, &mut angle);
                acs.iter().chain(chosen.iter()).copied().collect()
            }
        };
        frame.sort_unstable();
        frames.push(frame);
    }
    if rows == 1 {
        frames = vec![frames.remove(0); nf];
    }
    SamplingSet::new(mode, n1, n2, frames)
}

/// [`generate`] with the generator taken from `spec.seed` when present.
pub fn generate_seeded<R: Rng + ?Sized>(
    spec: &SchemeSpec,
    n1: usize,
    n2: usize,
    nf: usize,
    fallback: &mut R,
) -> Result<SamplingSet> {
    match spec.seed {
        Some(seed) => generate(spec, n1, n2, nf, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => generate(spec, n1, n2, nf, fallback),
    }
}

/// Where a random stream is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedMode {
    Training,
    Inference,
}

const TRAINING_DOMAIN: u64 = 0x7452_4149_4e49_4e47;

/// Derives random streams from one global seed. Inference streams are keyed
/// by scan id and never depend on call order; training streams advance on
/// every call and never repeat.
#[derive(Debug, Clone)]
pub struct SeedPolicy {
    global: u64,
    calls: u64,
}

impl SeedPolicy {
    pub fn new(global: u64) -> Self {
        Self { global, calls: 0 }
    }

    pub fn global_seed(&self) -> u64 {
        self.global
    }

    pub fn inference(&self, scan_id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.global);
        rng.set_stream(scan_id);
        rng
    }

    pub fn training(&mut self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.global ^ TRAINING_DOMAIN);
        rng.set_stream(self.calls);
        self.calls += 1;
        rng
    }

    pub fn rng(&mut self, mode: SeedMode, scan_id: u64) -> ChaCha8Rng {
        match mode {
            SeedMode::Training => self.training(),
            SeedMode::Inference => self.inference(scan_id),
        }
    }
}
