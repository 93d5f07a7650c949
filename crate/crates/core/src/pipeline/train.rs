//! Optimizer, learning-rate schedule and the training loop.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ads::SteMode;
use crate::autodiff::{ParamStore, Tape};
use crate::error::{bail, Result};
use crate::metrics::evaluate_metrics;
use crate::forward::DynamicImage;
use crate::schemes::SeedPolicy;

use super::data::{Dataset, Scan};
use super::model::{e2e_forward, e2e_loss, E2eModel};

/// Linear warmup from `start` to `peak`, then `peak * decay^floor(step /
/// decay_every)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub start: f64,
    pub peak: f64,
    pub warmup: usize,
    pub decay_every: usize,
    pub decay: f64,
}

impl LrSchedule {
    /// The full-length schedule (2000 warmup steps, 20% decay every 10000)
    /// with step counts divided by `factor`.
    pub fn desk(factor: f64) -> Self {
        Self {
            start: 1e-3,
            peak: 3e-3,
            warmup: libm::round(2000.0 / factor) as usize,
            decay_every: (libm::round(10000.0 / factor) as usize).max(1),
            decay: 0.8,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup {
            self.start + (self.peak - self.start) * step as f64 / self.warmup as f64
        } else {
            self.peak * libm::pow(self.decay, (step / self.decay_every.max(1)) as f64)
        }
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self::desk(100.0)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| alloc::vec![0.0; store.value(id).data().len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let g = store.grad(id).data().to_vec();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let p = store.value_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (libm::sqrt(vh) + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: LrSchedule,
    /// Accelerations drawn uniformly per step.
    pub r_values: Vec<f64>,
    /// Validate every this many steps (and after the last step).
    pub val_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: LrSchedule::default(),
            r_values: alloc::vec![4.0, 6.0, 8.0],
            val_every: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    /// `(step, mean validation SSIM)` after each validation.
    pub validation: Vec<(usize, f64)>,
    pub best_step: usize,
    pub best_ssim: f64,
    /// Parameters at the best validation SSIM.
    pub best: ParamStore,
}

/// Mean SSIM over `scans` and `r_values` with per-scan inference streams.
pub fn validate(model: &E2eModel, scans: &[Scan], r_values: &[f64], seeds: &SeedPolicy) -> Result<f64> {
    if scans.is_empty() || r_values.is_empty() {
        bail!(Invalid, "validation needs scans and accelerations");
    }
    let mut total = 0.0;
    for scan in scans {
        for &r in r_values {
            let mut rng = seeds.inference(scan.id);
            let mut tape = Tape::new();
            let out = e2e_forward(model, &mut tape, scan, r, &mut rng)?;
            let last = *out.xs.last().expect("nonempty");
            let x = DynamicImage::new(tape.value(last).clone())?;
            total += evaluate_metrics(&x, &scan.x)?.ssim;
        }
    }
    Ok(total / (scans.len() * r_values.len()) as f64)
}

const ORDER_DOMAIN: u64 = 0x004f_5244_4552;

pub struct Trainer;

impl Trainer {
    /// Trains `model` in place and returns the history; the model ends with
    /// the best validated parameters loaded.
    pub fn run(model: &mut E2eModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
        if cfg.steps == 0 || cfg.r_values.is_empty() || cfg.val_every == 0 {
            bail!(Invalid, "training needs steps >= 1, accelerations and a validation interval");
        }
        if data.train.is_empty() || data.val.is_empty() {
            bail!(Invalid, "training and validation sets must be nonempty");
        }
        model.set_ste_mode(SteMode::Hard);
        let mut seeds = SeedPolicy::new(cfg.seed);
        let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ORDER_DOMAIN);
        let mut adam = Adam::new(&model.store);
        let mut order: Vec<usize> = Vec::new();
        let mut losses = Vec::with_capacity(cfg.steps);
        let mut validation = Vec::new();
        let mut best: Option<(usize, f64, ParamStore)> = None;
        for step in 0..cfg.steps {
            if order.is_empty() {
                order = (0..data.train.len()).collect();
                order.shuffle(&mut order_rng);
            }
            let scan = &data.train[order.pop().expect("refilled")];
            let r = cfg.r_values[order_rng.random_range(0..cfg.r_values.len())];
            let mut rng = seeds.training();
            let mut tape = Tape::new();
            let out = e2e_forward(model, &mut tape, scan, r, &mut rng)?;
            let loss = e2e_loss(model, &mut tape, &out)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                bail!(Numeric, "loss became {} at step {} (scan {}, R = {})", value, step, scan.id, r);
            }
            losses.push(value);
            if !model.store.is_empty() {
                let grads = tape.backward(loss)?;
                model.store.zero_grad();
                model.store.accumulate(&tape, &grads);
                adam.step(&mut model.store, cfg.lr.at(step));
            }
            if (step + 1) % cfg.val_every == 0 || step + 1 == cfg.steps {
                let v = validate(model, &data.val, &cfg.r_values, &SeedPolicy::new(cfg.seed))?;
                validation.push((step + 1, v));
                if best.as_ref().is_none_or(|b| v > b.1) {
                    best = Some((step + 1, v, model.store.clone()));
                }
            }
        }
        let (best_step, best_ssim, best) = best.expect("validated at the last step");
        model.store.load_from(&best)?;
        Ok(TrainReport {
            losses,
            validation,
            best_step,
            best_ssim,
            best,
        })
    }
}
