//! Reconstruction from subsampled multi-coil k-space.
//!
//! [`zero_filled`] is the adjoint baseline. [`ReconNet`] unrolls `T`
//! proximal-gradient steps
//! `x_j = x_{j-1} - eta_j A*(A x_{j-1} - y) + D_j(x_{j-1})`
//! with a trainable step size and a small residual 3D conv denoiser per step.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{bail, Result};
use crate::forward::{self, DynamicImage, KSpaceVolume, SampleMode, SensitivityMaps, SPATIAL};
use crate::nn::ConvStack;
use crate::tensor::Tensor;

pub const ETA_INIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub steps: usize,
    pub width: usize,
    pub depth: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            steps: 8,
            width: 8,
            depth: 2,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.width == 0 || self.depth < 2 {
            bail!(Invalid, "recon needs steps >= 1, width >= 1 and depth >= 2");
        }
        Ok(())
    }
}

/// Adjoint reconstruction `A* y`.
pub fn zero_filled(y: &KSpaceVolume, s: &SensitivityMaps) -> Result<DynamicImage> {
    forward::sense_reduce(y, s)
}

#[derive(Debug, Clone)]
pub struct Step {
    pub eta: ParamId,
    pub denoiser: ConvStack,
}

#[derive(Debug, Clone)]
pub struct ReconNet {
    pub config: ReconConfig,
    pub steps: Vec<Step>,
}

impl ReconNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, config: &ReconConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut steps = Vec::with_capacity(config.steps);
        for j in 0..config.steps {
            let eta = store.add(format!("{name}.step{j}.eta"), Tensor::full(&[1], ETA_INIT));
            let denoiser = ConvStack::new(store, &format!("{name}.step{j}.denoiser"), 2, config.width, config.depth, rng)?;
            steps.push(Step { eta, denoiser });
        }
        Ok(Self {
            config: config.clone(),
            steps,
        })
    }

    /// Residual denoiser on a complex `(n1, n2, nf)` image.
    fn denoise(&self, tape: &mut Tape, store: &ParamStore, j: usize, x: Var) -> Result<Var> {
        let d = tape.value(x).dims().to_vec();
        let ch = tape.to_channels(x)?;
        let batched = tape.reshape(ch, &[1, 2, d[0], d[1], d[2]])?;
        let out = self.steps[j].denoiser.forward(tape, store, batched)?;
        let out = tape.reshape(out, &[2, d[0], d[1], d[2]])?;
        tape.from_channels(out)
    }

    /// Unrolled reconstruction of masked measurements `y` with maps `s` and
    /// the `(rows, |Ω|)` sampling mask `mask`. Returns `x_1..x_T`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        y: Var,
        s: Var,
        mask: Var,
        mode: SampleMode,
    ) -> Result<Vec<Var>> {
        let mut x = forward::sense_reduce_var(tape, y, s)?;
        let mut out = Vec::with_capacity(self.steps.len());
        for (j, step) in self.steps.iter().enumerate() {
            let ax = forward::forward_op_var(tape, x, s, Some((mask, mode)))?;
            let residual = tape.sub(ax, y)?;
            let masked = tape.mask_kspace(residual, mask, mode.layout())?;
            let img = tape.ifft2c(masked, SPATIAL)?;
            let grad = tape.coil_combine(img, s)?;
            let eta = tape.param(store, step.eta);
            let stepped = tape.scale_by(grad, eta)?;
            let dc = tape.sub(x, stepped)?;
            let reg = self.denoise(tape, store, j, x)?;
            x = tape.add(dc, reg)?;
            out.push(x);
        }
        Ok(out)
    }

    /// Plain-value convenience wrapper around [`ReconNet::forward`].
    pub fn reconstruct(
        &self,
        store: &ParamStore,
        y: &KSpaceVolume,
        s: &SensitivityMaps,
        lambda: &forward::SamplingSet,
    ) -> Result<Vec<DynamicImage>> {
        let mut tape = Tape::new();
        let yv = tape.constant(y.tensor().clone());
        let sv = tape.constant(s.tensor().clone());
        let mv = tape.constant(lambda.to_rows(lambda.is_unified()));
        let xs = self.forward(&mut tape, store, yv, sv, mv, lambda.mode())?;
        xs.into_iter().map(|x| DynamicImage::new(tape.value(x).clone())).collect()
    }
}
