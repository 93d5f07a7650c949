//! The joint model: sensitivity refinement, sampler and reconstructor on one
//! tape.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ads::{AdsConfig, AdsNet, OptSampler, SampleOutput};
use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{bail, Result};
use crate::forward::{self, acs_region, apply_mask, estimate_sensitivities, SampleMode, SamplingSet, SensitivityRefiner, SmpConfig};
use crate::losses::{composite_loss, LossKind};
use crate::recon::{ReconConfig, ReconNet};
use crate::schemes::{generate, FramePolicy, SchemeKind, SchemeSpec};

use super::data::Scan;

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerConfig {
    /// Learned adaptive sampler.
    Adaptive(AdsConfig),
    /// Learned input-independent probabilities.
    Optimized { policy: FramePolicy, mode: SampleMode },
    /// Fixed or random pattern generator.
    Scheme { kind: SchemeKind, policy: FramePolicy },
}

impl SamplerConfig {
    pub fn mode(&self) -> SampleMode {
        match self {
            SamplerConfig::Adaptive(c) => c.sampling,
            SamplerConfig::Optimized { mode, .. } => *mode,
            SamplerConfig::Scheme { kind, .. } => kind.mode(),
        }
    }

    pub fn policy(&self) -> FramePolicy {
        match self {
            SamplerConfig::Adaptive(c) => c.policy,
            SamplerConfig::Optimized { policy, .. } | SamplerConfig::Scheme { policy, .. } => *policy,
        }
    }

    pub fn name(&self) -> String {
        match self {
            SamplerConfig::Adaptive(c) => format!("ads-{}-{}", c.sampling.name(), c.policy.name()),
            SamplerConfig::Optimized { policy, mode } => format!("opt-{}-{}", mode.name(), policy.name()),
            SamplerConfig::Scheme { kind, policy } => format!("{}-{}", kind.name(), policy.name()),
        }
    }

    pub fn is_learned(&self) -> bool {
        !matches!(self, SamplerConfig::Scheme { .. })
    }
}

/// Initial acquisition before adaptive sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitPattern {
    /// The calibration region only.
    Acs,
    /// Equispaced lines at acceleration `R + offset`, calibration included.
    Equispaced { offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub sampler: SamplerConfig,
    /// `None` reconstructs by the zero-filled adjoint.
    pub recon: Option<ReconConfig>,
    /// `None` uses the ACS estimate of the maps as is.
    pub smp: Option<SmpConfig>,
    pub loss: LossKind,
    pub acs_fraction: f64,
    pub init: InitPattern,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::Adaptive(AdsConfig::default()),
            recon: Some(ReconConfig::default()),
            smp: Some(SmpConfig::default()),
            loss: LossKind::DualDomain,
            acs_fraction: 0.04,
            init: InitPattern::Acs,
        }
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    Adaptive(AdsNet),
    Optimized(OptSampler),
    Scheme(SchemeKind, FramePolicy),
}

#[derive(Debug, Clone)]
pub struct E2eModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    smp: Option<SensitivityRefiner>,
    sampler: Sampler,
    recon: Option<ReconNet>,
    dims: [usize; 4],
}

/// Everything a forward pass leaves on the tape.
#[derive(Debug, Clone)]
pub struct E2eOutput {
    pub lambda0: SamplingSet,
    pub lambda: SamplingSet,
    /// Reconstructions `x_1..x_T` (a single zero-filled image without recon).
    pub xs: Vec<Var>,
    pub s: Var,
    /// Subsampled measurements.
    pub y: Var,
    pub mask: Var,
    pub full_y: Var,
    pub x_star: Var,
    pub sample: Option<SampleOutput>,
}

impl E2eModel {
    /// Parameters are initialized from `seed`; `dims` is `(n1, n2, nc, nf)`.
    pub fn new(config: &ModelConfig, dims: [usize; 4], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let [n1, n2, _, nf] = dims;
        let smp = match &config.smp {
            Some(c) => Some(SensitivityRefiner::new(&mut store, "smp", c, &mut rng)?),
            None => None,
        };
        let sampler = match &config.sampler {
            SamplerConfig::Adaptive(c) => Sampler::Adaptive(AdsNet::new(&mut store, "ads", c, dims, &mut rng)?),
            SamplerConfig::Optimized { policy, mode } => {
                Sampler::Optimized(OptSampler::new(&mut store, "opt", *policy, *mode, n1, n2, nf))
            }
            SamplerConfig::Scheme { kind, policy } => {
                SchemeSpec::new(*kind, 2.0, *policy).validate()?;
                Sampler::Scheme(*kind, *policy)
            }
        };
        let recon = match &config.recon {
            Some(c) => Some(ReconNet::new(&mut store, "recon", c, &mut rng)?),
            None => None,
        };
        Ok(Self {
            config: config.clone(),
            store,
            smp,
            sampler,
            recon,
            dims,
        })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    /// Switches the adaptive or optimized sampler's straight-through forward
    /// value.
    pub fn set_ste_mode(&mut self, mode: crate::ads::SteMode) {
        match &mut self.sampler {
            Sampler::Adaptive(net) => net.config.ste = mode,
            Sampler::Optimized(opt) => opt.ste = mode,
            Sampler::Scheme(..) => {}
        }
    }

    fn initial_set<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> Result<SamplingSet> {
        let [n1, n2, _, nf] = self.dims;
        let mode = self.config.sampler.mode();
        let acs = acs_region(n1, n2, nf, mode, self.config.acs_fraction)?;
        match self.config.init {
            InitPattern::Acs => Ok(acs),
            InitPattern::Equispaced { offset } => {
                if mode != SampleMode::Lines {
                    bail!(Invalid, "equispaced initialization needs line sampling");
                }
                if offset <= 0.0 {
                    bail!(Invalid, "initial pattern must be sparser than R, got offset {}", offset);
                }
                let r0 = r + offset;
                let policy = self.config.sampler.policy();
                let mut spec = SchemeSpec::new(SchemeKind::Equispaced, r0, policy);
                spec.acs_fraction = self.config.acs_fraction;
                generate(&spec, n1, n2, nf, rng)
            }
        }
    }
}

/// Runs sensitivity estimation and refinement, sampling at acceleration `r`
/// and reconstruction for one scan.
pub fn e2e_forward<R: Rng + ?Sized>(
    model: &E2eModel,
    tape: &mut Tape,
    scan: &Scan,
    r: f64,
    rng: &mut R,
) -> Result<E2eOutput> {
    if scan.dims() != model.dims {
        bail!(Shape, "scan {:?} does not match model {:?}", scan.dims(), model.dims);
    }
    let [n1, n2, _, nf] = model.dims;
    let mode = model.config.sampler.mode();
    let acs = acs_region(n1, n2, nf, mode, model.config.acs_fraction)?;
    let s0 = estimate_sensitivities(&apply_mask(&acs, &scan.y)?)?;
    let s0v = tape.constant(s0.tensor().clone());
    let s = match &model.smp {
        Some(smp) => smp.refine(tape, &model.store, s0v)?,
        None => s0v,
    };
    let full_y = tape.constant(scan.y.tensor().clone());
    let x_star = tape.constant(scan.x.tensor().clone());
    let lambda0 = model.initial_set(r, rng)?;
    let (lambda, y, mask, sample) = match &model.sampler {
        Sampler::Adaptive(net) => {
            let out = net.sample(tape, &model.store, full_y, s, &lambda0, r, rng)?;
            (out.lambda.clone(), out.y, out.mask, Some(out))
        }
        Sampler::Optimized(opt) => {
            let out = opt.sample(tape, &model.store, full_y, &lambda0, r, rng)?;
            (out.lambda.clone(), out.y, out.mask, Some(out))
        }
        Sampler::Scheme(kind, policy) => {
            let mut spec = SchemeSpec::new(*kind, r, *policy);
            spec.acs_fraction = model.config.acs_fraction;
            let lambda = generate(&spec, n1, n2, nf, rng)?;
            let y = tape.constant(apply_mask(&lambda, &scan.y)?.into_tensor());
            let mask = tape.constant(lambda.to_rows(*policy == FramePolicy::Unified));
            (lambda, y, mask, None)
        }
    };
    let xs = match &model.recon {
        Some(net) => net.forward(tape, &model.store, y, s, mask, mode)?,
        None => alloc::vec![forward::sense_reduce_var(tape, y, s)?],
    };
    Ok(E2eOutput {
        lambda0,
        lambda,
        xs,
        s,
        y,
        mask,
        full_y,
        x_star,
        sample,
    })
}

/// Training objective of a forward pass.
pub fn e2e_loss(model: &E2eModel, tape: &mut Tape, out: &E2eOutput) -> Result<Var> {
    let last = *out.xs.last().expect("nonempty reconstruction sequence");
    let kspace = match model.config.loss {
        LossKind::DualDomain => {
            let y_hat = forward::forward_op_var(tape, last, out.s, None)?;
            Some((y_hat, out.full_y))
        }
        LossKind::Mse => None,
    };
    composite_loss(tape, model.config.loss, &out.xs, out.x_star, kspace)
}
