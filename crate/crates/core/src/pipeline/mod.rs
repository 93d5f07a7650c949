//! End-to-end composition: synthetic data, the joint sampler and
//! reconstructor, training, evaluation and comparison.

mod data;
mod model;
mod phantom;
mod train;
mod eval;

pub use data::{split_60_20_20, Dataset, Scan};
pub use eval::{compare, evaluate, reconstruct_scan, Comparison, ComparisonRow};
pub use model::{e2e_forward, e2e_loss, E2eModel, E2eOutput, InitPattern, ModelConfig, SamplerConfig};
pub use phantom::{gen_phantom, standard_normal, Phantom, PhantomSpec};
pub use train::{validate, Adam, LrSchedule, TrainConfig, TrainReport, Trainer};
