//! Flat `key = value` experiment configs.
//!
//! One assignment per line, `#` starts a comment, unknown keys are errors.
//! Relative paths are resolved against the config file's directory. Every
//! key is optional:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `name` | file stem | label in reports |
//! | `sampler` | `ads` | `ads`, `optimized` or `scheme` |
//! | `scheme` | `random` | scheme kind when `sampler = scheme` |
//! | `policy` | `frame_specific` | `frame_specific` or `unified` |
//! | `mode` | `line1d` | `line1d` or `point2d` (learned samplers) |
//! | `cascades`, `enc_scales`, `enc_channels`, `mlp_layers`, `mlp_hidden` | 2, 3, 8, 3, 64 | sampler network |
//! | `allocation` | `uniform` | `uniform` or comma-separated frame weights |
//! | `init` | `acs` | `acs` or `equispaced` |
//! | `init_offset` | 4 | equispaced initial pattern at `R + init_offset` |
//! | `recon` | `unrolled` | `unrolled` or `none` (zero-filled) |
//! | `recon_steps`, `recon_width`, `recon_depth` | 8, 8, 2 | reconstructor |
//! | `smp` | `8,16` | refinement U-Net widths, or `none` |
//! | `loss` | `dual` | `dual` or `mse` |
//! | `acs_fraction` | 0.04 | calibration fraction |
//! | `steps` | 300 | training steps |
//! | `lr_factor` | 100 | schedule step counts divided by this |
//! | `r_train` | `4,6,8` | accelerations drawn during training |
//! | `val_every` | 50 | validation interval |
//! | `seed` | 0 | training and validation streams |
//! | `model_seed` | 0 | parameter initialization |
//! | `eval_seed` | 0 | inference streams |
//! | `r_eval` | `4,6,8` | accelerations for `eval`/`compare` |
//! | `phantoms` | 30 | phantom count |
//! | `n1`, `n2`, `nc`, `nf` | 16, 16, 2, 4 | phantom grid |
//! | `ellipses`, `motion`, `coil_width`, `noise`, `phantom_seed` | 4, 0.3, 0.8, 0, 0 | phantom shape |
//! | `data_dir` | none | load scans written by `ksampler phantom` instead |
//! | `out_dir` | `out/<name>` | checkpoints and reports |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ksampler_core::ads::{AdsConfig, Allocation};
use ksampler_core::forward::{SampleMode, SmpConfig};
use ksampler_core::losses::LossKind;
use ksampler_core::pipeline::{InitPattern, LrSchedule, ModelConfig, PhantomSpec, SamplerConfig, TrainConfig};
use ksampler_core::recon::ReconConfig;
use ksampler_core::schemes::{FramePolicy, SchemeKind};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Phantoms { spec: PhantomSpec, count: usize },
    Dir(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub model_seed: u64,
    pub eval_seed: u64,
    pub r_eval: Vec<f64>,
    pub data: DataSource,
    pub out_dir: PathBuf,
}

struct Entries {
    path: PathBuf,
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let k = k.trim().to_string();
            if map.insert(k.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(err(format!("duplicate key {k}")));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            map,
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn take_str(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take_str(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| self.err(line, format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.take_str(key) {
            None => Ok(default),
            Some((line, v)) => v
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| self.err(line, format!("{key}: cannot parse {x:?}"))))
                .collect(),
        }
    }

    fn choice<T>(&mut self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        match self.take_str(key) {
            None => Ok(default),
            Some((line, v)) => parse(&v).ok_or_else(|| self.err(line, format!("{key}: unknown value {v:?}"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.iter().next() {
            Some((k, (line, _))) => Err(self.err(*line, format!("unknown key {k}"))),
            None => Ok(()),
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn phantom_spec(e: &mut Entries) -> Result<PhantomSpec> {
    let d = PhantomSpec::default();
    Ok(PhantomSpec {
        n1: e.get("n1", d.n1)?,
        n2: e.get("n2", d.n2)?,
        nc: e.get("nc", d.nc)?,
        nf: e.get("nf", d.nf)?,
        ellipses: e.get("ellipses", d.ellipses)?,
        motion: e.get("motion", d.motion)?,
        coil_width: e.get("coil_width", d.coil_width)?,
        noise: e.get("noise", d.noise)?,
        seed: e.get("phantom_seed", d.seed)?,
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    /// `path` only names the source in errors and anchors relative paths.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let mut e = Entries::parse(path, text)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment").to_string();
        let name = e.get("name", stem)?;

        let policy = e.choice("policy", FramePolicy::FrameSpecific, FramePolicy::parse)?;
        let mode = e.choice("mode", SampleMode::Lines, SampleMode::parse)?;
        let kind = e.choice("scheme", SchemeKind::Random, SchemeKind::parse)?;
        let ads_default = AdsConfig::default();
        let cascades = e.get("cascades", ads_default.cascades)?;
        let enc_scales = e.get("enc_scales", ads_default.enc_scales)?;
        let enc_channels = e.get("enc_channels", ads_default.enc_channels)?;
        let mlp_layers = e.get("mlp_layers", ads_default.mlp_layers)?;
        let mlp_hidden = e.get("mlp_hidden", ads_default.mlp_hidden)?;
        let allocation = match e.take_str("allocation") {
            None => Allocation::Uniform,
            Some((_, v)) if v == "uniform" => Allocation::Uniform,
            Some((line, v)) => {
                let w: std::result::Result<Vec<f64>, _> = v.split(',').map(|x| x.trim().parse()).collect();
                Allocation::Weighted(w.map_err(|_| e.err(line, format!("allocation: cannot parse {v:?}")))?)
            }
        };
        let (line, sampler) = e.take_str("sampler").unwrap_or((0, "ads".into()));
        let sampler = match sampler.as_str() {
            "ads" => SamplerConfig::Adaptive(AdsConfig {
                cascades,
                enc_scales,
                enc_channels,
                mlp_layers,
                mlp_hidden,
                policy,
                sampling: mode,
                allocation,
                ..ads_default
            }),
            "optimized" => SamplerConfig::Optimized { policy, mode },
            "scheme" => SamplerConfig::Scheme { kind, policy },
            other => return Err(e.err(line, format!("sampler: unknown value {other:?}"))),
        };

        let (line, init) = e.take_str("init").unwrap_or((0, "acs".into()));
        let offset = e.get("init_offset", 4.0)?;
        let init = match init.as_str() {
            "acs" => InitPattern::Acs,
            "equispaced" => InitPattern::Equispaced { offset },
            other => return Err(e.err(line, format!("init: unknown value {other:?}"))),
        };
        let rd = ReconConfig::default();
        let (line, recon_kind) = e.take_str("recon").unwrap_or((0, "unrolled".into()));
        let recon_cfg = ReconConfig {
            steps: e.get("recon_steps", rd.steps)?,
            width: e.get("recon_width", rd.width)?,
            depth: e.get("recon_depth", rd.depth)?,
        };
        let recon = match recon_kind.as_str() {
            "unrolled" => Some(recon_cfg),
            "none" => None,
            other => return Err(e.err(line, format!("recon: unknown value {other:?}"))),
        };
        let smp = match e.take_str("smp") {
            None => Some(SmpConfig::default()),
            Some((_, v)) if v == "none" => None,
            Some((line, v)) => {
                let c: std::result::Result<Vec<usize>, _> = v.split(',').map(|x| x.trim().parse()).collect();
                Some(SmpConfig {
                    channels: c.map_err(|_| e.err(line, format!("smp: cannot parse {v:?}")))?,
                })
            }
        };
        let loss = e.choice("loss", LossKind::DualDomain, LossKind::parse)?;
        let acs_fraction = e.get("acs_fraction", 0.04)?;
        let model = ModelConfig {
            sampler,
            recon,
            smp,
            loss,
            acs_fraction,
            init,
        };

        let td = TrainConfig::default();
        let lr_factor: f64 = e.get("lr_factor", 100.0)?;
        let train = TrainConfig {
            steps: e.get("steps", td.steps)?,
            lr: LrSchedule::desk(lr_factor),
            r_values: e.list("r_train", td.r_values)?,
            val_every: e.get("val_every", td.val_every)?,
            seed: e.get("seed", td.seed)?,
        };
        let model_seed = e.get("model_seed", 0)?;
        let eval_seed = e.get("eval_seed", 0)?;
        let r_eval = e.list("r_eval", vec![4.0, 6.0, 8.0])?;
        let count = e.get("phantoms", 30)?;
        let spec = phantom_spec(&mut e)?;
        let data = match e.take_str("data_dir") {
            Some((_, d)) => DataSource::Dir(resolve(&base, &d)),
            None => DataSource::Phantoms { spec, count },
        };
        let out_dir = match e.take_str("out_dir") {
            Some((_, d)) => resolve(&base, &d),
            None => base.join("out").join(&name),
        };
        e.finish()?;

        let cfg = Self {
            name,
            model,
            train,
            model_seed,
            eval_seed,
            r_eval,
            data,
            out_dir,
        };
        cfg.validate(path)?;
        Ok(cfg)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |msg: String| Error::Config {
            path: path.to_path_buf(),
            line: 0,
            msg,
        };
        if self.train.steps == 0 || self.train.val_every == 0 {
            return Err(bad("steps and val_every must be >= 1".into()));
        }
        if !(self.model.acs_fraction > 0.0 && self.model.acs_fraction < 1.0) {
            return Err(bad(format!("acs_fraction must lie in (0, 1), got {}", self.model.acs_fraction)));
        }
        for &r in self.train.r_values.iter().chain(&self.r_eval) {
            if !(r > 1.0) || !r.is_finite() {
                return Err(bad(format!("accelerations must be > 1, got {r}")));
            }
        }
        if self.train.r_values.is_empty() || self.r_eval.is_empty() {
            return Err(bad("r_train and r_eval need at least one value".into()));
        }
        Ok(())
    }
}

/// Phantom-only config for `ksampler phantom`: `phantoms` and the phantom
/// shape keys above.
pub fn load_phantom_spec(path: &Path) -> Result<(PhantomSpec, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut e = Entries::parse(path, &text)?;
    let count = e.get("phantoms", 30)?;
    let spec = phantom_spec(&mut e)?;
    e.finish()?;
    Ok((spec, count))
}
