//! Experiments on disk: datasets, training runs, evaluation and comparison.
//!
//! A training run writes into the config's `out_dir`:
//!
//! ```text
//! checkpoint/        manifest.txt + one KTN1 file per parameter tensor
//! train_loss.csv     step,lr,loss
//! validation.csv     step,ssim
//! ```
//!
//! Evaluation adds `eval.csv`, `eval_summary.json` and the acquired masks
//! under `masks/`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ksampler_core::metrics::{evaluate_metrics, MetricsReport, ScanRecord};
use ksampler_core::pipeline::{
    compare, gen_phantom, reconstruct_scan, Comparison, Dataset, E2eModel, PhantomSpec, Scan, TrainReport, Trainer,
};
use ksampler_core::schemes::SeedPolicy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::config::{DataSource, ExperimentConfig};
use crate::error::{Error, Result};
use crate::ktn::{read_image, read_kspace, read_maps, write_tensor};
use crate::mask::write_mask;
use crate::render::{image_png, mask_png};
use crate::report::{comparison_json, comparison_text, write_csv, write_summary};

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn scan_stem(id: u64) -> String {
    format!("scan_{id:04}")
}

/// Writes `count` phantoms (seeds `spec.seed + i`) as
/// `scan_NNNN.{kspace,image,maps}.ktn` plus a magnitude preview PNG.
pub fn write_phantoms(dir: &Path, spec: &PhantomSpec, count: usize) -> Result<()> {
    mkdir(dir)?;
    for i in 0..count {
        let p = gen_phantom(&PhantomSpec {
            seed: spec.seed.wrapping_add(i as u64),
            ..spec.clone()
        })?;
        let stem = scan_stem(i as u64);
        write_tensor(&dir.join(format!("{stem}.kspace.ktn")), p.y.tensor())?;
        write_tensor(&dir.join(format!("{stem}.image.ktn")), p.x.tensor())?;
        write_tensor(&dir.join(format!("{stem}.maps.ktn")), p.s.tensor())?;
        image_png(&dir.join(format!("{stem}.png")), &p.x)?;
    }
    Ok(())
}

/// Reads every `scan_NNNN.kspace.ktn` in `dir` (with its image and maps) in
/// id order and splits 60/20/20.
pub fn read_dataset_dir(dir: &Path, acs_fraction: f64) -> Result<Dataset> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name();
        let name = name.to_string_lossy();
        if let Some(id) = name.strip_prefix("scan_").and_then(|s| s.strip_suffix(".kspace.ktn")) {
            ids.push(id.parse::<u64>().map_err(|_| Error::format(dir, format!("bad scan file name {name}")))?);
        }
    }
    ids.sort_unstable();
    if ids.len() < 3 {
        return Err(Error::format(dir, format!("need at least three scans, found {}", ids.len())));
    }
    let mut scans = Vec::with_capacity(ids.len());
    for id in ids {
        let stem = scan_stem(id);
        let y = read_kspace(&dir.join(format!("{stem}.kspace.ktn")))?;
        let x = read_image(&dir.join(format!("{stem}.image.ktn")))?;
        let s = read_maps(&dir.join(format!("{stem}.maps.ktn")))?;
        scans.push(Scan::new(id, y, x, s, acs_fraction)?);
    }
    Ok(Dataset::split(scans))
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Phantoms { spec, count } => Ok(Dataset::phantoms(spec, *count, cfg.model.acs_fraction)?),
        DataSource::Dir(dir) => read_dataset_dir(dir, cfg.model.acs_fraction),
    }
}

pub fn checkpoint_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("checkpoint")
}

/// Freshly initialized model, or one restored from `ckpt`.
pub fn build_model(cfg: &ExperimentConfig, data: &Dataset, ckpt: Option<&Path>) -> Result<E2eModel> {
    let dims = data.dims().ok_or_else(|| Error::Core(ksampler_core::Error::Invalid("empty training set".into())))?;
    let mut model = E2eModel::new(&cfg.model, dims, cfg.model_seed)?;
    if let Some(dir) = ckpt {
        model.store.load_from(&checkpoint::load(dir)?)?;
    }
    Ok(model)
}

/// Trains, writes the best checkpoint and the loss/validation logs.
pub fn train(cfg: &ExperimentConfig, data: &Dataset) -> Result<(E2eModel, TrainReport)> {
    let mut model = build_model(cfg, data, None)?;
    let report = Trainer::run(&mut model, data, &cfg.train)?;
    mkdir(&cfg.out_dir)?;
    checkpoint::save(&checkpoint_dir(cfg), &model.store)?;
    let mut log = String::from("step,lr,loss\n");
    for (step, loss) in report.losses.iter().enumerate() {
        let _ = writeln!(log, "{step},{},{loss}", cfg.train.lr.at(step));
    }
    write(&cfg.out_dir.join("train_loss.csv"), log)?;
    let mut val = String::from("step,ssim\n");
    for (step, ssim) in &report.validation {
        let _ = writeln!(val, "{step},{ssim}");
    }
    write(&cfg.out_dir.join("validation.csv"), val)?;
    Ok((model, report))
}

/// Per-scan metrics over `scans` and every acceleration in `r_set`. With
/// `out` set, masks (and reconstructions when `images`) are written there.
pub fn evaluate_model(
    model: &E2eModel,
    scans: &[Scan],
    r_set: &[f64],
    eval_seed: u64,
    out: Option<(&Path, bool)>,
) -> Result<MetricsReport> {
    let seeds = SeedPolicy::new(eval_seed);
    let scheme = model.config.sampler.name();
    let mut report = MetricsReport::default();
    if let Some((dir, _)) = out {
        mkdir(&dir.join("masks"))?;
    }
    for &r in r_set {
        for scan in scans {
            let (lambda, x) = reconstruct_scan(model, scan, r, &seeds)?;
            if let Some((dir, images)) = out {
                let stem = format!("{}_R{}", scan_stem(scan.id), r);
                write_mask(&dir.join("masks").join(format!("{stem}.mask")), &lambda)?;
                if images {
                    mask_png(&dir.join("masks").join(format!("{stem}.png")), &lambda)?;
                    image_png(&dir.join("masks").join(format!("{stem}_recon.png")), &x)?;
                }
            }
            report.push(ScanRecord {
                scan_id: scan.id,
                r,
                scheme: scheme.clone(),
                metrics: evaluate_metrics(&x, &scan.x)?,
            });
        }
    }
    Ok(report)
}

/// Test-set evaluation written to `out_dir/eval.csv` and
/// `out_dir/eval_summary.json`.
pub fn evaluate(cfg: &ExperimentConfig, model: &E2eModel, data: &Dataset, r_set: &[f64], images: bool) -> Result<MetricsReport> {
    mkdir(&cfg.out_dir)?;
    let report = evaluate_model(model, &data.test, r_set, cfg.eval_seed, Some((&cfg.out_dir, images)))?;
    write_csv(&cfg.out_dir.join("eval.csv"), &report)?;
    write_summary(&cfg.out_dir.join("eval_summary.json"), &report)?;
    Ok(report)
}

/// Model for `cfg`: its checkpoint when present, otherwise trained now when
/// `train_missing`, otherwise an error for configs with parameters.
pub fn trained_model(cfg: &ExperimentConfig, data: &Dataset, train_missing: bool) -> Result<E2eModel> {
    let ckpt = checkpoint_dir(cfg);
    if ckpt.join(checkpoint::MANIFEST).exists() {
        return build_model(cfg, data, Some(&ckpt));
    }
    let model = build_model(cfg, data, None)?;
    if model.store.is_empty() {
        return Ok(model);
    }
    if train_missing {
        return Ok(train(cfg, data)?.0);
    }
    Err(Error::Config {
        path: ckpt,
        line: 0,
        msg: format!("config {} has parameters but no checkpoint; train it first", cfg.name),
    })
}

pub struct CompareOptions {
    pub r_set: Vec<f64>,
    pub alpha: f64,
    pub bootstrap: usize,
    pub seed: u64,
    pub train_missing: bool,
}

/// Evaluates every config on the shared test set and writes
/// `comparison.txt`, `comparison.json` and one CSV per config into `out`.
pub fn compare_configs(cfgs: &[ExperimentConfig], opts: &CompareOptions, out: &Path) -> Result<Comparison> {
    if cfgs.len() < 2 {
        return Err(Error::Core(ksampler_core::Error::Invalid("compare needs at least two configs".into())));
    }
    mkdir(out)?;
    let mut results = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        let data = load_dataset(cfg)?;
        let model = trained_model(cfg, &data, opts.train_missing)?;
        let report = evaluate_model(&model, &data.test, &opts.r_set, cfg.eval_seed, None)?;
        write_csv(&out.join(format!("{}.csv", cfg.name)), &report)?;
        results.push((cfg.name.clone(), report));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cmp = compare(&results, opts.alpha, opts.bootstrap, &mut rng)?;
    write(&out.join("comparison.txt"), comparison_text(&cmp))?;
    let json = serde_json::to_string_pretty(&comparison_json(&cmp)).expect("plain values") + "\n";
    write(&out.join("comparison.json"), json)?;
    Ok(cmp)
}
