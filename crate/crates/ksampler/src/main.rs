use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksampler::config::{load_phantom_spec, ExperimentConfig};
use ksampler::experiment::{self, CompareOptions};
use ksampler::report::read_csv;
use ksampler::{mask, render, Error, Result};
use ksampler_core::aso::{aso, DEFAULT_ALPHA, DEFAULT_BOOTSTRAP};
use ksampler_core::schemes::{generate_seeded, FramePolicy, SchemeKind, SchemeSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Adaptive dynamic k-space subsampling and reconstruction experiments.
///
/// Exit codes: 0 success, 1 I/O or format error, 2 config error, 3 numeric
/// failure, 4 infeasible sampling budget.
#[derive(Parser)]
#[command(name = "ksampler", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a phantom dataset as KTN1 files.
    Phantom {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a config and write its best checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a config on its test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint directory (defaults to `<out_dir>/checkpoint` when present).
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Comma-separated accelerations (defaults to `r_eval`).
        #[arg(long, value_delimiter = ',')]
        r: Option<Vec<f64>>,
        /// Also write mask and reconstruction PNGs.
        #[arg(long)]
        images: bool,
    },
    /// Evaluate several configs on the same scans and test for dominance.
    Compare {
        #[arg(long, num_args = 2.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "4,6,8")]
        r: Vec<f64>,
        #[arg(long, default_value = "compare")]
        out: PathBuf,
        #[command(flatten)]
        test: AsoArgs,
        /// Train configs that have no checkpoint yet.
        #[arg(long)]
        train_missing: bool,
    },
    /// Sampling pattern utilities.
    Mask {
        #[command(subcommand)]
        cmd: MaskCmd,
    },
    /// Almost-stochastic-order test between two metrics CSVs.
    Aso {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Only rows at this acceleration.
        #[arg(long)]
        r: Option<f64>,
        #[command(flatten)]
        test: AsoArgs,
    },
}

#[derive(Args)]
struct AsoArgs {
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum MaskCmd {
    /// Generate a predetermined or random pattern.
    Generate {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        r: f64,
        /// `n1,n2,nf`
        #[arg(long, value_delimiter = ',', required = true)]
        shape: Vec<usize>,
        #[arg(long, default_value = "frame_specific")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.04)]
        acs: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        png: Option<PathBuf>,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
}

fn config_error(path: &Path, msg: String) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        line: 0,
        msg,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Phantom { spec, out } => {
            let (spec, count) = load_phantom_spec(&spec)?;
            experiment::write_phantoms(&out, &spec, count)?;
            println!("wrote {count} phantoms to {}", out.display());
        }
        Cmd::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let data = experiment::load_dataset(&cfg)?;
            let (_, report) = experiment::train(&cfg, &data)?;
            println!(
                "{}: {} steps, best validation SSIM {:.4} at step {}; checkpoint in {}",
                cfg.name,
                report.losses.len(),
                report.best_ssim,
                report.best_step,
                experiment::checkpoint_dir(&cfg).display()
            );
        }
        Cmd::Eval { config, ckpt, r, images } => {
            let cfg = ExperimentConfig::load(&config)?;
            let data = experiment::load_dataset(&cfg)?;
            let model = match ckpt {
                Some(dir) => experiment::build_model(&cfg, &data, Some(&dir))?,
                None => experiment::trained_model(&cfg, &data, false)?,
            };
            let r_set = r.unwrap_or_else(|| cfg.r_eval.clone());
            let report = experiment::evaluate(&cfg, &model, &data, &r_set, images)?;
            let s = report.summary();
            println!(
                "{}: {} scans, SSIM {:.4} ± {:.4}, PSNR {:.2} ± {:.2}, NMSE {:.5} ± {:.5}",
                cfg.name, s.count, s.ssim.mean, s.ssim.std, s.psnr.mean, s.psnr.std, s.nmse.mean, s.nmse.std
            );
        }
        Cmd::Compare {
            configs,
            r,
            out,
            test,
            train_missing,
        } => {
            let cfgs = configs.iter().map(|p| ExperimentConfig::load(p)).collect::<Result<Vec<_>>>()?;
            let opts = CompareOptions {
                r_set: r,
                alpha: test.alpha,
                bootstrap: test.bootstrap,
                seed: test.seed,
                train_missing,
            };
            let cmp = experiment::compare_configs(&cfgs, &opts, &out)?;
            print!("{}", ksampler::report::comparison_text(&cmp));
        }
        Cmd::Mask {
            cmd:
                MaskCmd::Generate {
                    kind,
                    r,
                    shape,
                    policy,
                    seed,
                    acs,
                    out,
                    png,
                    pgm,
                },
        } => {
            let kind = SchemeKind::parse(&kind).ok_or_else(|| config_error(Path::new("--kind"), format!("unknown scheme {kind}")))?;
            let policy = FramePolicy::parse(&policy)
                .ok_or_else(|| config_error(Path::new("--policy"), format!("unknown policy {policy}")))?;
            let [n1, n2, nf] = shape[..] else {
                return Err(config_error(Path::new("--shape"), format!("expected n1,n2,nf, got {shape:?}")));
            };
            let mut spec = SchemeSpec::new(kind, r, policy);
            spec.seed = Some(seed);
            spec.acs_fraction = acs;
            let lambda = generate_seeded(&spec, n1, n2, nf, &mut ChaCha8Rng::seed_from_u64(seed))?;
            mask::write_mask(&out, &lambda)?;
            if let Some(p) = png {
                render::mask_png(&p, &lambda)?;
            }
            if let Some(p) = pgm {
                render::mask_pgm(&p, &lambda)?;
            }
            let per_frame: Vec<usize> = lambda.frames().iter().map(Vec::len).collect();
            println!("{} R={} samples per frame {:?} -> {}", kind.name(), r, per_frame, out.display());
        }
        Cmd::Aso { a, b, r, test } => {
            let load = |p: &Path| -> Result<Vec<f64>> {
                let mut rep = read_csv(p)?;
                if let Some(r) = r {
                    rep.records.retain(|x| x.r == r);
                }
                if rep.records.is_empty() {
                    return Err(Error::format(p, "no rows to test"));
                }
                Ok(rep.ssim_values())
            };
            let (sa, sb) = (load(&a)?, load(&b)?);
            let mut rng = ChaCha8Rng::seed_from_u64(test.seed);
            let ab = aso(&sa, &sb, test.alpha, test.bootstrap, &mut rng)?;
            let ba = aso(&sb, &sa, test.alpha, test.bootstrap, &mut rng)?;
            println!("epsilon_min(a, b) = {ab:.4}");
            println!("epsilon_min(b, a) = {ba:.4}");
            match (ab < 0.5, ba < 0.5) {
                (true, false) => println!("a almost stochastically dominates b"),
                (false, true) => println!("b almost stochastically dominates a"),
                _ => println!("no dominance at alpha = {}", test.alpha),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
