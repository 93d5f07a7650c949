//! Test-set evaluation and the comparison harness.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::aso::aso;
use crate::autodiff::Tape;
use crate::error::{bail, Result};
use crate::forward::{DynamicImage, SamplingSet};
use crate::metrics::{evaluate_metrics, MetricsReport, ScanRecord, Summary};
use crate::schemes::SeedPolicy;

use super::data::Scan;
use super::model::{e2e_forward, E2eModel};

/// Final reconstruction and the mask it was computed from, with the
/// inference stream of `scan.id`.
pub fn reconstruct_scan(model: &E2eModel, scan: &Scan, r: f64, seeds: &SeedPolicy) -> Result<(SamplingSet, DynamicImage)> {
    let mut rng = seeds.inference(scan.id);
    let mut tape = Tape::new();
    let out = e2e_forward(model, &mut tape, scan, r, &mut rng)?;
    let last = *out.xs.last().expect("nonempty");
    let x = DynamicImage::new(tape.value(last).clone())?;
    Ok((out.lambda, x))
}

/// Per-scan metrics at acceleration `r`.
pub fn evaluate(model: &E2eModel, scans: &[Scan], r: f64, seeds: &SeedPolicy) -> Result<MetricsReport> {
    let name = model.config.sampler.name();
    let mut report = MetricsReport::default();
    for scan in scans {
        let (_, x) = reconstruct_scan(model, scan, r, seeds)?;
        report.push(ScanRecord {
            scan_id: scan.id,
            r,
            scheme: name.clone(),
            metrics: evaluate_metrics(&x, &scan.x)?,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub config: String,
    pub r: f64,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub configs: Vec<String>,
    /// One row per config and acceleration.
    pub rows: Vec<ComparisonRow>,
    /// `aso[i][j]` is `epsilon_min(i, j)` on the per-scan SSIM lists.
    pub aso: Vec<Vec<f64>>,
    /// Highest mean SSIM over all accelerations, ties broken by lower NMSE.
    pub best: usize,
    /// `true` where the best config does not almost stochastically dominate
    /// this one.
    pub not_dominated: Vec<bool>,
}

fn scan_ids(report: &MetricsReport) -> Vec<u64> {
    report.sorted().iter().map(|r| r.scan_id).collect()
}

/// Pairwise comparison of evaluated configs. Every report must cover the
/// same scans (with the same multiplicity).
pub fn compare<R: Rng + ?Sized>(
    results: &[(String, MetricsReport)],
    alpha: f64,
    bootstrap: usize,
    rng: &mut R,
) -> Result<Comparison> {
    if results.len() < 2 {
        bail!(Invalid, "comparison needs at least two configs, got {}", results.len());
    }
    let reference = scan_ids(&results[0].1);
    if reference.is_empty() {
        bail!(Invalid, "config {} has no evaluated scans", results[0].0);
    }
    for (name, rep) in &results[1..] {
        if scan_ids(rep) != reference {
            bail!(Shape, "config {} was evaluated on a different scan set", name);
        }
    }
    let mut rows = Vec::new();
    for (name, rep) in results {
        let mut r_set: Vec<f64> = rep.records.iter().map(|r| r.r).collect();
        r_set.sort_by(f64::total_cmp);
        r_set.dedup();
        for &r in &r_set {
            let sub = MetricsReport {
                records: rep.records.iter().filter(|x| x.r == r).cloned().collect(),
            };
            rows.push(ComparisonRow {
                config: name.clone(),
                r,
                summary: sub.summary(),
            });
        }
    }

    let ssim: Vec<Vec<f64>> = results.iter().map(|(_, rep)| rep.ssim_values()).collect();
    let n = results.len();
    let mut matrix = alloc::vec![alloc::vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            matrix[i][j] = aso(&ssim[i], &ssim[j], alpha, bootstrap, rng)?;
        }
    }

    let overall: Vec<Summary> = results.iter().map(|(_, rep)| rep.summary()).collect();
    let mut best = 0;
    for i in 1..n {
        let (a, b) = (&overall[i], &overall[best]);
        if a.ssim.mean > b.ssim.mean || (a.ssim.mean == b.ssim.mean && a.nmse.mean < b.nmse.mean) {
            best = i;
        }
    }
    let not_dominated = (0..n).map(|j| j == best || matrix[best][j] >= 0.5).collect();
    Ok(Comparison {
        configs: results.iter().map(|(c, _)| c.clone()).collect(),
        rows,
        aso: matrix,
        best,
        not_dominated,
    })
}
