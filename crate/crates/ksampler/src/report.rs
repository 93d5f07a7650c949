//! Metrics CSV, summaries and comparison reports.

use std::fmt::Write as _;
use std::path::Path;

use ksampler_core::metrics::{MetricsReport, ScanMetrics, ScanRecord, Stat, Summary};
use ksampler_core::pipeline::Comparison;
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["scan_id", "R", "scheme", "ssim", "psnr", "nmse"];

/// Records in scan order. Floats use the shortest round-trip form, so a
/// written report reads back bit-identically.
pub fn write_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
    for r in report.sorted() {
        let m = &r.metrics;
        w.write_record([
            r.scan_id.to_string(),
            r.r.to_string(),
            r.scheme.clone(),
            m.ssim.to_string(),
            m.psnr.to_string(),
            m.nmse.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<MetricsReport> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = rd.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::format(path, format!("expected header {}", CSV_HEADER.join(","))));
    }
    let mut report = MetricsReport::default();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let bad = |col: &str| Error::format(path, format!("row {}: bad {col}", i + 1));
        let num = |k: usize| row[k].trim().parse::<f64>().map_err(|_| bad(CSV_HEADER[k]));
        report.push(ScanRecord {
            scan_id: row[0].trim().parse().map_err(|_| bad("scan_id"))?,
            r: num(1)?,
            scheme: row[2].trim().to_string(),
            metrics: ScanMetrics {
                ssim: num(3)?,
                psnr: num(4)?,
                nmse: num(5)?,
            },
        });
    }
    Ok(report)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

fn stat(s: &Stat) -> Value {
    json!({ "mean": s.mean, "std": s.std })
}

fn summary_value(s: &Summary) -> Value {
    json!({ "count": s.count, "ssim": stat(&s.ssim), "psnr": stat(&s.psnr), "nmse": stat(&s.nmse) })
}

/// Summary per acceleration plus the overall one.
pub fn summary_json(report: &MetricsReport) -> Value {
    let mut rs: Vec<f64> = report.records.iter().map(|r| r.r).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    let mut schemes: Vec<&str> = report.records.iter().map(|r| r.scheme.as_str()).collect();
    schemes.sort_unstable();
    schemes.dedup();
    let by_r: Vec<Value> = rs
        .iter()
        .map(|&r| {
            let sub = MetricsReport {
                records: report.records.iter().filter(|x| x.r == r).cloned().collect(),
            };
            let mut v = summary_value(&sub.summary());
            v["R"] = json!(r);
            v
        })
        .collect();
    json!({ "schemes": schemes, "by_R": by_r, "overall": summary_value(&report.summary()) })
}

pub fn write_summary(path: &Path, report: &MetricsReport) -> Result<()> {
    let text = serde_json::to_string_pretty(&summary_json(report)).expect("plain values") + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Table of per-config rows followed by the epsilon_min matrix.
pub fn comparison_text(cmp: &Comparison) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<24} {:>5} {:>17} {:>17} {:>19}", "config", "R", "ssim", "psnr", "nmse");
    for row in &cmp.rows {
        let m = &row.summary;
        let _ = writeln!(
            s,
            "{:<24} {:>5} {:>8.4} ± {:<6.4} {:>8.3} ± {:<6.3} {:>9.5} ± {:<7.5}",
            row.config, row.r, m.ssim.mean, m.ssim.std, m.psnr.mean, m.psnr.std, m.nmse.mean, m.nmse.std
        );
    }
    let _ = writeln!(s, "\nepsilon_min(row, col) on per-scan SSIM; < 0.5 means row dominates col");
    let _ = write!(s, "{:<24}", "");
    for c in &cmp.configs {
        let _ = write!(s, " {:>10.10}", c);
    }
    s.push('\n');
    for (i, c) in cmp.configs.iter().enumerate() {
        let _ = write!(s, "{:<24}", c);
        for v in &cmp.aso[i] {
            let _ = write!(s, " {:>10.4}", v);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\nbest on average: {}", cmp.configs[cmp.best]);
    for (c, &nd) in cmp.configs.iter().zip(&cmp.not_dominated) {
        if nd && c != &cmp.configs[cmp.best] {
            let _ = writeln!(s, "not significantly worse than best: {c}");
        }
    }
    s
}

pub fn comparison_json(cmp: &Comparison) -> Value {
    let rows: Vec<Value> = cmp
        .rows
        .iter()
        .map(|r| {
            let mut v = summary_value(&r.summary);
            v["config"] = json!(r.config);
            v["R"] = json!(r.r);
            v
        })
        .collect();
    json!({
        "configs": cmp.configs,
        "rows": rows,
        "aso_epsilon_min": cmp.aso,
        "best": cmp.configs[cmp.best],
        "not_dominated": cmp.not_dominated,
    })
}
