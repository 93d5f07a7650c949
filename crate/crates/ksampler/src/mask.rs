//! Sampling-set text format.
//!
//! Text: a header line `mode n1 n2 nf`, then one line of sorted indices per
//! frame (empty line for an empty frame).

use std::fmt::Write as _;
use std::path::Path;

use ksampler_core::forward::{SampleMode, SamplingSet};

use crate::error::{Error, Result};

pub fn to_text(lambda: &SamplingSet) -> String {
    let mut s = format!("{} {} {} {}\n", lambda.mode().name(), lambda.n1(), lambda.n2(), lambda.nf());
    for frame in lambda.frames() {
        let line: Vec<String> = frame.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn from_text(text: &str) -> std::result::Result<SamplingSet, String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty mask file")?.split_whitespace().collect();
    let [mode, n1, n2, nf] = header[..] else {
        return Err(format!("header needs `mode n1 n2 nf`, got {:?}", header.join(" ")));
    };
    let mode = SampleMode::parse(mode).ok_or_else(|| format!("unknown mode {mode}"))?;
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad extent {s}"));
    let (n1, n2, nf) = (num(n1)?, num(n2)?, num(nf)?);
    let mut frames = Vec::with_capacity(nf);
    for t in 0..nf {
        let line = lines.next().unwrap_or("");
        let frame = line
            .split_whitespace()
            .map(|v| v.parse::<usize>().map_err(|_| format!("frame {t}: bad index {v}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        frames.push(frame);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(format!("more than {nf} frame lines"));
    }
    SamplingSet::new(mode, n1, n2, frames).map_err(|e| e.to_string())
}

pub fn write_mask(path: &Path, lambda: &SamplingSet) -> Result<()> {
    std::fs::write(path, to_text(lambda)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: &Path) -> Result<SamplingSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text).map_err(|msg| Error::format(path, msg))
}
