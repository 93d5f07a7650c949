//! Parameter checkpoints: a directory holding `manifest.txt` and one KTN1
//! file per tensor.
//!
//! Manifest lines are `file name kind dims`, e.g.
//! `t0003.ktn recon.step0.conv1.w real 8x2x1x3x3`.

use std::fmt::Write as _;
use std::path::Path;

use ksampler_core::autodiff::ParamStore;
use ksampler_core::Kind;

use crate::error::{Error, Result};
use crate::ktn::{read_tensor, write_tensor};

pub const MANIFEST: &str = "manifest.txt";

fn dims_text(dims: &[usize]) -> String {
    if dims.is_empty() {
        return "scalar".into();
    }
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

pub fn save(dir: &Path, store: &ParamStore) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (i, (name, t)) in store.iter().enumerate() {
        let file = format!("t{i:04}.ktn");
        write_tensor(&dir.join(&file), t)?;
        let kind = if t.is_complex() { "complex" } else { "real" };
        let _ = writeln!(manifest, "{file} {name} {kind} {}", dims_text(t.dims()));
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn load(dir: &Path) -> Result<ParamStore> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut store = ParamStore::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |msg: &str| Error::format(&path, format!("line {}: {msg}", i + 1));
        let [file, name, kind, dims] = line.split_whitespace().collect::<Vec<_>>()[..] else {
            return Err(bad("expected `file name kind dims`"));
        };
        let t = read_tensor(&dir.join(file))?;
        let want_kind = match kind {
            "real" => Kind::Real,
            "complex" => Kind::Complex,
            _ => return Err(bad("kind must be real or complex")),
        };
        if t.kind() != want_kind || dims_text(t.dims()) != dims {
            return Err(bad(&format!("{file} does not match its manifest entry")));
        }
        store.add(name, t);
    }
    Ok(store)
}
