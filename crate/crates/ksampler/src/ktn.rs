//! The `KTN1` tensor container.
//!
//! Layout: magic `KTN1`, one byte kind (0 real, 1 complex), one byte rank,
//! `rank` little-endian `u32` extents, then the little-endian `f64` payload
//! (interleaved re/im for complex tensors).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ksampler_core::forward::{DynamicImage, KSpaceVolume, SensitivityMaps};
use ksampler_core::{Kind, Tensor};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"KTN1";

pub fn encode<W: Write>(t: &Tensor, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[u8::from(t.is_complex()), t.rank() as u8])?;
    for &d in t.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

/// Decodes one tensor; `Err(msg)` for malformed content.
pub fn decode<R: Read>(mut r: R) -> std::io::Result<std::result::Result<Tensor, String>> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Ok(Err("not a KTN1 file".into()));
    }
    let kind = match head[4] {
        0 => Kind::Real,
        1 => Kind::Complex,
        k => return Ok(Err(format!("unknown kind byte {k}"))),
    };
    let mut dims = Vec::with_capacity(head[5] as usize);
    for _ in 0..head[5] {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        dims.push(u32::from_le_bytes(b) as usize);
    }
    let n = dims.iter().product::<usize>() * kind.width();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * n {
        return Ok(Err(format!("payload has {} bytes, extents {:?} need {}", bytes.len(), dims, 8 * n)));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(Tensor::new(&dims, data, kind).map_err(|e| e.to_string()))
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    encode(t, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(BufReader::new(f))
        .map_err(|e| Error::io(path, e))?
        .map_err(|msg| Error::format(path, msg))
}

pub fn read_kspace(path: &Path) -> Result<KSpaceVolume> {
    Ok(KSpaceVolume::new(read_tensor(path)?)?)
}

pub fn read_image(path: &Path) -> Result<DynamicImage> {
    Ok(DynamicImage::new(read_tensor(path)?)?)
}

pub fn read_maps(path: &Path) -> Result<SensitivityMaps> {
    Ok(SensitivityMaps::new(read_tensor(path)?)?)
}
