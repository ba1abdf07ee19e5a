//! Fixed-size records of one label byte followed by channel-planar RGB
//! pixels, row-major within each plane.

use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CLASSES: usize = 10;

/// Parses records of `1 + 3·side²` bytes.
pub fn parse_records(
    bytes: &[u8],
    side: usize,
    classes: usize,
    provenance: &str,
) -> Result<Dataset> {
    let pixels_per = 3 * side * side;
    let rec = 1 + pixels_per;
    if bytes.len() % rec != 0 {
        return Err(Error::MalformedFile {
            offset: bytes.len() - bytes.len() % rec,
            reason: format!(
                "truncated record: file length {} is not a multiple of {rec}",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / rec;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * pixels_per);
    for (i, r) in bytes.chunks_exact(rec).enumerate() {
        if r[0] as usize >= classes {
            return Err(Error::MalformedFile {
                offset: i * rec,
                reason: format!("label {} out of range for {classes} classes", r[0]),
            });
        }
        labels.push(r[0] as usize);
        pixels.extend_from_slice(&r[1..]);
    }
    Dataset::new(pixels, labels, [3, side, side], classes, provenance)
}

/// The CIFAR-10 binary batch format (32×32, ten classes).
pub fn load_cifar10_binary(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_records(
        &bytes,
        CIFAR_SIDE,
        CIFAR_CLASSES,
        &format!("cifar10:{}", path.display()),
    )
}

/// Serializes a square 3-channel dataset into the same record layout.
pub fn write_records(ds: &Dataset) -> Result<Vec<u8>> {
    let [c, h, w] = ds.shape();
    if c != 3 || h != w || ds.classes() > 256 {
        return Err(Error::contract(format!(
            "cannot export shape {:?} as records",
            ds.shape()
        )));
    }
    let mut out = Vec::with_capacity(ds.len() * (1 + c * h * w));
    for i in 0..ds.len() {
        out.push(ds.label(i) as u8);
        out.extend_from_slice(ds.image(i));
    }
    Ok(out)
}
