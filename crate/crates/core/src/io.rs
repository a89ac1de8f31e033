//! PNG and lossless float image files.
//!
//! The float format is a 5-byte magic `QIMG1`, the row and column counts as
//! little-endian `u32`, then the R, G and B planes, each row-major
//! little-endian `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::PureQImage;

pub const FLOAT_MAGIC: &[u8; 5] = b"QIMG1";

/// Reads any 8-bit PNG as RGB (gray and alpha are converted).
pub fn read_png(path: impl AsRef<Path>) -> Result<PureQImage> {
    let img = image::open(path.as_ref())?.into_rgb8();
    let (w, h) = img.dimensions();
    PureQImage::from_rgb8(h as usize, w as usize, img.as_raw())
}

/// Writes an RGB PNG after clamping and rounding.
pub fn write_png(path: impl AsRef<Path>, img: &PureQImage) -> Result<()> {
    let (m, n) = img.shape();
    image::save_buffer(
        path.as_ref(),
        &img.to_rgb8(),
        n as u32,
        m as u32,
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(())
}

pub fn encode_float(img: &PureQImage) -> Vec<u8> {
    let (m, n) = img.shape();
    let mut out = Vec::with_capacity(13 + 24 * m * n);
    out.extend_from_slice(FLOAT_MAGIC);
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for c in 0..3 {
        for v in img.channel(c) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_float(bytes: &[u8]) -> Result<PureQImage> {
    let bad = |reason: String| Error::Format {
        what: "float image",
        reason,
    };
    if bytes.len() < 13 || &bytes[..5] != FLOAT_MAGIC {
        return Err(bad("missing QIMG1 header".into()));
    }
    let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (m, n) = (dim(5), dim(9));
    let expected = 13 + 24 * m * n;
    if bytes.len() != expected {
        return Err(bad(format!("{m}x{n} needs {expected} bytes, found {}", bytes.len())));
    }
    let mut planes = (0..3).map(|c| {
        let start = 13 + c * 8 * m * n;
        bytes[start..start + 8 * m * n]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect::<Vec<f64>>()
    });
    let (r, g, b) = (planes.next().unwrap(), planes.next().unwrap(), planes.next().unwrap());
    PureQImage::from_channels(m, n, r, g, b)
}

pub fn write_float(path: impl AsRef<Path>, img: &PureQImage) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_float(img))?;
    Ok(())
}

pub fn read_float(path: impl AsRef<Path>) -> Result<PureQImage> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_float(&bytes)
}

/// Float file if it starts with the magic, PNG otherwise.
pub fn read_image(path: impl AsRef<Path>) -> Result<PureQImage> {
    let path = path.as_ref();
    let mut head = [0u8; 5];
    let is_float = fs::File::open(path)?.read_exact(&mut head).is_ok() && &head == FLOAT_MAGIC;
    if is_float {
        read_float(path)
    } else {
        read_png(path)
    }
}
