//! Binary PPM (P6, maxval 255) I/O and random patch extraction.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::tensor::DenseTensor;

/// Reads a P6 image into an `H × W × 3` tensor with values in `[0, 1]`.
pub fn ppm_read(path: impl AsRef<Path>) -> Result<DenseTensor> {
    ppm_read_from(BufReader::new(File::open(path)?))
}

pub fn ppm_read_from<R: Read>(mut reader: R) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::Format("not a binary PPM (missing P6 magic)".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PPM header".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("image has zero size".into()));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("malformed PPM header".into()));
    }
    pos += 1;
    let need = width * height * 3;
    let pixels = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("truncated pixel data: {} of {need} bytes", bytes.len() - pos)))?;
    Ok(DenseTensor::from_fn(vec![height, width, 3], |i| {
        pixels[(i[0] * width + i[1]) * 3 + i[2]] as f64 / 255.0
    }))
}

/// Writes an `H × W × 3` tensor as P6; values are clamped to `[0, 1]` and
/// rounded to the nearest of the 256 levels.
pub fn ppm_write(path: impl AsRef<Path>, image: &DenseTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    ppm_write_to(&mut w, image)?;
    w.flush()?;
    Ok(())
}

pub fn ppm_write_to<W: Write>(mut w: W, image: &DenseTensor) -> Result<()> {
    let &[height, width, channels] = image.shape() else {
        return Err(shape_err(format!("expected H×W×3, got {:?}", image.shape())));
    };
    if channels != 3 {
        return Err(shape_err(format!("expected 3 channels, got {channels}")));
    }
    write!(w, "P6\n{width} {height}\n255\n")?;
    let mut pixels = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                pixels.push((image.get(&[y, x, c]).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    w.write_all(&pixels)?;
    Ok(())
}

/// The `p × p × C` block whose top-left corner is `(top, left)`.
pub fn extract_patch(image: &DenseTensor, top: usize, left: usize, p: usize) -> Result<DenseTensor> {
    let &[h, w, c] = image.shape() else {
        return Err(shape_err(format!("expected H×W×C, got {:?}", image.shape())));
    };
    if p == 0 || top + p > h || left + p > w {
        return Err(shape_err(format!("{p}×{p} patch at ({top}, {left}) exceeds {h}×{w}")));
    }
    Ok(DenseTensor::from_fn(vec![p, p, c], |i| {
        image.get(&[top + i[0], left + i[1], i[2]])
    }))
}

/// Random patches with uniformly drawn corners, grouped `b` at a time; the
/// final batch is smaller when `b` does not divide `count`.
#[derive(Debug, Clone)]
pub struct PatchStream<R> {
    image: DenseTensor,
    patch: usize,
    remaining: usize,
    batch: usize,
    rng: R,
}

impl<R: Rng> Iterator for PatchStream<R> {
    type Item = DenseTensor;

    fn next(&mut self) -> Option<DenseTensor> {
        if self.remaining == 0 {
            return None;
        }
        let size = self.batch.min(self.remaining);
        self.remaining -= size;
        let (h, w) = (self.image.shape()[0], self.image.shape()[1]);
        let patches: Vec<_> = (0..size)
            .map(|_| {
                let top = self.rng.random_range(0..=h - self.patch);
                let left = self.rng.random_range(0..=w - self.patch);
                extract_patch(&self.image, top, left, self.patch).expect("corner is in range")
            })
            .collect();
        Some(DenseTensor::stack(&patches).expect("patches share one shape"))
    }
}

pub fn patch_stream<R: Rng>(image: DenseTensor, p: usize, count: usize, b: usize, rng: R) -> Result<PatchStream<R>> {
    if image.ndim() != 3 {
        return Err(shape_err(format!("expected H×W×C, got {:?}", image.shape())));
    }
    if p == 0 || p > image.shape()[0] || p > image.shape()[1] {
        return Err(Error::InvalidArgument(format!(
            "patch size {p} does not fit a {}×{} image",
            image.shape()[0],
            image.shape()[1]
        )));
    }
    if b == 0 {
        return Err(Error::InvalidArgument("minibatch size must be ≥ 1".into()));
    }
    Ok(PatchStream {
        image,
        patch: p,
        remaining: count,
        batch: b,
        rng,
    })
}
