//! DTF1 tensor files: an ASCII header `DTF1 n I_1 … I_n\n` followed by the
//! entries as little-endian `f64` in storage order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

const MAGIC: &str = "DTF1";
const MAX_HEADER: usize = 4096;

pub fn write_dtf_to<W: Write>(mut w: W, t: &DenseTensor) -> Result<()> {
    let mut header = format!("{MAGIC} {}", t.ndim());
    for d in t.shape() {
        header.push_str(&format!(" {d}"));
    }
    header.push('\n');
    w.write_all(header.as_bytes())?;
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dtf_from<R: Read>(mut r: R) -> Result<DenseTensor> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Format("DTF1 header is not terminated".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > MAX_HEADER {
            return Err(Error::Format("DTF1 header too long".into()));
        }
    }
    let header = String::from_utf8(header)
        .map_err(|_| Error::Format("DTF1 header is not ASCII".into()))?;
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(Error::Format("bad magic, expected DTF1".into()));
    }
    let n: usize = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::Format("missing or invalid mode count".into()))?;
    let mut shape = Vec::with_capacity(n);
    for _ in 0..n {
        let d: i64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Format("missing or invalid dimension".into()))?;
        if d <= 0 {
            return Err(Error::Format(format!("non-positive dimension {d}")));
        }
        shape.push(d as usize);
    }
    if fields.next().is_some() || n == 0 {
        return Err(Error::Format("dimension count does not match header".into()));
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("tensor too large".into()))?;
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("truncated DTF1 payload".into()),
            _ => Error::Io(e),
        })?;
        data.push(f64::from_le_bytes(buf));
    }
    DenseTensor::new(shape, data)
}

pub fn write_dtf(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    write_dtf_to(BufWriter::new(File::create(path)?), t)
}

pub fn read_dtf(path: impl AsRef<Path>) -> Result<DenseTensor> {
    read_dtf_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = DenseTensor::new(vec![2, 1], vec![1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_dtf_to(&mut buf, &t).unwrap();
        assert!(buf.starts_with(b"DTF1 2 2 1\n"));
        assert_eq!(buf.len(), 11 + 16);
        assert_eq!(&buf[11..19], &1.0f64.to_le_bytes());
        assert_eq!(read_dtf_from(&buf[..]).unwrap(), t);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(read_dtf_from(&b"DTF2 1 1\n\0\0\0\0\0\0\0\0"[..]), Err(Error::Format(_))));
        assert!(matches!(read_dtf_from(&b"DTF1 1 0\n"[..]), Err(Error::Format(_))));
        assert!(matches!(read_dtf_from(&b"DTF1 1 -3\n"[..]), Err(Error::Format(_))));
        assert!(matches!(read_dtf_from(&b"DTF1 2 1\n"[..]), Err(Error::Format(_))));
        assert!(matches!(read_dtf_from(&b"DTF1 1 2\n\0\0\0\0\0\0\0\0"[..]), Err(Error::Format(_))));
        assert!(matches!(read_dtf_from(&b"DTF1 1 1"[..]), Err(Error::Format(_))));
    }
}
