//! Minimal binary PGM (P5) reader/writer.
//!
//! Samples are one byte each when `maxval <= 255` and two bytes
//! big-endian otherwise, per the format. The header parser accepts
//! `#` comments and arbitrary whitespace between tokens; the writer
//! emits the canonical `P5\n<w> <h>\n<maxval>\n` form.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed PGM header: {detail}")]
    MalformedHeader { path: PathBuf, detail: String },
    #[error("{path}: payload truncated: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: sample {value} at index {index} exceeds maxval {maxval}")]
    SampleOutOfRange {
        path: PathBuf,
        index: usize,
        value: u16,
        maxval: u16,
    },
}

/// Decoded PGM contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

pub fn write_pgm(
    path: &Path,
    width: usize,
    height: usize,
    maxval: u16,
    samples: &[u16],
) -> Result<(), PgmError> {
    assert_eq!(samples.len(), width * height, "sample count mismatch");
    let mut bytes = Vec::with_capacity(64 + samples.len() * 2);
    write!(&mut bytes, "P5\n{width} {height}\n{maxval}\n").expect("in-memory write");
    if maxval > 255 {
        for &s in samples {
            bytes.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        bytes.extend(samples.iter().map(|&s| s as u8));
    }
    fs::write(path, bytes).map_err(|source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm, PgmError> {
    let bytes = fs::read(path).map_err(|source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header_err = |detail: &str| PgmError::MalformedHeader {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };

    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(header_err("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        pos = skip_separators(&bytes, pos);
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(header_err("expected decimal field"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ascii");
        *field = text
            .parse::<u64>()
            .map_err(|_| header_err("field out of range"))?;
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(header_err("missing separator before payload"));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(header_err("zero dimension"));
    }
    if maxval == 0 || maxval > u16::MAX as u64 {
        return Err(header_err("maxval outside 1..=65535"));
    }
    let (width, height, maxval) = (width as usize, height as usize, maxval as u16);

    let count = width
        .checked_mul(height)
        .ok_or_else(|| header_err("dimension overflow"))?;
    let wide = maxval > 255;
    let expected = count * if wide { 2 } else { 1 };
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(PgmError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }
    let samples: Vec<u16> = if wide {
        payload[..expected]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        payload[..expected].iter().map(|&b| b as u16).collect()
    };
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, &v)| v > maxval) {
        return Err(PgmError::SampleOutOfRange {
            path: path.to_path_buf(),
            index,
            value,
            maxval,
        });
    }
    Ok(Pgm {
        width,
        height,
        maxval,
        samples,
    })
}

/// Advances past whitespace and `#` comment lines.
fn skip_separators(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips_wide_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let samples = vec![0u16, 1, 511, 1023];
        write_pgm(&path, 2, 2, 1023, &samples).unwrap();
        let pgm = read_pgm(&path).unwrap();
        assert_eq!(pgm.maxval, 1023);
        assert_eq!(pgm.samples, samples);
    }

    #[test]
    fn narrow_payload_uses_one_byte_per_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        write_pgm(&path, 2, 1, 255, &[7, 255]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[7u8, 255]);
        assert_eq!(read_pgm(&path).unwrap().samples, vec![7, 255]);
    }

    #[test]
    fn accepts_comments_in_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n# test scene\n2 1\n255\n\x05\x06").unwrap();
        assert_eq!(read_pgm(&path).unwrap().samples, vec![5, 6]);
    }

    #[test]
    fn reports_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n2 2\n1023\n\x00\x01").unwrap();
        match read_pgm(&path).unwrap_err() {
            PgmError::Truncated {
                expected, actual, ..
            } => {
                assert_eq!(expected, 8);
                assert_eq!(actual, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }
}
