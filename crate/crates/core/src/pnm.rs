//! Netpbm gray (PGM, `P2`/`P5`) and color (PPM, `P3`/`P6`) codec.
//!
//! Only the pieces needed to move images in and out of the solvers: any
//! maxval up to 65535 on input, 8-bit binary on output.

use std::fs;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum PnmError {
    #[error("unsupported magic number {0:?} (expected P2, P3, P5 or P6)")]
    UnsupportedMagic(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("sample {value} exceeds maxval {maxval}")]
    SampleOutOfRange { value: u32, maxval: u32 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    Binary,
}

/// A decoded netpbm raster. Samples are interleaved per pixel, rows top to
/// bottom, pixels left to right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u32,
    pub samples: Vec<u16>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let c = self.data[self.pos];
            if c == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len()
            && !self.data[self.pos].is_ascii_whitespace()
            && self.data[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<u32, PnmError> {
        let tok = self
            .token()
            .ok_or_else(|| PnmError::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                PnmError::MalformedHeader(format!(
                    "{what} is not a number: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

pub fn decode(data: &[u8]) -> Result<Raster, PnmError> {
    if data.len() < 2 {
        return Err(PnmError::MalformedHeader("file too short".into()));
    }
    let magic = &data[..2];
    let (channels, encoding) = match magic {
        b"P2" => (1, Encoding::Ascii),
        b"P5" => (1, Encoding::Binary),
        b"P3" => (3, Encoding::Ascii),
        b"P6" => (3, Encoding::Binary),
        _ => {
            return Err(PnmError::UnsupportedMagic(
                String::from_utf8_lossy(magic).into_owned(),
            ))
        }
    };
    let mut cur = Cursor { data, pos: 2 };
    if cur.pos < data.len() && !data[cur.pos].is_ascii_whitespace() && data[cur.pos] != b'#' {
        return Err(PnmError::MalformedHeader(
            "magic not followed by whitespace".into(),
        ));
    }
    let width = cur.header_number("width")? as usize;
    let height = cur.header_number("height")? as usize;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PnmError::MalformedHeader(format!(
            "maxval {maxval} outside 1..=65535"
        )));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| PnmError::MalformedHeader("dimensions overflow".into()))?;

    let mut samples = Vec::with_capacity(expected);
    match encoding {
        Encoding::Ascii => {
            while samples.len() < expected {
                let Some(tok) = cur.token() else { break };
                let value = std::str::from_utf8(tok)
                    .ok()
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| {
                        PnmError::MalformedHeader(format!(
                            "bad sample {:?}",
                            String::from_utf8_lossy(tok)
                        ))
                    })?;
                if value > maxval {
                    return Err(PnmError::SampleOutOfRange { value, maxval });
                }
                samples.push(value as u16);
            }
        }
        Encoding::Binary => {
            // Exactly one whitespace byte separates maxval from the raster.
            match data.get(cur.pos) {
                Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
                _ => {
                    return Err(PnmError::MalformedHeader(
                        "maxval not followed by whitespace".into(),
                    ))
                }
            }
            let payload = &data[cur.pos..];
            if maxval < 256 {
                samples.extend(payload.iter().take(expected).map(|&b| u16::from(b)));
            } else {
                samples.extend(
                    payload
                        .chunks_exact(2)
                        .take(expected)
                        .map(|c| u16::from_be_bytes([c[0], c[1]])),
                );
            }
            if let Some(&value) = samples.iter().find(|&&s| u32::from(s) > maxval) {
                return Err(PnmError::SampleOutOfRange {
                    value: value.into(),
                    maxval,
                });
            }
        }
    }
    if samples.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: samples.len(),
        });
    }
    Ok(Raster {
        width,
        height,
        channels,
        maxval,
        samples,
    })
}

pub fn read(path: impl AsRef<Path>) -> Result<Raster, PnmError> {
    decode(&fs::read(path)?)
}

/// Binary 8-bit encoding (`P5` for one channel, `P6` for three).
pub fn encode_u8(width: usize, height: usize, channels: usize, samples: &[u8]) -> Vec<u8> {
    assert!(
        channels == 1 || channels == 3,
        "netpbm supports 1 or 3 channels"
    );
    assert_eq!(samples.len(), width * height * channels);
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}
