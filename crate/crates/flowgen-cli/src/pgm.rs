//! PGM (P2/P5, maxval 255) mask loading and uniform sampling from dark
//! regions.

use std::fmt;
use std::path::Path;

use flowgen_core::{ParticleSet, SeededPrng};

/// Parse errors carry the byte offset where the input stopped making sense.
#[derive(Clone, Debug, PartialEq)]
pub enum PgmError {
    Io(String),
    BadMagic { found: String },
    BadHeader { offset: usize, detail: &'static str },
    UnsupportedMaxval { maxval: u32 },
    Truncated { offset: usize, needed: usize },
    BadPixel { offset: usize, value: i64 },
    /// No pixel below the threshold: nothing to sample.
    EmptySupport,
}

impl fmt::Display for PgmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "io: {e}"),
            Self::BadMagic { found } => write!(f, "not a PGM file (magic `{found}`)"),
            Self::BadHeader { offset, detail } => {
                write!(f, "malformed header at byte {offset}: {detail}")
            }
            Self::UnsupportedMaxval { maxval } => {
                write!(f, "unsupported maxval {maxval} (must be 255)")
            }
            Self::Truncated { offset, needed } => {
                write!(f, "truncated pixel data at byte {offset} ({needed} bytes missing)")
            }
            Self::BadPixel { offset, value } => {
                write!(f, "pixel value {value} out of range at byte {offset}")
            }
            Self::EmptySupport => write!(f, "mask has no pixel below the threshold"),
        }
    }
}

impl std::error::Error for PgmError {}

/// An 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayscaleMask {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayscaleMask {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == width * height && width > 0 && height > 0).then_some(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel at image row `r` (0 = top) and column `q`.
    pub fn pixel(&self, r: usize, q: usize) -> u8 {
        self.pixels[r * self.width + q]
    }
}

/// Threshold below which a pixel belongs to the sampled region.
pub const MASK_THRESHOLD: u8 = 128;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_uint(&mut self) -> Result<(u32, usize), PgmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        let mut value: u64 = 0;
        let mut digits = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value * 10 + u64::from(self.bytes[self.pos] - b'0');
            if value > u64::from(u32::MAX) {
                return Err(PgmError::BadHeader {
                    offset: start,
                    detail: "number too large",
                });
            }
            self.pos += 1;
            digits += 1;
        }
        if digits == 0 {
            return Err(PgmError::BadHeader {
                offset: self.pos,
                detail: "expected an unsigned integer",
            });
        }
        Ok((value as u32, start))
    }
}

/// Parses a P2 (ASCII) or P5 (binary) PGM with maxval 255, recovering pixels
/// bit-exactly.
pub fn pgm_parse(bytes: &[u8]) -> Result<GrayscaleMask, PgmError> {
    if bytes.len() < 2 {
        return Err(PgmError::BadMagic {
            found: String::from_utf8_lossy(bytes).into_owned(),
        });
    }
    let magic = &bytes[..2];
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(PgmError::BadMagic {
                found: String::from_utf8_lossy(other).into_owned(),
            })
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let (width, _) = cur.read_uint()?;
    let (height, _) = cur.read_uint()?;
    let (maxval, _) = cur.read_uint()?;
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval { maxval });
    }
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader {
            offset: cur.pos,
            detail: "zero dimension",
        });
    }
    let count = width as usize * height as usize;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(PgmError::BadHeader {
                offset: cur.pos,
                detail: "missing raster separator",
            });
        }
        cur.pos += 1;
        let available = bytes.len() - cur.pos;
        if available < count {
            return Err(PgmError::Truncated {
                offset: bytes.len(),
                needed: count - available,
            });
        }
        pixels.extend_from_slice(&bytes[cur.pos..cur.pos + count]);
    } else {
        for _ in 0..count {
            cur.skip_whitespace_and_comments();
            if cur.pos >= bytes.len() {
                return Err(PgmError::Truncated {
                    offset: cur.pos,
                    needed: count - pixels.len(),
                });
            }
            let (value, start) = cur.read_uint()?;
            if value > 255 {
                return Err(PgmError::BadPixel {
                    offset: start,
                    value: i64::from(value),
                });
            }
            pixels.push(value as u8);
        }
    }
    Ok(GrayscaleMask {
        width: width as usize,
        height: height as usize,
        pixels,
    })
}

pub fn pgm_load(path: &Path) -> Result<GrayscaleMask, PgmError> {
    let bytes = std::fs::read(path).map_err(|e| PgmError::Io(format!("{}: {e}", path.display())))?;
    pgm_parse(&bytes)
}

/// Serializes a mask as ASCII P2 (used by the mask-generation example and
/// tests).
pub fn pgm_write_p2(mask: &GrayscaleMask) -> String {
    let mut out = format!("P2\n{} {}\n255\n", mask.width, mask.height);
    for r in 0..mask.height {
        let row: Vec<String> = (0..mask.width).map(|q| mask.pixel(r, q).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Draws `n` points uniformly over the pixels darker than the threshold.
/// Each draw picks a qualifying cell uniformly, jitters uniformly inside it,
/// and maps into `[-1, 1]^2` preserving aspect (image row 0 maps to the top,
/// y = +1 side).
pub fn shape_sample(
    mask: &GrayscaleMask,
    n: usize,
    rng: &mut SeededPrng,
) -> Result<ParticleSet, PgmError> {
    let mut cells = Vec::new();
    for r in 0..mask.height {
        for q in 0..mask.width {
            if mask.pixel(r, q) < MASK_THRESHOLD {
                cells.push((r, q));
            }
        }
    }
    if cells.is_empty() {
        return Err(PgmError::EmptySupport);
    }
    let scale = 2.0 / mask.width.max(mask.height) as f64;
    let half_w = mask.width as f64 / 2.0;
    let half_h = mask.height as f64 / 2.0;
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let (r, q) = cells[rng.next_index(cells.len())];
        let u = rng.next_f64();
        let v = rng.next_f64();
        let x = (q as f64 + u - half_w) * scale;
        let y = (half_h - (r as f64 + v)) * scale;
        data.push(x);
        data.push(y);
    }
    Ok(ParticleSet::from_raw(2, data))
}

/// Maps a sample back to its pixel, for support checks in tests.
pub fn point_to_pixel(mask: &GrayscaleMask, x: f64, y: f64) -> Option<(usize, usize)> {
    let scale = 2.0 / mask.width.max(mask.height) as f64;
    let half_w = mask.width as f64 / 2.0;
    let half_h = mask.height as f64 / 2.0;
    let q = (x / scale + half_w).floor();
    let r = (half_h - y / scale).ceil() - 1.0;
    if q < 0.0 || r < 0.0 {
        return None;
    }
    let (r, q) = (r as usize, q as usize);
    (r < mask.height && q < mask.width).then_some((r, q))
}
