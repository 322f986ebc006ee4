//! RGB8 frames and binary PPM (P6) interchange.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("sample buffer holds {found} bytes, expected {expected}")]
    BufferLength { expected: usize, found: usize },
    #[error("ppm parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major interleaved 8-bit RGB image.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        let expected = 3 * width * height;
        if data.len() != expected {
            return Err(ImageError::BufferLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(3 * width * height)
            .collect();
        Self::new(width, height, data).expect("positive dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Mean Rec. 601 luma over all pixels, in `[0, 255]`.
    pub fn mean_luminance(&self) -> f64 {
        let total: f64 = self.pixels().map(luminance).sum();
        total / self.pixel_count() as f64
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut cursor = PpmCursor { bytes, pos: 0 };
        let magic = cursor.token()?;
        if magic.1 != "P6" {
            return Err(ImageError::Parse {
                offset: magic.0,
                message: format!("expected magic P6, found {:?}", magic.1),
            });
        }
        let (_, width) = cursor.number("width")?;
        let (_, height) = cursor.number("height")?;
        let (maxval_at, maxval) = cursor.number("maxval")?;
        if maxval != 255 {
            return Err(ImageError::Parse {
                offset: maxval_at,
                message: format!("only maxval 255 is supported, found {maxval}"),
            });
        }
        // Exactly one whitespace byte separates the header from the samples.
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => {
                return Err(ImageError::Parse {
                    offset: cursor.pos,
                    message: "missing whitespace after maxval".into(),
                })
            }
        }
        if width == 0 || height == 0 {
            return Err(ImageError::Parse {
                offset: magic.0,
                message: format!("dimensions must be positive, got {width}x{height}"),
            });
        }
        let expected = 3 * width * height;
        let samples = &bytes[cursor.pos..];
        if samples.len() < expected {
            return Err(ImageError::Parse {
                offset: bytes.len(),
                message: format!(
                    "pixel data truncated: expected {expected} bytes, found {}",
                    samples.len()
                ),
            });
        }
        Image::new(width, height, samples[..expected].to_vec())
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let io = |source| ImageError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(&self.encode_ppm()).map_err(io)
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode_ppm(&bytes)
    }
}

pub fn luminance(rgb: [u8; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

struct PpmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PpmCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<(usize, String), ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::Parse {
                offset: start,
                message: "unexpected end of header".into(),
            });
        }
        Ok((
            start,
            String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned(),
        ))
    }

    fn number(&mut self, field: &str) -> Result<(usize, usize), ImageError> {
        let (offset, tok) = self.token()?;
        let value = tok.parse().map_err(|_| ImageError::Parse {
            offset,
            message: format!("{field} is not a decimal number: {tok:?}"),
        })?;
        Ok((offset, value))
    }
}
