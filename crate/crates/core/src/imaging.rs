//! Grayscale rasters, 8-bit PGM input/output and valid-mode geometry.
//!
//! Images handed to the filtering code are *normalized*: every sample is
//! mapped into `[1/512, 511/512]` so that powers `f^P` and `log f` are always
//! defined. Raw images carry the integer levels `0..=255` read from disk.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest normalized intensity (raw level 0).
pub const MIN_LEVEL: f64 = 1.0 / 512.0;
/// Largest normalized intensity (raw level 255).
pub const MAX_LEVEL: f64 = 511.0 / 512.0;

/// Row-major 2D raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::BadDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise combination of two equally sized images.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn expect_same_shape(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Copies out the `w`x`h` window whose top-left corner is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || row + h > self.height || col + w > self.width {
            return Err(Error::ShapeMismatch(format!(
                "window {w}x{h} at ({row},{col}) outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for r in row..row + h {
            data.extend_from_slice(&self.data[r * self.width + col..r * self.width + col + w]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Central `target_w`x`target_h` window; margins must be even on both axes.
    pub fn center_crop(&self, target_w: usize, target_h: usize) -> Result<Self> {
        let (row, col) = crop_offset(self.dims(), (target_w, target_h))?;
        if (target_w, target_h) == self.dims() {
            return Ok(self.clone());
        }
        self.window(row, col, target_w, target_h)
    }

    /// Inverse placement of [`Image::center_crop`]: embeds `self` at the
    /// center of a zero image of the given size.
    pub fn embed_center(&self, width: usize, height: usize) -> Result<Self> {
        let (row, col) = crop_offset((width, height), self.dims())?;
        if (width, height) == self.dims() {
            return Ok(self.clone());
        }
        let mut out = Self::zeros(width, height);
        for r in 0..self.height {
            let dst = (row + r) * width + col;
            out.data[dst..dst + self.width].copy_from_slice(self.row(r));
        }
        Ok(out)
    }
}

/// Top-left offset of a centered `target` window inside `source`.
pub fn crop_offset(source: (usize, usize), target: (usize, usize)) -> Result<(usize, usize)> {
    let ((width, height), (tw, th)) = (source, target);
    if tw > width || th > height {
        return Err(Error::CropTooLarge {
            tw,
            th,
            width,
            height,
        });
    }
    if (width - tw) % 2 != 0 || (height - th) % 2 != 0 {
        return Err(Error::OddMargin {
            tw,
            th,
            width,
            height,
        });
    }
    Ok(((height - th) / 2, (width - tw) / 2))
}

/// Output size of a valid-mode filter with an odd `k`x`k` window.
pub fn valid_size(in_w: usize, in_h: usize, k: usize) -> Result<(usize, usize)> {
    valid_size_rect(in_w, in_h, k, k)
}

pub fn valid_size_rect(in_w: usize, in_h: usize, kw: usize, kh: usize) -> Result<(usize, usize)> {
    if kw.is_multiple_of(2) || kh.is_multiple_of(2) {
        return Err(Error::EvenKernel(kw, kh));
    }
    if kw > in_w || kh > in_h {
        return Err(Error::KernelTooLarge {
            kw,
            kh,
            width: in_w,
            height: in_h,
        });
    }
    Ok((in_w - kw + 1, in_h - kh + 1))
}

/// Maps raw levels `v` to `(v + 0.5) / 256`, strictly inside `(0, 1)`.
pub fn normalize<T: Scalar>(img: &Image<T>) -> Image<T> {
    let half = T::c(0.5);
    let scale = T::c(256.0);
    img.map(|v| (v + half) / scale)
}

/// Inverse of [`normalize`], clamped to `[0, 255]`.
pub fn denormalize<T: Scalar>(img: &Image<T>) -> Image<T> {
    let half = T::c(0.5);
    let scale = T::c(256.0);
    let hi = T::c(255.0);
    img.map(|v| (v * scale - half).max(T::zero()).min(hi))
}

/// Reads a binary (`P5`) or ASCII (`P2`) PGM with maxval 255.
pub fn load_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

/// Writes a binary PGM; samples are rounded to the nearest level and clamped.
pub fn save_pgm<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(img);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm<T: Scalar>(img: &Image<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| {
        let v = v.to_f64_lossy();
        if v.is_nan() {
            0
        } else {
            v.round().clamp(0.0, 255.0) as u8
        }
    }));
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "bad {what}: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

pub fn parse_pgm<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    let mut rd = HeaderReader { bytes, pos: 0 };
    let ascii = match rd.token() {
        Some(b"P2") => true,
        Some(b"P5") => false,
        other => {
            return Err(Error::MalformedHeader(format!(
                "bad magic {:?}",
                other.map(String::from_utf8_lossy)
            )))
        }
    };
    let width = rd.number("width")? as usize;
    let height = rd.number("height")? as usize;
    let maxval = rd.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::MaxvalUnsupported(maxval));
    }
    let expected = width * height;
    let mut data = Vec::with_capacity(expected);
    if ascii {
        while data.len() < expected {
            let Some(tok) = rd.token() else { break };
            let v: u32 = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    Error::MalformedHeader(format!(
                        "bad sample {:?}",
                        String::from_utf8_lossy(tok)
                    ))
                })?;
            if v > maxval {
                return Err(Error::MalformedHeader(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
            data.push(T::c(v as f64));
        }
    } else {
        // exactly one whitespace byte separates maxval from the raster
        let start = rd.pos + 1;
        let payload = bytes.get(start..).unwrap_or(&[]);
        data.extend(payload.iter().take(expected).map(|&b| T::c(b as f64)));
    }
    if data.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            found: data.len(),
        });
    }
    Image::new(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, v: &[f64]) -> Image<f64> {
        Image::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn ascii_and_binary_pgm_agree() {
        let a: Image<f64> = parse_pgm(b"P2 2 2 255 0 255 128 64").unwrap();
        assert_eq!(a, img(2, 2, &[0.0, 255.0, 128.0, 64.0]));
        let mut p5 = b"P5\n# comment\n2 2\n255\n".to_vec();
        p5.extend([0u8, 255, 128, 64]);
        let b: Image<f64> = parse_pgm(&p5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pgm_errors_are_distinct() {
        assert!(matches!(
            parse_pgm::<f64>(b"P2 2 2 65535 0 1 2 3"),
            Err(Error::MaxvalUnsupported(65535))
        ));
        assert!(matches!(
            parse_pgm::<f64>(b"P3 2 2 255 0 1 2 3"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_pgm::<f64>(b"P2 2 2 255 0 1 2"),
            Err(Error::TruncatedData {
                expected: 4,
                found: 3
            })
        ));
        assert!(matches!(
            parse_pgm::<f64>(b"P5 2 2 255\n\x01\x02"),
            Err(Error::TruncatedData { .. })
        ));
    }

    #[test]
    fn save_rounds_to_nearest_level() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        save_pgm(&img(2, 1, &[127.6, 3.2]), &path).unwrap();
        let back: Image<f64> = load_pgm(&path).unwrap();
        assert_eq!(back.data(), &[128.0, 3.0]);
        assert!(save_pgm(&img(1, 1, &[0.0]), dir.path().join("missing/x.pgm")).is_err());
    }

    #[test]
    fn normalization_bounds() {
        let raw = img(3, 1, &[0.0, 255.0, 127.0]);
        let n = normalize(&raw);
        assert_eq!(n.data(), &[0.001953125, 0.998046875, 0.498046875]);
        assert_eq!(denormalize(&img(2, 1, &[MIN_LEVEL, 1.5])).data(), &[0.0, 255.0]);
    }

    #[test]
    fn normalize_round_trips_every_level() {
        let raw = Image::<f64>::from_fn(256, 1, |_, c| c as f64);
        let n = normalize(&raw);
        assert!(n.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(denormalize(&n), raw);
    }

    #[test]
    fn crop_geometry() {
        let f = Image::<f64>::from_fn(5, 5, |r, c| (r * 5 + c) as f64);
        let c = f.center_crop(3, 3).unwrap();
        assert_eq!(c.data(), &[6.0, 7.0, 8.0, 11.0, 12.0, 13.0, 16.0, 17.0, 18.0]);
        assert_eq!(f.center_crop(5, 5).unwrap(), f);
        assert!(matches!(
            Image::<f64>::zeros(4, 4).center_crop(3, 3),
            Err(Error::OddMargin { .. })
        ));
        assert!(matches!(
            f.center_crop(7, 5),
            Err(Error::CropTooLarge { .. })
        ));
        let e = c.embed_center(5, 5).unwrap();
        assert_eq!(e.get(1, 1), 6.0);
        assert_eq!(e.get(0, 0), 0.0);
    }

    #[test]
    fn valid_sizes() {
        assert_eq!(valid_size(512, 512, 11).unwrap(), (502, 502));
        assert_eq!(valid_size(7, 7, 7).unwrap(), (1, 1));
        assert!(valid_size(10, 10, 11).is_err());
    }
}
