//! Exact flat morphology in valid mode.
//!
//! Conventions: dilation is `sup_{b in B} f(x - b)` and erosion is
//! `inf_{b in B} f(x + b)`, with `b` the offset of a set mask cell from the
//! origin. This pair is adjoint, so openings and closings built from it are
//! idempotent and (anti-)extensive for asymmetric elements too.

use crate::error::{Error, Result};
use crate::imaging::{valid_size_rect, Image};
use crate::scalar::Scalar;

/// Binary mask with an origin. Constructors always produce odd-sized boxes
/// with a centered origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    origin: (usize, usize),
}

impl StructuringElement {
    /// Builds an element from a row-major mask with a centered origin.
    pub fn from_mask(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::InvalidSe(format!(
                "mask dimensions must be odd, got {width}x{height}"
            )));
        }
        if mask.len() != width * height {
            return Err(Error::InvalidSe("mask length does not match dimensions".into()));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidSe("mask has no set cell".into()));
        }
        Ok(Self {
            width,
            height,
            mask,
            origin: ((height - 1) / 2, (width - 1) / 2),
        })
    }

    fn from_offsets(half_w: usize, half_h: usize, offsets: impl IntoIterator<Item = (isize, isize)>) -> Self {
        let (w, h) = (2 * half_w + 1, 2 * half_h + 1);
        let mut mask = vec![false; w * h];
        for (dr, dc) in offsets {
            let r = (dr + half_h as isize) as usize;
            let c = (dc + half_w as isize) as usize;
            mask[r * w + c] = true;
        }
        Self::from_mask(w, h, mask).expect("constructor offsets are in bounds")
    }

    /// `n`x`n` square. Even sizes sit in an `(n+1)`x`(n+1)` box with offsets
    /// `-n/2 ..= n/2 - 1`.
    pub fn square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSe("square size must be positive".into()));
        }
        let half = n / 2;
        let lo = -(half as isize);
        let offs = (lo..lo + n as isize).flat_map(|r| (lo..lo + n as isize).map(move |c| (r, c)));
        Ok(Self::from_offsets(half, half, offs))
    }

    /// L1 ball of radius `side / 2`.
    pub fn diamond(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidSe("diamond side must be positive".into()));
        }
        let r = (side / 2) as isize;
        let offs = (-r..=r).flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)));
        Ok(Self::from_offsets(
            r as usize,
            r as usize,
            offs.filter(|(dr, dc)| dr.abs() + dc.abs() <= r),
        ))
    }

    /// Pixels whose centers lie in the Euclidean disk of diameter `size`.
    pub fn disk(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidSe("disk size must be positive".into()));
        }
        let r = (size / 2) as isize;
        let radius = size as f64 / 2.0;
        let offs = (-r..=r).flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)));
        Ok(Self::from_offsets(
            r as usize,
            r as usize,
            offs.filter(|&(dr, dc)| ((dr * dr + dc * dc) as f64) <= radius * radius),
        ))
    }

    /// Digital segment of `length` pixels through the origin. Angles are in
    /// degrees counter-clockwise from the column axis (rows grow downward).
    pub fn line(length: usize, angle_degrees: u32) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidSe("line length must be positive".into()));
        }
        let (dr, dc) = match angle_degrees {
            0 => (0, 1),
            45 => (-1, 1),
            90 => (-1, 0),
            135 => (-1, -1),
            a => {
                return Err(Error::InvalidSe(format!(
                    "unsupported line angle {a} (use 0, 45, 90 or 135)"
                )))
            }
        };
        let half = length / 2;
        let lo = -(half as isize);
        let offs = (lo..lo + length as isize).map(|t| (t * dr, t * dc));
        let half_w = if dc == 0 { 0 } else { half };
        let half_h = if dr == 0 { 0 } else { half };
        Ok(Self::from_offsets(half_w, half_h, offs))
    }

    /// Point reflection through the origin.
    pub fn reflect(&self) -> Self {
        let mut mask = self.mask.clone();
        mask.reverse();
        Self {
            mask,
            ..self.clone()
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(drow, dcol)` offsets of the set cells relative to the origin.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let (or, oc) = (self.origin.0 as isize, self.origin.1 as isize);
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&(r, c)| self.contains(r, c))
            .map(|(r, c)| (r as isize - or, c as isize - oc))
            .collect()
    }

    /// Mask embedded at the center of a `k`x`k` box, row-major.
    pub fn embedded_mask(&self, k: usize) -> Result<Vec<bool>> {
        if k < self.width || k < self.height || !(k - self.width).is_multiple_of(2) || !(k - self.height).is_multiple_of(2) {
            return Err(Error::InvalidSe(format!(
                "cannot center {}x{} element in {k}x{k}",
                self.width, self.height
            )));
        }
        let (r0, c0) = ((k - self.height) / 2, (k - self.width) / 2);
        let mut out = vec![false; k * k];
        for r in 0..self.height {
            for c in 0..self.width {
                out[(r + r0) * k + c + c0] = self.contains(r, c);
            }
        }
        Ok(out)
    }
}

fn rank_filter<T: Scalar>(
    f: &Image<T>,
    se: &StructuringElement,
    sign: isize,
    pick: impl Fn(T, T) -> T,
    init: T,
) -> Result<Image<T>> {
    let (ow, oh) = valid_size_rect(f.width(), f.height(), se.width, se.height)?;
    let (or, oc) = (se.origin.0 as isize, se.origin.1 as isize);
    let offs: Vec<usize> = se
        .offsets()
        .into_iter()
        .map(|(dr, dc)| ((or + sign * dr) as usize) * f.width() + (oc + sign * dc) as usize)
        .collect();
    let src = f.data();
    Ok(Image::from_fn(ow, oh, |r, c| {
        let base = r * f.width() + c;
        offs.iter().fold(init, |acc, &o| pick(acc, src[base + o]))
    }))
}

/// Valid-mode flat dilation.
pub fn dilate<T: Scalar>(f: &Image<T>, se: &StructuringElement) -> Result<Image<T>> {
    rank_filter(f, se, -1, T::max, T::neg_infinity())
}

/// Valid-mode flat erosion.
pub fn erode<T: Scalar>(f: &Image<T>, se: &StructuringElement) -> Result<Image<T>> {
    rank_filter(f, se, 1, T::min, T::infinity())
}

pub fn open<T: Scalar>(f: &Image<T>, se: &StructuringElement) -> Result<Image<T>> {
    dilate(&erode(f, se)?, se)
}

pub fn close<T: Scalar>(f: &Image<T>, se: &StructuringElement) -> Result<Image<T>> {
    erode(&dilate(f, se)?, se)
}

/// `f - open(f)` on the opening's valid region.
pub fn white_top_hat<T: Scalar>(f: &Image<T>, se: &StructuringElement) -> Result<Image<T>> {
    let opened = open(f, se)?;
    let cropped = f.center_crop(opened.width(), opened.height())?;
    cropped.zip_map(&opened, |a, b| a - b)
}

/// `close(f) - f` on the closing's valid region.
pub fn black_top_hat<T: Scalar>(f: &Image<T>, se: &StructuringElement) -> Result<Image<T>> {
    let closed = close(f, se)?;
    let cropped = f.center_crop(closed.width(), closed.height())?;
    closed.zip_map(&cropped, |a, b| a - b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(se: &StructuringElement) -> String {
        (0..se.height())
            .map(|r| {
                (0..se.width())
                    .map(|c| if se.contains(r, c) { '#' } else { '.' })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn constructors() {
        assert_eq!(render(&StructuringElement::square(3).unwrap()), "###\n###\n###");
        assert_eq!(render(&StructuringElement::diamond(3).unwrap()), ".#.\n###\n.#.");
        assert_eq!(render(&StructuringElement::line(5, 0).unwrap()), "#####");
        assert_eq!(render(&StructuringElement::line(3, 45).unwrap()), "..#\n.#.\n#..");
        assert_eq!(render(&StructuringElement::line(3, 135).unwrap()), "#..\n.#.\n..#");
        assert_eq!(render(&StructuringElement::line(3, 90).unwrap()), "#\n#\n#");
        assert_eq!(render(&StructuringElement::square(2).unwrap()), "##.\n##.\n...");
        assert_eq!(
            render(&StructuringElement::disk(5).unwrap()),
            ".###.\n#####\n#####\n#####\n.###."
        );
        let line10 = StructuringElement::line(10, 0).unwrap();
        assert_eq!((line10.width(), line10.count()), (11, 10));
        assert_eq!(StructuringElement::line(15, 45).unwrap().count(), 15);
        assert!(StructuringElement::line(5, 30).is_err());
        assert!(StructuringElement::square(0).is_err());
        assert!(StructuringElement::disk(0).is_err());
    }

    #[test]
    fn impulse_responses() {
        let se = StructuringElement::square(3).unwrap();
        let mut f = Image::<f64>::filled(7, 7, 0.2);
        f.set(3, 3, 0.9);
        let d = dilate(&f, &se).unwrap();
        assert_eq!(d.dims(), (5, 5));
        for r in 0..5 {
            for c in 0..5 {
                let inside = (1..=3).contains(&r) && (1..=3).contains(&c);
                assert_eq!(d.get(r, c), if inside { 0.9 } else { 0.2 });
            }
        }
        let g = f.map(|v| 1.0 - v);
        let e = erode(&g, &se).unwrap();
        assert_eq!(e.get(2, 2), 1.0 - 0.9);
        assert_eq!(e.get(0, 0), 1.0 - 0.2);
    }

    #[test]
    fn opening_sieves_single_peak() {
        let se = StructuringElement::square(3).unwrap();
        let mut f = Image::<f64>::filled(9, 9, 0.3);
        f.set(4, 4, 0.8);
        let o = open(&f, &se).unwrap();
        assert!(o.data().iter().all(|&v| v == 0.3));
        let th = white_top_hat(&f, &se).unwrap();
        assert_eq!(th.dims(), (5, 5));
        assert!((th.get(2, 2) - 0.5).abs() < 1e-15);
        assert_eq!(th.data().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn constant_images_are_fixed_points() {
        let f = Image::<f64>::filled(12, 12, 0.4);
        for se in [
            StructuringElement::square(3).unwrap(),
            StructuringElement::line(4, 45).unwrap(),
        ] {
            assert!(dilate(&f, &se).unwrap().data().iter().all(|&v| v == 0.4));
            assert!(erode(&f, &se).unwrap().data().iter().all(|&v| v == 0.4));
            assert!(open(&f, &se).unwrap().data().iter().all(|&v| v == 0.4));
            assert!(close(&f, &se).unwrap().data().iter().all(|&v| v == 0.4));
            assert!(white_top_hat(&f, &se).unwrap().data().iter().all(|&v| v == 0.0));
            assert!(black_top_hat(&f, &se).unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn se_larger_than_image_errors() {
        let f = Image::<f64>::filled(4, 4, 0.4);
        assert!(dilate(&f, &StructuringElement::square(5).unwrap()).is_err());
        assert!(open(&f, &StructuringElement::square(3).unwrap()).is_err());
    }
}
