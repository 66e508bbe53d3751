//! Counter-harmonic mean filtering.
//!
//! `chm(f; w, P)(x) = sum_k w_k f(x+k)^(P+1) / sum_k w_k f(x+k)^P`, evaluated
//! in valid mode as a correlation. Large positive orders approach a
//! dilation, large negative orders an erosion; `P = 0` is a normalized
//! linear filter.

use crate::error::{Error, Result};
use crate::imaging::{valid_size_rect, Image};
use crate::morphology::{dilate, erode, StructuringElement};
use crate::scalar::Scalar;

/// Lower bound applied to every CHM weight; keeps denominators positive.
pub const WEIGHT_FLOOR: f64 = 1e-6;
/// Largest admissible `|P|`.
pub const MAX_ORDER: f64 = 20.0;

/// Positive weighting kernel with odd dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    width: usize,
    height: usize,
    weights: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    /// Validates dimensions and that every weight is finite and at least
    /// [`WEIGHT_FLOOR`].
    pub fn new(width: usize, height: usize, weights: Vec<T>) -> Result<Self> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::EvenKernel(width, height));
        }
        if weights.len() != width * height {
            return Err(Error::InvalidKernel(format!(
                "{} weights for a {width}x{height} kernel",
                weights.len()
            )));
        }
        let floor = T::c(WEIGHT_FLOOR);
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < floor) {
            return Err(Error::InvalidKernel(format!("weight {bad} below floor {floor}")));
        }
        Ok(Self {
            width,
            height,
            weights,
        })
    }

    /// Like [`Kernel::new`] but raises weights below the floor instead of failing.
    pub fn floored(width: usize, height: usize, weights: Vec<T>) -> Result<Self> {
        let floor = T::c(WEIGHT_FLOOR);
        Self::new(width, height, weights.into_iter().map(|w| w.max(floor)).collect())
    }

    pub fn flat(k: usize) -> Result<Self> {
        Self::new(k, k, vec![T::one(); k * k])
    }

    /// Weight 1 on the element's set cells, the floor elsewhere.
    pub fn from_se(se: &StructuringElement) -> Self {
        let floor = T::c(WEIGHT_FLOOR);
        let weights = se
            .mask()
            .iter()
            .map(|&m| if m { T::one() } else { floor })
            .collect();
        Self::new(se.width(), se.height(), weights).expect("element masks are odd-sized")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Callers must keep weights at or above [`WEIGHT_FLOOR`].
    pub(crate) fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn into_weights(self) -> Vec<T> {
        self.weights
    }
}

pub(crate) fn check_order<T: Scalar>(p: T) -> Result<()> {
    if !p.is_finite() || p.abs() > T::c(MAX_ORDER) {
        return Err(Error::InvalidKernel(format!(
            "order P = {p} outside [-{MAX_ORDER}, {MAX_ORDER}]"
        )));
    }
    Ok(())
}

/// Forward intermediates of one CHM evaluation.
#[derive(Debug, Clone)]
pub(crate) struct ChmParts<T> {
    /// `f^P`
    pub pow_p: Vec<T>,
    /// `ln f`
    pub log_f: Vec<T>,
    /// `(f^P * w)` per output pixel
    pub den: Vec<T>,
    /// `(f^(P+1) * w)` per output pixel
    pub num: Vec<T>,
    pub out: Image<T>,
}

pub(crate) fn chm_parts<T: Scalar>(f: &Image<T>, w: &Kernel<T>, p: T) -> Result<ChmParts<T>> {
    check_order(p)?;
    let (ow, oh) = valid_size_rect(f.width(), f.height(), w.width, w.height)?;
    if let Some(bad) = f.data().iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
        return Err(Error::ShapeMismatch(format!(
            "CHM input must be strictly positive, found {bad}"
        )));
    }
    let log_f: Vec<T> = f.data().iter().map(|v| v.ln()).collect();
    let pow_p: Vec<T> = log_f.iter().map(|&l| (p * l).exp()).collect();
    let src = f.data();
    let iw = f.width();
    let mut den = vec![T::zero(); ow * oh];
    let mut num = vec![T::zero(); ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            let (mut d, mut n) = (T::zero(), T::zero());
            for kr in 0..w.height {
                let row = (r + kr) * iw + c;
                let wrow = &w.weights[kr * w.width..(kr + 1) * w.width];
                for (kc, &wk) in wrow.iter().enumerate() {
                    let a = wk * pow_p[row + kc];
                    d = d + a;
                    n = n + a * src[row + kc];
                }
            }
            den[r * ow + c] = d;
            num[r * ow + c] = n;
        }
    }
    let data = num.iter().zip(&den).map(|(&n, &d)| n / d).collect();
    Ok(ChmParts {
        pow_p,
        log_f,
        den,
        num,
        out: Image::new(ow, oh, data)?,
    })
}

/// Valid-mode counter-harmonic mean of order `p`.
pub fn chm_filter<T: Scalar>(f: &Image<T>, w: &Kernel<T>, p: T) -> Result<Image<T>> {
    Ok(chm_parts(f, w, p)?.out)
}

/// Sup-norm distance between the order-`p` CHM with flat weights on `se`
/// and the exact dilation by `se`.
///
/// The correlation window of the CHM is the reflected element, so the
/// kernel is built from `se.reflect()`.
pub fn pseudo_dilation_deviation<T: Scalar>(f: &Image<T>, se: &StructuringElement, p: T) -> Result<T> {
    let approx = chm_filter(f, &Kernel::from_se(&se.reflect()), p)?;
    sup_distance(&approx, &dilate(f, se)?)
}

/// Erosion counterpart of [`pseudo_dilation_deviation`]; pass a negative `p`.
pub fn pseudo_erosion_deviation<T: Scalar>(f: &Image<T>, se: &StructuringElement, p: T) -> Result<T> {
    let approx = chm_filter(f, &Kernel::from_se(se), p)?;
    sup_distance(&approx, &erode(f, se)?)
}

/// `chm(chm(f, w, -p), w, +p)` for `p > 0`.
pub fn pseudo_open<T: Scalar>(f: &Image<T>, w: &Kernel<T>, p: T) -> Result<Image<T>> {
    let p = p.abs();
    chm_filter(&chm_filter(f, w, -p)?, w, p)
}

/// `chm(chm(f, w, +p), w, -p)` for `p > 0`.
pub fn pseudo_close<T: Scalar>(f: &Image<T>, w: &Kernel<T>, p: T) -> Result<Image<T>> {
    let p = p.abs();
    chm_filter(&chm_filter(f, w, p)?, w, -p)
}

pub fn sup_distance<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    a.expect_same_shape(b)?;
    Ok(a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .fold(T::zero(), T::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ninths() -> Image<f64> {
        Image::from_fn(3, 3, |r, c| (r * 3 + c + 1) as f64 / 10.0)
    }

    #[test]
    fn constant_is_fixed_for_any_order() {
        let f = Image::<f64>::filled(6, 6, 0.37);
        let w = Kernel::floored(3, 3, vec![0.3, 1.0, 2.0, 0.0, 0.5, 1.0, 4.0, 0.1, 0.2]).unwrap();
        for p in [-20.0, -3.0, 0.0, 1.5, 20.0] {
            let h = chm_filter(&f, &w, p).unwrap();
            assert!(h.data().iter().all(|&v| (v - 0.37).abs() < 1e-14), "P={p}");
        }
    }

    #[test]
    fn order_zero_is_mean_and_order_one_is_lehmer() {
        let w = Kernel::flat(3).unwrap();
        let h0 = chm_filter(&ninths(), &w, 0.0).unwrap();
        assert!((h0.get(0, 0) - 0.5).abs() < 1e-15);
        let h1 = chm_filter(&ninths(), &w, 1.0).unwrap();
        assert!((h1.get(0, 0) - 2.85 / 4.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = Kernel::<f64>::flat(3).unwrap();
        assert!(chm_filter(&ninths(), &w, 20.5).is_err());
        assert!(chm_filter(&Image::filled(3, 3, 0.0), &w, 1.0).is_err());
        assert!(chm_filter(&Image::filled(2, 2, 0.5), &w, 1.0).is_err());
        assert!(Kernel::<f64>::new(3, 3, vec![0.0; 9]).is_err());
        assert!(Kernel::<f64>::new(2, 2, vec![1.0; 4]).is_err());
        assert_eq!(Kernel::<f64>::floored(1, 1, vec![-1.0]).unwrap().weights(), &[WEIGHT_FLOOR]);
    }

    #[test]
    fn constant_image_has_zero_deviation() {
        let f = Image::<f64>::filled(8, 8, 0.6);
        let se = StructuringElement::square(3).unwrap();
        assert!(pseudo_dilation_deviation(&f, &se, 10.0).unwrap() < 1e-14);
        let w = Kernel::flat(3).unwrap();
        assert!(pseudo_open(&f, &w, 7.0).unwrap().data().iter().all(|&v| (v - 0.6).abs() < 1e-14));
        assert!(pseudo_close(&f, &w, 7.0).unwrap().data().iter().all(|&v| (v - 0.6).abs() < 1e-14));
    }
}
