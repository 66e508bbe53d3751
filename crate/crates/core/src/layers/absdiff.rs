//! Short-circuit layer emitting `|a - b|` on the common central region.

use crate::error::Result;
use crate::imaging::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct AbsDiffCache {
    a_dims: (usize, usize),
    b_dims: (usize, usize),
    out_dims: (usize, usize),
    /// sign(a' - b') per output pixel, 0 on ties
    signs: Vec<i8>,
}

/// Center-crops both operands to their common size, then takes `|a' - b'|`.
pub fn absdiff_forward<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<(Image<T>, AbsDiffCache)> {
    let w = a.width().min(b.width());
    let h = a.height().min(b.height());
    let ac = a.center_crop(w, h)?;
    let bc = b.center_crop(w, h)?;
    let mut signs = Vec::with_capacity(w * h);
    let data = ac
        .data()
        .iter()
        .zip(bc.data())
        .map(|(&x, &y)| {
            let d = x - y;
            signs.push(if d > T::zero() {
                1
            } else if d < T::zero() {
                -1
            } else {
                0
            });
            d.abs()
        })
        .collect();
    Ok((
        Image::new(w, h, data)?,
        AbsDiffCache {
            a_dims: a.dims(),
            b_dims: b.dims(),
            out_dims: (w, h),
            signs,
        },
    ))
}

/// Gradients placed back into each operand's own geometry (zero outside the crop).
pub fn absdiff_backward<T: Scalar>(cache: &AbsDiffCache, grad_out: &Image<T>) -> Result<(Image<T>, Image<T>)> {
    if grad_out.dims() != cache.out_dims {
        return Err(crate::error::Error::ShapeMismatch(format!(
            "AbsDiff gradient {:?} vs output {:?}",
            grad_out.dims(),
            cache.out_dims
        )));
    }
    let (w, h) = cache.out_dims;
    let ga: Vec<T> = grad_out
        .data()
        .iter()
        .zip(&cache.signs)
        .map(|(&g, &s)| match s {
            1 => g,
            -1 => -g,
            _ => T::zero(),
        })
        .collect();
    let gb: Vec<T> = ga.iter().map(|&v| -v).collect();
    let ga = Image::new(w, h, ga)?.embed_center(cache.a_dims.0, cache.a_dims.1)?;
    let gb = Image::new(w, h, gb)?.embed_center(cache.b_dims.0, cache.b_dims.1)?;
    Ok((ga, gb))
}
