//! Pixelwise mean of several maps.

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct AverageCache {
    count: usize,
    dims: (usize, usize),
}

pub fn average_forward<T: Scalar>(maps: &[Image<T>]) -> Result<(Image<T>, AverageCache)> {
    let Some(first) = maps.first() else {
        return Err(Error::ShapeMismatch("average of zero maps".into()));
    };
    let mut acc = first.clone();
    for m in &maps[1..] {
        acc = acc.zip_map(m, |a, b| a + b)?;
    }
    let n = T::of_usize(maps.len());
    Ok((
        acc.map(|v| v / n),
        AverageCache {
            count: maps.len(),
            dims: first.dims(),
        },
    ))
}

pub fn average_backward<T: Scalar>(cache: &AverageCache, grad_out: &Image<T>) -> Result<Vec<Image<T>>> {
    if grad_out.dims() != cache.dims {
        return Err(Error::ShapeMismatch("average gradient shape".into()));
    }
    let n = T::of_usize(cache.count);
    let share = grad_out.map(|g| g / n);
    Ok(vec![share; cache.count])
}
