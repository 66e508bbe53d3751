//! Differentiable layers: PConv, linear Conv (+relu), AbsDiff and Average.
//!
//! Every layer maps a list of equally sized input maps to a list of output
//! maps and can back-propagate a gradient for each output map into the
//! inputs and into its own parameters.

mod absdiff;
mod average;
mod conv;
pub mod gradcheck;
mod pconv;

pub use absdiff::{absdiff_backward, absdiff_forward, AbsDiffCache};
pub use average::{average_backward, average_forward, AverageCache};
pub use conv::{conv_backward, conv_forward, Activation, Connection, ConvCache, ConvGrads, ConvParams};
pub use pconv::{pconv_backward, pconv_forward, PConvCache, PConvGrads, PConvParams};

use crate::chm::{MAX_ORDER, WEIGHT_FLOOR};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::scalar::Scalar;

/// Which optimizer group a parameter tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// PConv weighting kernel `w`, kept above the weight floor.
    PConvWeights,
    /// PConv order `P`, kept inside `[-20, 20]`.
    PConvOrder,
    ConvWeights,
    ConvBias,
}

impl ParamKind {
    /// True for the CHM order; everything else is a "weight" for alternation.
    pub fn is_order(self) -> bool {
        matches!(self, ParamKind::PConvOrder)
    }

    /// Projects a value back onto the feasible set of its group.
    pub fn project<T: Scalar>(self, v: T) -> T {
        match self {
            ParamKind::PConvWeights => v.max(T::c(WEIGHT_FLOOR)),
            ParamKind::PConvOrder => v.max(T::c(-MAX_ORDER)).min(T::c(MAX_ORDER)),
            ParamKind::ConvWeights | ParamKind::ConvBias => v,
        }
    }
}

/// A bank of PConv filters. With one input map every filter reads it; with
/// as many input maps as filters, filter `j` reads map `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PConvLayer<T> {
    pub filters: Vec<PConvParams<T>>,
}

/// Layer with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    PConv(PConvLayer<T>),
    Conv(ConvParams<T>),
    /// Input maps are split in two halves `a` and `b`; emits `|a_j - b_j|`.
    AbsDiff,
    /// Pixelwise mean of all input maps.
    Average,
}

/// Forward intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    /// `fan_out` is set when a single input map fed every filter.
    PConv {
        caches: Vec<PConvCache<T>>,
        fan_out: bool,
    },
    Conv(ConvCache<T>),
    AbsDiff(Vec<AbsDiffCache>),
    Average(AverageCache),
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&self, maps: &[Image<T>]) -> Result<(Vec<Image<T>>, LayerCache<T>)> {
        match self {
            Layer::PConv(layer) => {
                let n = layer.filters.len();
                if maps.len() != 1 && maps.len() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "PConv layer with {n} filters fed {} maps",
                        maps.len()
                    )));
                }
                let mut outs = Vec::with_capacity(n);
                let mut caches = Vec::with_capacity(n);
                for (j, params) in layer.filters.iter().enumerate() {
                    let src = if maps.len() == 1 { &maps[0] } else { &maps[j] };
                    let (h, cache) = pconv_forward(src, params)?;
                    outs.push(h);
                    caches.push(cache);
                }
                Ok((
                    outs,
                    LayerCache::PConv {
                        caches,
                        fan_out: maps.len() == 1,
                    },
                ))
            }
            Layer::Conv(params) => {
                let (outs, cache) = conv_forward(maps, params)?;
                Ok((outs, LayerCache::Conv(cache)))
            }
            Layer::AbsDiff => {
                if maps.is_empty() || !maps.len().is_multiple_of(2) {
                    return Err(Error::ShapeMismatch(format!(
                        "AbsDiff needs two equal groups of maps, got {}",
                        maps.len()
                    )));
                }
                let half = maps.len() / 2;
                let mut outs = Vec::with_capacity(half);
                let mut caches = Vec::with_capacity(half);
                for j in 0..half {
                    let (o, c) = absdiff_forward(&maps[j], &maps[half + j])?;
                    outs.push(o);
                    caches.push(c);
                }
                Ok((outs, LayerCache::AbsDiff(caches)))
            }
            Layer::Average => {
                let (o, c) = average_forward(maps)?;
                Ok((vec![o], LayerCache::Average(c)))
            }
        }
    }

    /// Returns the gradient for each input map and for each parameter tensor
    /// (in [`Layer::visit_params_mut`] order).
    pub fn backward(
        &self,
        cache: &LayerCache<T>,
        grad_out: &[Image<T>],
    ) -> Result<(Vec<Image<T>>, Vec<Vec<T>>)> {
        match (self, cache) {
            (Layer::PConv(layer), LayerCache::PConv { caches, fan_out }) => {
                if grad_out.len() != caches.len() || caches.len() != layer.filters.len() {
                    return Err(Error::ShapeMismatch("PConv gradient count".into()));
                }
                let mut grads_in: Vec<Image<T>> = Vec::new();
                let mut param_grads = Vec::with_capacity(2 * caches.len());
                for (cache, g) in caches.iter().zip(grad_out) {
                    let grads = pconv_backward(cache, g)?;
                    if *fan_out && !grads_in.is_empty() {
                        let acc = grads_in[0].zip_map(&grads.input, |a, b| a + b)?;
                        grads_in[0] = acc;
                    } else {
                        grads_in.push(grads.input);
                    }
                    param_grads.push(grads.kernel);
                    param_grads.push(vec![grads.order]);
                }
                Ok((grads_in, param_grads))
            }
            (Layer::Conv(params), LayerCache::Conv(cache)) => {
                let grads = conv_backward(cache, params, grad_out)?;
                let mut param_grads = grads.kernels;
                param_grads.push(grads.biases);
                Ok((grads.inputs, param_grads))
            }
            (Layer::AbsDiff, LayerCache::AbsDiff(caches)) => {
                if grad_out.len() != caches.len() {
                    return Err(Error::ShapeMismatch("AbsDiff gradient count".into()));
                }
                let mut ga = Vec::with_capacity(caches.len());
                let mut gb = Vec::with_capacity(caches.len());
                for (cache, g) in caches.iter().zip(grad_out) {
                    let (a, b) = absdiff_backward(cache, g)?;
                    ga.push(a);
                    gb.push(b);
                }
                ga.extend(gb);
                Ok((ga, Vec::new()))
            }
            (Layer::Average, LayerCache::Average(cache)) => {
                let [g] = grad_out else {
                    return Err(Error::ShapeMismatch("Average emits one map".into()));
                };
                Ok((average_backward(cache, g)?, Vec::new()))
            }
            _ => Err(Error::ShapeMismatch("cache does not belong to this layer".into())),
        }
    }

    /// Visits every parameter tensor in a fixed order.
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(ParamKind, &mut [T])) {
        match self {
            Layer::PConv(layer) => {
                for p in &mut layer.filters {
                    f(ParamKind::PConvWeights, p.kernel.weights_mut());
                    f(ParamKind::PConvOrder, std::slice::from_mut(&mut p.order));
                }
            }
            Layer::Conv(c) => {
                for k in &mut c.kernels {
                    f(ParamKind::ConvWeights, k);
                }
                f(ParamKind::ConvBias, &mut c.biases);
            }
            Layer::AbsDiff | Layer::Average => {}
        }
    }

    pub fn visit_params(&self, mut f: impl FnMut(ParamKind, &[T])) {
        match self {
            Layer::PConv(layer) => {
                for p in &layer.filters {
                    f(ParamKind::PConvWeights, p.kernel.weights());
                    f(ParamKind::PConvOrder, std::slice::from_ref(&p.order));
                }
            }
            Layer::Conv(c) => {
                for k in &c.kernels {
                    f(ParamKind::ConvWeights, k);
                }
                f(ParamKind::ConvBias, &c.biases);
            }
            Layer::AbsDiff | Layer::Average => {}
        }
    }

    /// Valid-mode shrinkage `k - 1` of this layer.
    pub fn margin(&self) -> usize {
        match self {
            Layer::PConv(l) => l.filters.first().map_or(0, |p| p.kernel.width() - 1),
            Layer::Conv(c) => c.k - 1,
            Layer::AbsDiff | Layer::Average => 0,
        }
    }
}

/// `out(x) = sum_k f(x + k) w_k` over a square odd `k`x`k` window.
pub(crate) fn correlate_valid<T: Scalar>(f: &Image<T>, w: &[T], k: usize, out: &mut [T]) {
    let (ow, oh) = (f.width() + 1 - k, f.height() + 1 - k);
    debug_assert_eq!(out.len(), ow * oh);
    let src = f.data();
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = T::zero();
            for kr in 0..k {
                let row = &src[(r + kr) * f.width() + c..(r + kr) * f.width() + c + k];
                for (&a, &b) in row.iter().zip(&w[kr * k..(kr + 1) * k]) {
                    acc = acc + a * b;
                }
            }
            out[r * ow + c] = out[r * ow + c] + acc;
        }
    }
}

/// `grad_w[k] += sum_x g(x) f(x + k)`.
pub(crate) fn accumulate_kernel_grad<T: Scalar>(f: &Image<T>, g: &Image<T>, k: usize, grad_w: &mut [T]) {
    let src = f.data();
    for kr in 0..k {
        for kc in 0..k {
            let mut acc = T::zero();
            for r in 0..g.height() {
                let row = &src[(r + kr) * f.width() + kc..(r + kr) * f.width() + kc + g.width()];
                for (&a, &b) in row.iter().zip(g.row(r)) {
                    acc = acc + a * b;
                }
            }
            grad_w[kr * k + kc] = grad_w[kr * k + kc] + acc;
        }
    }
}

/// `grad_f[x + k] += w_k g(x)` (full transposed correlation).
pub(crate) fn accumulate_input_grad<T: Scalar>(g: &Image<T>, w: &[T], k: usize, grad_f: &mut Image<T>) {
    let fw = grad_f.width();
    let dst = grad_f.data_mut();
    for r in 0..g.height() {
        for c in 0..g.width() {
            let gv = g.get(r, c);
            if gv == T::zero() {
                continue;
            }
            for kr in 0..k {
                let row = &mut dst[(r + kr) * fw + c..(r + kr) * fw + c + k];
                for (d, &wk) in row.iter_mut().zip(&w[kr * k..(kr + 1) * k]) {
                    *d = *d + wk * gv;
                }
            }
        }
    }
}
