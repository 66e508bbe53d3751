//! PConv: a counter-harmonic mean with learnable kernel `w` and order `P`.
//!
//! With `A = f^P`, `B = f^(P+1)`, `D = A * w`, `N = B * w` and `h = N / D`,
//! and `g` the incoming gradient, the quotient rule gives
//!
//! ```text
//! dL/dw_k = sum_x g(x)/D(x) * (B(x+k) - h(x) A(x+k))
//! dL/dP   = sum_y ln f(y) A(y) (f(y) U(y) - V(y))
//! dL/df_y = A(y) ((P+1) U(y) - P V(y) / f(y))
//! ```
//!
//! where `U = full(g/D, w)` and `V = full(g h/D, w)` are transposed
//! correlations. All three are accumulated in one sweep over `(x, k)`.

use crate::chm::{chm_parts, check_order, Kernel};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::scalar::Scalar;

/// One learnable CHM filter.
#[derive(Debug, Clone, PartialEq)]
pub struct PConvParams<T> {
    pub kernel: Kernel<T>,
    pub order: T,
}

impl<T: Scalar> PConvParams<T> {
    pub fn new(kernel: Kernel<T>, order: T) -> Result<Self> {
        if kernel.width() != kernel.height() {
            return Err(Error::InvalidKernel("PConv kernels must be square".into()));
        }
        check_order(order)?;
        Ok(Self { kernel, order })
    }
}

/// Forward intermediates of one PConv filter.
#[derive(Debug, Clone)]
pub struct PConvCache<T> {
    input: Image<T>,
    pow_p: Vec<T>,
    log_f: Vec<T>,
    den: Vec<T>,
    num: Vec<T>,
    output: Image<T>,
    kernel: Vec<T>,
    k: usize,
    order: T,
}

impl<T: Scalar> PConvCache<T> {
    pub fn input(&self) -> &Image<T> {
        &self.input
    }

    pub fn output(&self) -> &Image<T> {
        &self.output
    }

    pub fn order(&self) -> T {
        self.order
    }

    /// Smallest denominator `(f^P * w)(x)` seen in the forward pass.
    pub fn min_denominator(&self) -> T {
        self.den.iter().copied().fold(T::infinity(), T::min)
    }

    /// Largest numerator `(f^(P+1) * w)(x)`.
    pub fn max_numerator(&self) -> T {
        self.num.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Gradients of the loss with respect to the input map, the kernel
/// (row-major) and the order.
#[derive(Debug, Clone)]
pub struct PConvGrads<T> {
    pub input: Image<T>,
    pub kernel: Vec<T>,
    pub order: T,
}

pub fn pconv_forward<T: Scalar>(f: &Image<T>, params: &PConvParams<T>) -> Result<(Image<T>, PConvCache<T>)> {
    let parts = chm_parts(f, &params.kernel, params.order)?;
    let cache = PConvCache {
        input: f.clone(),
        pow_p: parts.pow_p,
        log_f: parts.log_f,
        den: parts.den,
        num: parts.num,
        output: parts.out.clone(),
        kernel: params.kernel.weights().to_vec(),
        k: params.kernel.width(),
        order: params.order,
    };
    Ok((parts.out, cache))
}

pub fn pconv_backward<T: Scalar>(cache: &PConvCache<T>, grad_out: &Image<T>) -> Result<PConvGrads<T>> {
    cache.output.expect_same_shape(grad_out)?;
    let k = cache.k;
    let (iw, ih) = cache.input.dims();
    let ow = cache.output.width();
    let f = cache.input.data();
    let a = &cache.pow_p;
    let w = &cache.kernel;

    let mut grad_w = vec![T::zero(); k * k];
    let mut full_u = vec![T::zero(); iw * ih];
    let mut full_v = vec![T::zero(); iw * ih];
    for (x, ((&g, &d), &h)) in grad_out
        .data()
        .iter()
        .zip(&cache.den)
        .zip(cache.output.data())
        .enumerate()
    {
        if g == T::zero() {
            continue;
        }
        let u = g / d;
        let v = u * h;
        let (r, c) = (x / ow, x % ow);
        for kr in 0..k {
            let base = (r + kr) * iw + c;
            for kc in 0..k {
                let y = base + kc;
                let idx = kr * k + kc;
                grad_w[idx] = grad_w[idx] + a[y] * (u * f[y] - v);
                full_u[y] = full_u[y] + w[idx] * u;
                full_v[y] = full_v[y] + w[idx] * v;
            }
        }
    }

    let p = cache.order;
    let p1 = p + T::one();
    let mut grad_p = T::zero();
    let mut grad_in = Vec::with_capacity(iw * ih);
    for y in 0..iw * ih {
        let (uy, vy) = (full_u[y], full_v[y]);
        grad_p = grad_p + cache.log_f[y] * a[y] * (f[y] * uy - vy);
        grad_in.push(a[y] * (p1 * uy - p * vy / f[y]));
    }
    Ok(PConvGrads {
        input: Image::new(iw, ih, grad_in)?,
        kernel: grad_w,
        order: grad_p,
    })
}
