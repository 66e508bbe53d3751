//! Linear valid-mode convolution layer with a connection table.

use super::{accumulate_input_grad, accumulate_kernel_grad, correlate_valid};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::scalar::Scalar;

/// Pointwise activation applied after the biased sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation<T> {
    Identity,
    /// `max(lb, min(x, ub))`
    Relu { lb: T, ub: T },
}

impl<T: Scalar> Activation<T> {
    pub fn relu() -> Self {
        Activation::Relu {
            lb: T::zero(),
            ub: T::infinity(),
        }
    }

    pub fn apply(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu { lb, ub } => x.min(ub).max(lb),
        }
    }

    /// Derivative gate; zero where the clamp is active.
    pub fn passes(self, x: T) -> bool {
        match self {
            Activation::Identity => true,
            Activation::Relu { lb, ub } => x > lb && x < ub,
        }
    }
}

/// One `(input map, kernel, output map)` entry of a connection table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Connection {
    pub input: usize,
    pub kernel: usize,
    pub output: usize,
}

/// Kernels are square `k`x`k`, row-major, and used as correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub k: usize,
    pub kernels: Vec<Vec<T>>,
    pub biases: Vec<T>,
    pub table: Vec<Connection>,
    pub activation: Activation<T>,
}

impl<T: Scalar> ConvParams<T> {
    /// Every input map connected to every output map, one kernel per pair.
    pub fn full_table(n_inputs: usize, n_outputs: usize) -> Vec<Connection> {
        (0..n_outputs)
            .flat_map(|o| (0..n_inputs).map(move |i| (i, o)))
            .enumerate()
            .map(|(kernel, (input, output))| Connection {
                input,
                kernel,
                output,
            })
            .collect()
    }

    pub fn validate(&self, n_inputs: usize) -> Result<()> {
        if self.k.is_multiple_of(2) {
            return Err(Error::EvenKernel(self.k, self.k));
        }
        if let Some(bad) = self.kernels.iter().find(|w| w.len() != self.k * self.k) {
            return Err(Error::InvalidKernel(format!(
                "conv kernel of {} weights, expected {}",
                bad.len(),
                self.k * self.k
            )));
        }
        for c in &self.table {
            if c.input >= n_inputs || c.kernel >= self.kernels.len() || c.output >= self.biases.len() {
                return Err(Error::InvalidSpec(format!(
                    "connection {c:?} references a missing map or kernel ({n_inputs} inputs, {} kernels, {} outputs)",
                    self.kernels.len(),
                    self.biases.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    inputs: Vec<Image<T>>,
    pre: Vec<Image<T>>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub inputs: Vec<Image<T>>,
    pub kernels: Vec<Vec<T>>,
    pub biases: Vec<T>,
}

pub fn conv_forward<T: Scalar>(maps: &[Image<T>], params: &ConvParams<T>) -> Result<(Vec<Image<T>>, ConvCache<T>)> {
    params.validate(maps.len())?;
    let Some(first) = maps.first() else {
        return Err(Error::ShapeMismatch("conv layer without input maps".into()));
    };
    for m in maps {
        first.expect_same_shape(m)?;
    }
    let (ow, oh) = crate::imaging::valid_size(first.width(), first.height(), params.k)?;
    let mut pre: Vec<Image<T>> = params
        .biases
        .iter()
        .map(|&b| Image::filled(ow, oh, b))
        .collect();
    for c in &params.table {
        correlate_valid(
            &maps[c.input],
            &params.kernels[c.kernel],
            params.k,
            pre[c.output].data_mut(),
        );
    }
    let outs = pre.iter().map(|p| p.map(|v| params.activation.apply(v))).collect();
    Ok((
        outs,
        ConvCache {
            inputs: maps.to_vec(),
            pre,
        },
    ))
}

pub fn conv_backward<T: Scalar>(
    cache: &ConvCache<T>,
    params: &ConvParams<T>,
    grad_out: &[Image<T>],
) -> Result<ConvGrads<T>> {
    if grad_out.len() != cache.pre.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} output gradients for {} conv outputs",
            grad_out.len(),
            cache.pre.len()
        )));
    }
    let gated: Vec<Image<T>> = grad_out
        .iter()
        .zip(&cache.pre)
        .map(|(g, pre)| {
            g.zip_map(pre, |g, x| if params.activation.passes(x) { g } else { T::zero() })
        })
        .collect::<Result<_>>()?;
    let mut grads = ConvGrads {
        inputs: cache
            .inputs
            .iter()
            .map(|m| Image::zeros(m.width(), m.height()))
            .collect(),
        kernels: vec![vec![T::zero(); params.k * params.k]; params.kernels.len()],
        biases: gated.iter().map(|g| g.data().iter().fold(T::zero(), |a, &b| a + b)).collect(),
    };
    for c in &params.table {
        let g = &gated[c.output];
        accumulate_kernel_grad(&cache.inputs[c.input], g, params.k, &mut grads.kernels[c.kernel]);
        accumulate_input_grad(g, &params.kernels[c.kernel], params.k, &mut grads.inputs[c.input]);
    }
    Ok(grads)
}
