//! Layer DAGs with whole-network forward, backward and momentum updates.
//!
//! A layer gathers the maps of all its references, center-crops them to
//! their common size and feeds the concatenated list to the layer. The
//! backward pass undoes the crop by zero-padding, and gradients arriving at
//! a node from several consumers are summed.

mod serialize;
mod spec;

pub use serialize::{load_params, parse_params, save_params, write_params};
pub use spec::{ActivationSpec, LayerKind, LayerSpec, NetworkSpec, OrderInit, Ref};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chm::{Kernel, WEIGHT_FLOOR};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::layers::{
    Activation, Connection, ConvParams, Layer, LayerCache, PConvCache, PConvLayer, PConvParams, ParamKind,
};
use crate::scalar::Scalar;

/// Instantiated network: parameters plus momentum state.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
    velocity: Vec<Vec<Vec<T>>>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    input_dims: (usize, usize),
    outputs: Vec<Vec<Image<T>>>,
    caches: Vec<LayerCache<T>>,
    /// per layer: (source dims, map count) of each reference, in order
    sources: Vec<Vec<((usize, usize), usize)>>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn prediction(&self) -> &Image<T> {
        &self.outputs.last().expect("non-empty network")[0]
    }

    pub fn layer_outputs(&self, layer: usize) -> &[Image<T>] {
        &self.outputs[layer]
    }

    pub fn pconv_caches(&self) -> impl Iterator<Item = &PConvCache<T>> {
        self.caches.iter().flat_map(|c| match c {
            LayerCache::PConv { caches, .. } => caches.as_slice(),
            _ => &[],
        })
    }

    /// Smallest CHM denominator over every PConv filter.
    pub fn min_denominator(&self) -> T {
        self.pconv_caches()
            .map(PConvCache::min_denominator)
            .fold(T::infinity(), T::min)
    }
}

/// Loss value with the gradient for every parameter tensor (per layer, in
/// [`Layer::visit_params`] order) and for the input image.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub loss: T,
    pub params: Vec<Vec<Vec<T>>>,
    pub input: Image<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn norm(&self, include: impl Fn(ParamKind) -> bool, kinds: &[Vec<ParamKind>]) -> T {
        let mut sq = T::zero();
        for (layer, tensors) in self.params.iter().enumerate() {
            for (t, g) in tensors.iter().enumerate() {
                if include(kinds[layer][t]) {
                    sq = g.iter().fold(sq, |a, &v| a + v * v);
                }
            }
        }
        sq.sqrt()
    }
}

/// One SGD-with-momentum step: `v <- mu v - lr g`, `param += v`, then
/// projection onto the feasible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRule<T> {
    pub lr: T,
    pub momentum: T,
    /// Rescale the (unfrozen) gradient to at most this global L2 norm.
    pub clip: Option<T>,
    /// Multiplier on `lr` for PConv orders.
    pub order_lr_scale: T,
    pub freeze_orders: bool,
    pub freeze_weights: bool,
}

impl<T: Scalar> UpdateRule<T> {
    pub fn sgd(lr: T, momentum: T) -> Self {
        Self {
            lr,
            momentum,
            clip: None,
            order_lr_scale: T::one(),
            freeze_orders: false,
            freeze_weights: false,
        }
    }

    pub fn is_frozen(&self, kind: ParamKind) -> bool {
        if kind.is_order() {
            self.freeze_orders
        } else {
            self.freeze_weights
        }
    }
}

fn draw_order<R: Rng>(init: spec::OrderInit, rng: &mut R) -> f64 {
    match init {
        OrderInit::Value(v) => v,
        OrderInit::Positive => rng.random_range(0.5..2.0),
        OrderInit::Negative => -rng.random_range(0.5..2.0),
        OrderInit::Random => {
            let m = rng.random_range(0.5..2.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        }
    }
}

impl<T: Scalar> Network<T> {
    /// Deterministic initialization from `seed`.
    ///
    /// PConv kernels start flat at `1/k^2` with a uniform `[0.9, 1.1]`
    /// jitter; orders follow the layer's [`OrderInit`]; Conv kernels are
    /// uniform in `[-a, a]` with `a = 1 / (k sqrt(fan_in))`; biases are 0.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let counts = spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (idx, ls) in spec.layers.iter().enumerate() {
            let n_inputs: usize = ls
                .inputs
                .iter()
                .map(|r| match r {
                    Ref::Input => 1,
                    Ref::Layer(j) => counts[*j],
                })
                .sum();
            let layer = match &ls.kind {
                LayerKind::PConv {
                    k,
                    filters,
                    order_init,
                } => {
                    let base = 1.0 / (k * k) as f64;
                    let mut bank = Vec::with_capacity(*filters);
                    for j in 0..*filters {
                        let weights = (0..k * k)
                            .map(|_| T::c(base * rng.random_range(0.9..1.1)))
                            .collect();
                        let init = if order_init.len() == 1 { order_init[0] } else { order_init[j] };
                        let order = T::c(draw_order(init, &mut rng));
                        bank.push(PConvParams::new(Kernel::floored(*k, *k, weights)?, order)?);
                    }
                    Layer::PConv(PConvLayer { filters: bank })
                }
                LayerKind::Conv {
                    k,
                    outputs,
                    activation,
                    table,
                } => {
                    let table: Vec<Connection> = match table {
                        Some(pairs) => pairs
                            .iter()
                            .enumerate()
                            .map(|(kernel, &(input, output))| Connection {
                                input,
                                kernel,
                                output,
                            })
                            .collect(),
                        None => ConvParams::<T>::full_table(n_inputs, *outputs),
                    };
                    let fan_in = (0..*outputs)
                        .map(|o| table.iter().filter(|c| c.output == o).count())
                        .max()
                        .unwrap_or(1)
                        .max(1);
                    let a = 1.0 / (*k as f64 * (fan_in as f64).sqrt());
                    let kernels = (0..table.len())
                        .map(|_| (0..k * k).map(|_| T::c(rng.random_range(-a..=a))).collect())
                        .collect();
                    let activation = match activation {
                        ActivationSpec::Identity => Activation::Identity,
                        ActivationSpec::Relu { lb, ub } => Activation::Relu {
                            lb: T::c(*lb),
                            ub: T::c(*ub),
                        },
                    };
                    let params = ConvParams {
                        k: *k,
                        kernels,
                        biases: vec![T::zero(); *outputs],
                        table,
                        activation,
                    };
                    params.validate(n_inputs).map_err(|e| {
                        Error::InvalidSpec(format!("layer {idx}: {e}"))
                    })?;
                    Layer::Conv(params)
                }
                LayerKind::AbsDiff => Layer::AbsDiff,
                LayerKind::Average => Layer::Average,
            };
            layers.push(layer);
        }
        Ok(Self::with_layers(spec.clone(), layers))
    }

    fn with_layers(spec: NetworkSpec, layers: Vec<Layer<T>>) -> Self {
        let velocity = layers
            .iter()
            .map(|l| {
                let mut v = Vec::new();
                l.visit_params(|_, vals| v.push(vec![T::zero(); vals.len()]));
                v
            })
            .collect();
        Self {
            spec,
            layers,
            velocity,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Parameter kinds per layer, in visit order.
    pub fn param_kinds(&self) -> Vec<Vec<ParamKind>> {
        self.layers
            .iter()
            .map(|l| {
                let mut kinds = Vec::new();
                l.visit_params(|k, _| kinds.push(k));
                kinds
            })
            .collect()
    }

    /// Every PConv order, layer by layer, filter by filter.
    pub fn orders(&self) -> Vec<T> {
        self.pconv_filters().map(|(_, _, p)| p.order).collect()
    }

    /// `(layer, filter, params)` for every PConv filter.
    pub fn pconv_filters(&self) -> impl Iterator<Item = (usize, usize, &PConvParams<T>)> {
        self.layers.iter().enumerate().flat_map(|(i, l)| match l {
            Layer::PConv(p) => p.filters.iter().enumerate().map(move |(j, f)| (i, j, f)).collect::<Vec<_>>(),
            _ => Vec::new(),
        })
    }

    pub fn output_dims(&self, input: (usize, usize)) -> Result<(usize, usize)> {
        self.spec.output_dims(input)
    }

    /// Drops accumulated momentum.
    pub fn reset_velocity(&mut self) {
        for layer in &mut self.velocity {
            for t in layer {
                t.iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }

    pub fn predict(&self, input: &Image<T>) -> Result<Image<T>> {
        Ok(self.forward(input)?.prediction().clone())
    }

    pub fn forward(&self, input: &Image<T>) -> Result<ForwardPass<T>> {
        self.spec.output_dims(input.dims())?;
        let mut outputs: Vec<Vec<Image<T>>> = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut sources = Vec::with_capacity(self.layers.len());
        let input_maps = std::slice::from_ref(input);
        for (ls, layer) in self.spec.layers.iter().zip(&self.layers) {
            let refs: Vec<&[Image<T>]> = ls
                .inputs
                .iter()
                .map(|r| match *r {
                    Ref::Input => input_maps,
                    Ref::Layer(j) => outputs[j].as_slice(),
                })
                .collect();
            let w = refs.iter().map(|m| m[0].width()).min().unwrap();
            let h = refs.iter().map(|m| m[0].height()).min().unwrap();
            let mut gathered = Vec::new();
            let mut src_info = Vec::with_capacity(refs.len());
            for maps in &refs {
                src_info.push((maps[0].dims(), maps.len()));
                for m in maps.iter() {
                    gathered.push(m.center_crop(w, h)?);
                }
            }
            let (out, cache) = layer.forward(&gathered)?;
            outputs.push(out);
            caches.push(cache);
            sources.push(src_info);
        }
        Ok(ForwardPass {
            input_dims: input.dims(),
            outputs,
            caches,
            sources,
        })
    }

    /// MSE loss against `target` and its gradient with respect to every
    /// parameter and the input.
    pub fn backward(&self, pass: &ForwardPass<T>, target: &Image<T>) -> Result<Gradients<T>> {
        let pred = pass.prediction();
        pred.expect_same_shape(target)?;
        let n = T::of_usize(pred.len());
        let mut loss = T::zero();
        let seed: Vec<T> = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let d = p - t;
                loss = loss + d * d;
                (d + d) / n
            })
            .collect();
        loss = loss / n;
        self.backward_from(pass, Image::new(pred.width(), pred.height(), seed)?, loss)
    }

    /// Back-propagates an arbitrary gradient of the prediction.
    pub fn backward_from(&self, pass: &ForwardPass<T>, grad_pred: Image<T>, loss: T) -> Result<Gradients<T>> {
        let n_layers = self.layers.len();
        let mut pending: Vec<Option<Vec<Image<T>>>> = vec![None; n_layers];
        pending[n_layers - 1] = Some(vec![grad_pred]);
        let mut input_grad = Image::zeros(pass.input_dims.0, pass.input_dims.1);
        let mut params: Vec<Vec<Vec<T>>> = vec![Vec::new(); n_layers];
        for idx in (0..n_layers).rev() {
            let layer = &self.layers[idx];
            let Some(grad_out) = pending[idx].take() else {
                let mut zeros = Vec::new();
                layer.visit_params(|_, v| zeros.push(vec![T::zero(); v.len()]));
                params[idx] = zeros;
                continue;
            };
            let (grad_in, grad_params) = layer.backward(&pass.caches[idx], &grad_out)?;
            params[idx] = grad_params;
            let mut offset = 0;
            for (r, &(dims, count)) in self.spec.layers[idx].inputs.iter().zip(&pass.sources[idx]) {
                let parts = grad_in[offset..offset + count]
                    .iter()
                    .map(|g| g.embed_center(dims.0, dims.1))
                    .collect::<Result<Vec<_>>>()?;
                offset += count;
                match *r {
                    Ref::Input => input_grad = input_grad.zip_map(&parts[0], |a, b| a + b)?,
                    Ref::Layer(j) => match &mut pending[j] {
                        Some(acc) => {
                            for (a, p) in acc.iter_mut().zip(&parts) {
                                *a = a.zip_map(p, |x, y| x + y)?;
                            }
                        }
                        slot @ None => *slot = Some(parts),
                    },
                }
            }
        }
        Ok(Gradients {
            loss,
            params,
            input: input_grad,
        })
    }

    /// Applies one momentum step; returns the global norm of the gradient
    /// actually applied (after clipping, over unfrozen groups).
    pub fn apply_update(&mut self, grads: &Gradients<T>, rule: &UpdateRule<T>) -> Result<T> {
        let kinds = self.param_kinds();
        if grads.params.len() != kinds.len()
            || grads
                .params
                .iter()
                .zip(&kinds)
                .any(|(g, k)| g.len() != k.len())
        {
            return Err(Error::ShapeMismatch("gradients do not match network parameters".into()));
        }
        let norm = grads.norm(|k| !rule.is_frozen(k), &kinds);
        let scale = match rule.clip {
            Some(c) if norm > c && norm > T::zero() => c / norm,
            _ => T::one(),
        };
        let applied = norm * scale;
        if let Some(c) = rule.clip {
            assert!(
                !(applied > c * T::c(1.0 + 1e-9)),
                "clipped gradient norm {applied} exceeds {c}"
            );
        }
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let mut t = 0;
            let velocity = &mut self.velocity[li];
            layer.visit_params_mut(|kind, values| {
                let v = &mut velocity[t];
                let g = &grads.params[li][t];
                t += 1;
                if rule.is_frozen(kind) {
                    v.iter_mut().for_each(|x| *x = T::zero());
                    return;
                }
                let lr = if kind.is_order() { rule.lr * rule.order_lr_scale } else { rule.lr };
                for ((p, vel), &gi) in values.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vel = rule.momentum * *vel - lr * gi * scale;
                    *p = kind.project(*p + *vel);
                }
            });
        }
        Ok(applied)
    }

    /// Replaces all parameters from a flat list of tensors in visit order.
    pub(crate) fn load_tensors(&mut self, tensors: Vec<(ParamKind, Vec<T>)>) -> Result<()> {
        let kinds = self.param_kinds();
        let expected: usize = kinds.iter().map(Vec::len).sum();
        if tensors.len() != expected {
            return Err(Error::InvalidParams(format!(
                "{} tensors for a network with {expected}",
                tensors.len()
            )));
        }
        let floor = T::c(WEIGHT_FLOOR);
        let mut it = tensors.into_iter();
        let mut failure = None;
        for layer in &mut self.layers {
            layer.visit_params_mut(|kind, values| {
                let (k, v) = it.next().expect("count checked");
                if failure.is_some() {
                    return;
                }
                if k != kind || v.len() != values.len() {
                    failure = Some(format!("expected {kind:?}[{}], found {k:?}[{}]", values.len(), v.len()));
                    return;
                }
                let feasible = v.iter().all(|&x| match kind {
                    ParamKind::PConvWeights => x.is_finite() && x >= floor,
                    _ => x.is_finite() && kind.project(x) == x,
                });
                if !feasible {
                    failure = Some(format!("{kind:?} values outside their feasible range"));
                    return;
                }
                values.copy_from_slice(&v);
            });
        }
        if let Some(msg) = failure {
            return Err(Error::InvalidParams(msg));
        }
        self.reset_velocity();
        Ok(())
    }
}
