//! Textual network description.
//!
//! One layer per line-level value, e.g.
//!
//! ```text
//! pconv k=11 filters=1 p=- in=input
//! pconv k=11 filters=1 p=+ in=0
//! absdiff in=input,1
//! ```
//!
//! Layers may only reference earlier layers (by index) or `input`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Source of a layer's input maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ref {
    Input,
    Layer(usize),
}

impl fmt::Display for Ref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ref::Input => f.write_str("input"),
            Ref::Layer(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for Ref {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "input" {
            return Ok(Ref::Input);
        }
        s.parse()
            .map(Ref::Layer)
            .map_err(|_| Error::InvalidSpec(format!("bad layer reference {s:?}")))
    }
}

/// Initial value of a PConv order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderInit {
    /// Uniform on `[-2, -0.5] U [0.5, 2]`.
    Random,
    /// Uniform on `[0.5, 2]`.
    Positive,
    /// Uniform on `[-2, -0.5]`.
    Negative,
    Value(f64),
}

impl fmt::Display for OrderInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderInit::Random => f.write_str("random"),
            OrderInit::Positive => f.write_str("+"),
            OrderInit::Negative => f.write_str("-"),
            OrderInit::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for OrderInit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(OrderInit::Random),
            "+" => Ok(OrderInit::Positive),
            "-" => Ok(OrderInit::Negative),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && v.abs() <= crate::chm::MAX_ORDER)
                .map(OrderInit::Value)
                .ok_or_else(|| Error::InvalidSpec(format!("bad order init {v:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationSpec {
    Identity,
    Relu { lb: f64, ub: f64 },
}

impl fmt::Display for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationSpec::Identity => f.write_str("identity"),
            ActivationSpec::Relu { lb, ub } if *lb == 0.0 && *ub == f64::INFINITY => f.write_str("relu"),
            ActivationSpec::Relu { lb, ub } => write!(f, "relu:{lb}:{ub}"),
        }
    }
}

impl FromStr for ActivationSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("bad activation {s:?}"));
        match s {
            "identity" => Ok(ActivationSpec::Identity),
            "relu" => Ok(ActivationSpec::Relu {
                lb: 0.0,
                ub: f64::INFINITY,
            }),
            _ => {
                let rest = s.strip_prefix("relu:").ok_or_else(bad)?;
                let (lb, ub) = rest.split_once(':').ok_or_else(bad)?;
                let lb: f64 = lb.parse().map_err(|_| bad())?;
                let ub: f64 = ub.parse().map_err(|_| bad())?;
                if lb.is_nan() || ub.is_nan() || lb >= ub {
                    return Err(bad());
                }
                Ok(ActivationSpec::Relu { lb, ub })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    PConv {
        k: usize,
        filters: usize,
        /// One entry, or one per filter.
        order_init: Vec<OrderInit>,
    },
    Conv {
        k: usize,
        outputs: usize,
        activation: ActivationSpec,
        /// `(input map, output map)` pairs; `None` connects everything.
        table: Option<Vec<(usize, usize)>>,
    },
    AbsDiff,
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub inputs: Vec<Ref>,
}

impl LayerSpec {
    pub fn pconv(k: usize, filters: usize, order_init: OrderInit, inputs: Vec<Ref>) -> Self {
        Self {
            kind: LayerKind::PConv {
                k,
                filters,
                order_init: vec![order_init],
            },
            inputs,
        }
    }

    pub fn conv(k: usize, outputs: usize, activation: ActivationSpec, inputs: Vec<Ref>) -> Self {
        Self {
            kind: LayerKind::Conv {
                k,
                outputs,
                activation,
                table: None,
            },
            inputs,
        }
    }

    pub fn absdiff(a: Ref, b: Ref) -> Self {
        Self {
            kind: LayerKind::AbsDiff,
            inputs: vec![a, b],
        }
    }

    pub fn average(inputs: Vec<Ref>) -> Self {
        Self {
            kind: LayerKind::Average,
            inputs,
        }
    }

    pub fn kernel_size(&self) -> usize {
        match self.kind {
            LayerKind::PConv { k, .. } | LayerKind::Conv { k, .. } => k,
            LayerKind::AbsDiff | LayerKind::Average => 1,
        }
    }
}

fn join<I: IntoIterator<Item = S>, S: fmt::Display>(items: I, sep: &str) -> String {
    items.into_iter().map(|s| s.to_string()).collect::<Vec<_>>().join(sep)
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LayerKind::PConv {
                k,
                filters,
                order_init,
            } => write!(f, "pconv k={k} filters={filters} p={}", join(order_init, "/"))?,
            LayerKind::Conv {
                k,
                outputs,
                activation,
                table,
            } => {
                write!(f, "conv k={k} out={outputs} act={activation}")?;
                if let Some(t) = table {
                    write!(f, " table={}", join(t.iter().map(|(i, o)| format!("{i}:{o}")), "/"))?;
                }
            }
            LayerKind::AbsDiff => f.write_str("absdiff")?,
            LayerKind::Average => f.write_str("average")?,
        }
        write!(f, " in={}", join(&self.inputs, ","))
    }
}

impl FromStr for LayerSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut words = s.split_whitespace();
        let kind = words
            .next()
            .ok_or_else(|| Error::InvalidSpec("empty layer description".into()))?;
        let mut k = None;
        let mut filters = 1usize;
        let mut outputs = 1usize;
        let mut activation = ActivationSpec::Identity;
        let mut order_init = vec![OrderInit::Random];
        let mut table = None;
        let mut inputs = None;
        let num = |key: &str, v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::InvalidSpec(format!("bad value for {key}: {v:?}")))
        };
        for word in words {
            let (key, value) = word
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got {word:?}")))?;
            match key {
                "k" => k = Some(num(key, value)?),
                "filters" => filters = num(key, value)?,
                "out" => outputs = num(key, value)?,
                "act" => activation = value.parse()?,
                "p" => order_init = value.split('/').map(str::parse).collect::<Result<_>>()?,
                "in" => inputs = Some(value.split(',').map(str::parse).collect::<Result<Vec<Ref>>>()?),
                "table" => {
                    let pairs = value
                        .split('/')
                        .map(|pair| {
                            let (i, o) = pair
                                .split_once(':')
                                .ok_or_else(|| Error::InvalidSpec(format!("bad table entry {pair:?}")))?;
                            Ok((num(key, i)?, num(key, o)?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    table = Some(pairs);
                }
                other => return Err(Error::InvalidSpec(format!("unknown layer key {other:?}"))),
            }
        }
        let inputs = inputs.ok_or_else(|| Error::InvalidSpec(format!("layer {s:?} has no in=")))?;
        let need_k = || k.ok_or_else(|| Error::InvalidSpec(format!("layer {s:?} needs k=")));
        let kind = match kind {
            "pconv" => LayerKind::PConv {
                k: need_k()?,
                filters,
                order_init,
            },
            "conv" => LayerKind::Conv {
                k: need_k()?,
                outputs,
                activation,
                table,
            },
            "absdiff" => LayerKind::AbsDiff,
            "average" => LayerKind::Average,
            other => return Err(Error::InvalidSpec(format!("unknown layer kind {other:?}"))),
        };
        Ok(LayerSpec { kind, inputs })
    }
}

/// Ordered layer list; the last layer's single output map is the prediction.
/// The loss is always per-pixel MSE.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Self { layers }
    }

    /// Checks topology and returns the number of maps each layer emits.
    pub fn validate(&self) -> Result<Vec<usize>> {
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        let mut counts: Vec<usize> = Vec::with_capacity(self.layers.len());
        // positivity of each layer's outputs (CHM inputs must stay > 0)
        let mut positive: Vec<bool> = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let err = |msg: String| Error::InvalidSpec(format!("layer {idx} ({layer}): {msg}"));
            if layer.inputs.is_empty() {
                return Err(err("no inputs".into()));
            }
            let mut in_counts = Vec::new();
            for r in &layer.inputs {
                match *r {
                    Ref::Input => in_counts.push(1),
                    Ref::Layer(j) if j < idx => in_counts.push(counts[j]),
                    Ref::Layer(j) => return Err(err(format!("references layer {j}, which is not earlier"))),
                }
            }
            let total: usize = in_counts.iter().sum();
            let (count, pos) = match &layer.kind {
                LayerKind::PConv {
                    k,
                    filters,
                    order_init,
                } => {
                    if k % 2 == 0 || *k == 0 {
                        return Err(err(format!("kernel size {k} must be odd")));
                    }
                    if *filters == 0 {
                        return Err(err("needs at least one filter".into()));
                    }
                    if order_init.len() != 1 && order_init.len() != *filters {
                        return Err(err("order init list must have one entry or one per filter".into()));
                    }
                    if total != 1 && total != *filters {
                        return Err(err(format!("{total} input maps for {filters} filters")));
                    }
                    for r in &layer.inputs {
                        if let Ref::Layer(j) = *r {
                            if !positive[j] {
                                return Err(err(format!(
                                    "input layer {j} may emit non-positive values and cannot feed a PConv"
                                )));
                            }
                        }
                    }
                    (*filters, true)
                }
                LayerKind::Conv {
                    k, outputs, table, ..
                } => {
                    if k % 2 == 0 || *k == 0 {
                        return Err(err(format!("kernel size {k} must be odd")));
                    }
                    if *outputs == 0 {
                        return Err(err("needs at least one output".into()));
                    }
                    if let Some(t) = table {
                        if t.is_empty() {
                            return Err(err("empty connection table".into()));
                        }
                        if let Some((i, o)) = t.iter().find(|(i, o)| *i >= total || *o >= *outputs) {
                            return Err(err(format!("table entry {i}:{o} references a missing map")));
                        }
                    }
                    (*outputs, false)
                }
                LayerKind::AbsDiff => {
                    if in_counts.len() != 2 {
                        return Err(err(format!("absdiff takes exactly 2 inputs, got {}", in_counts.len())));
                    }
                    if in_counts[0] != in_counts[1] {
                        return Err(err("absdiff operands have different map counts".into()));
                    }
                    (in_counts[0], false)
                }
                LayerKind::Average => (1, false),
            };
            counts.push(count);
            positive.push(pos);
        }
        if *counts.last().unwrap() != 1 {
            return Err(Error::InvalidSpec("the last layer must emit exactly one map".into()));
        }
        Ok(counts)
    }

    /// Output size for an input of the given size, following the same
    /// crop-to-common-size rule as the forward pass.
    pub fn output_dims(&self, input: (usize, usize)) -> Result<(usize, usize)> {
        Ok(*self.node_dims(input)?.last().unwrap())
    }

    pub fn node_dims(&self, input: (usize, usize)) -> Result<Vec<(usize, usize)>> {
        let mut dims: Vec<(usize, usize)> = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let srcs: Vec<(usize, usize)> = layer
                .inputs
                .iter()
                .map(|r| match *r {
                    Ref::Input => input,
                    Ref::Layer(j) => dims[j],
                })
                .collect();
            let w = srcs.iter().map(|d| d.0).min().unwrap_or(0);
            let h = srcs.iter().map(|d| d.1).min().unwrap_or(0);
            for d in &srcs {
                crate::imaging::crop_offset(*d, (w, h))?;
            }
            let k = layer.kernel_size();
            if w < k || h < k {
                return Err(Error::InvalidSpec(format!(
                    "input {}x{} too small: layer {idx} sees {w}x{h} with kernel {k}",
                    input.0, input.1
                )));
            }
            dims.push((w + 1 - k, h + 1 - k));
        }
        Ok(dims)
    }

    /// Total shrinkage `(in - out)` per axis.
    pub fn margin(&self) -> Result<usize> {
        let probe = 4096;
        let (w, _) = self.output_dims((probe, probe))?;
        Ok(probe - w)
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(f, "{i}: {l}")?;
        }
        Ok(())
    }
}
