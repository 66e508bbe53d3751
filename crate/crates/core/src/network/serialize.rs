//! Plain-text parameter files.
//!
//! ```text
//! morphlearn-params 1
//! layers 2
//! layer 0 pconv k=3 filters=1 p=random in=input
//! layer 1 absdiff in=input,0
//! tensor 0 pconv.w 9 0.11 0.109 ...
//! tensor 0 pconv.P 1 2.5
//! end
//! ```
//!
//! Values are printed with the shortest representation that parses back to
//! the same float, so a save/load cycle is exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{LayerSpec, Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::layers::ParamKind;
use crate::scalar::Scalar;

const MAGIC: &str = "morphlearn-params 1";

fn kind_tag(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::PConvWeights => "pconv.w",
        ParamKind::PConvOrder => "pconv.P",
        ParamKind::ConvWeights => "conv.w",
        ParamKind::ConvBias => "conv.bias",
    }
}

fn parse_kind(tag: &str) -> Result<ParamKind> {
    Ok(match tag {
        "pconv.w" => ParamKind::PConvWeights,
        "pconv.P" => ParamKind::PConvOrder,
        "conv.w" => ParamKind::ConvWeights,
        "conv.bias" => ParamKind::ConvBias,
        other => return Err(Error::InvalidParams(format!("unknown tensor kind {other:?}"))),
    })
}

pub fn write_params<T: Scalar>(net: &Network<T>) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "layers {}", net.spec().layers.len()).unwrap();
    for (i, l) in net.spec().layers.iter().enumerate() {
        writeln!(out, "layer {i} {l}").unwrap();
    }
    for (i, layer) in net.layers().iter().enumerate() {
        layer.visit_params(|kind, values| {
            write!(out, "tensor {i} {} {}", kind_tag(kind), values.len()).unwrap();
            for v in values {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        });
    }
    out.push_str("end\n");
    out
}

pub fn parse_params<T: Scalar>(text: &str) -> Result<Network<T>> {
    let bad = |msg: String| Error::InvalidParams(msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(bad("missing header line".into()));
    }
    let n_layers: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("layers "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| bad("missing layer count".into()))?;
    let mut specs = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let line = lines.next().ok_or_else(|| bad(format!("missing layer {i}")))?;
        let rest = line
            .strip_prefix("layer ")
            .and_then(|r| r.trim().strip_prefix(&i.to_string()))
            .ok_or_else(|| bad(format!("expected layer {i}, found {line:?}")))?;
        specs.push(rest.trim().parse::<LayerSpec>()?);
    }
    let spec = NetworkSpec::new(specs);
    let mut net = Network::build(&spec, 0)?;
    let mut tensors = Vec::new();
    let mut finished = false;
    for line in lines {
        if line.trim() == "end" {
            finished = true;
            break;
        }
        let mut words = line.split_whitespace();
        if words.next() != Some("tensor") {
            return Err(bad(format!("unexpected line {line:?}")));
        }
        let _layer: usize = words
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| bad(format!("bad tensor line {line:?}")))?;
        let kind = parse_kind(words.next().unwrap_or(""))?;
        let len: usize = words
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| bad(format!("bad tensor length in {line:?}")))?;
        let values = words
            .map(|w| w.parse::<T>().map_err(|_| bad(format!("bad number {w:?}"))))
            .collect::<Result<Vec<T>>>()?;
        if values.len() != len {
            return Err(bad(format!("tensor declares {len} values, has {}", values.len())));
        }
        tensors.push((kind, values));
    }
    if !finished {
        return Err(bad("truncated parameter file (no end marker)".into()));
    }
    net.load_tensors(tensors)?;
    Ok(net)
}

pub fn save_params<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_params(net)).map_err(|e| Error::io(path, e))
}

pub fn load_params<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_params(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Network<f64> {
        let spec = NetworkSpec::new(vec![
            "pconv k=3 filters=2 in=input".parse().unwrap(),
            "pconv k=3 filters=2 p=+ in=0".parse().unwrap(),
            "conv k=1 out=1 act=relu in=1".parse().unwrap(),
            "absdiff in=input,2".parse().unwrap(),
        ]);
        Network::build(&spec, 77).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = sample();
        let text = write_params(&net);
        let back: Network<f64> = parse_params(&text).unwrap();
        assert_eq!(back.layers(), net.layers());
        assert_eq!(write_params(&back), text);
    }

    #[test]
    fn truncation_and_corruption_are_errors() {
        let text = write_params(&sample());
        let cut = &text[..text.len() / 2];
        assert!(parse_params::<f64>(cut).is_err());
        let no_end = text.replace("end\n", "");
        assert!(parse_params::<f64>(&no_end).is_err());
        let bad_order = text.replacen("pconv.P 1 ", "pconv.P 1 99", 1);
        assert!(parse_params::<f64>(&bad_order).is_err());
        assert!(parse_params::<f64>("hello").is_err());
    }
}
