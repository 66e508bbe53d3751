//! Central finite-difference verification of analytic gradients.
//!
//! A layer is reduced to the scalar `L = sum_j sum_x r_j(x) out_j(x)` with
//! fixed probe maps `r_j`; the analytic gradient is the backward pass with
//! `grad_out = r`. Each entry is compared through
//! `|a - n| / max(1e-8, |a| + |n|)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, PConvLayer, PConvParams, ParamKind};
use crate::chm::Kernel;
use crate::error::Result;
use crate::imaging::Image;
use crate::scalar::Scalar;

/// Worst entry of one gradient group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn new(groups: Vec<GroupCheck>, tolerance: f64) -> Self {
        let passed = groups.iter().all(|g| g.max_rel_err < tolerance);
        Self {
            groups,
            tolerance,
            passed,
        }
    }

    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for g in &self.groups {
            writeln!(
                f,
                "  {:<16} n={:<5} max_rel_err={:.3e} max_abs_err={:.3e}",
                g.name, g.entries, g.max_rel_err, g.max_abs_err
            )?;
        }
        write!(
            f,
            "  {} (tolerance {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.tolerance
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

pub fn compare<T: Scalar>(name: impl Into<String>, analytic: &[T], numeric: &[T]) -> GroupCheck {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut check = GroupCheck {
        name: name.into(),
        entries: analytic.len(),
        max_rel_err: 0.0,
        max_abs_err: 0.0,
    };
    for (&a, &n) in analytic.iter().zip(numeric) {
        let (a, n) = (a.to_f64_lossy(), n.to_f64_lossy());
        let rel = relative_error(a, n);
        check.max_rel_err = if rel.is_nan() { f64::INFINITY } else { check.max_rel_err.max(rel) };
        check.max_abs_err = check.max_abs_err.max((a - n).abs());
    }
    check
}

/// `(L(x + h) - L(x - h)) / 2h` for a single coordinate, restoring it afterwards.
pub fn central_difference<T: Scalar>(value: &mut T, h: T, mut loss: impl FnMut(T) -> Result<T>) -> Result<T> {
    let orig = *value;
    let plus = loss(orig + h)?;
    let minus = loss(orig - h)?;
    *value = orig;
    Ok((plus - minus) / (h + h))
}

/// Analytic gradients produced by a layer's backward pass, exposed so tests
/// can tamper with them.
#[derive(Debug, Clone)]
pub struct AnalyticGrads<T> {
    pub inputs: Vec<Image<T>>,
    pub params: Vec<Vec<T>>,
}

fn probe_loss<T: Scalar>(layer: &Layer<T>, inputs: &[Image<T>], probes: &[Image<T>]) -> Result<T> {
    let (outs, _) = layer.forward(inputs)?;
    let mut total = T::zero();
    for (o, r) in outs.iter().zip(probes) {
        for (&a, &b) in o.data().iter().zip(r.data()) {
            total = total + a * b;
        }
    }
    Ok(total)
}

fn param_name(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::PConvWeights => "pconv.w",
        ParamKind::PConvOrder => "pconv.P",
        ParamKind::ConvWeights => "conv.w",
        ParamKind::ConvBias => "conv.bias",
    }
}

/// Checks input and parameter gradients of `layer` at `inputs`.
pub fn finite_diff_check<T: Scalar>(
    layer: &Layer<T>,
    inputs: &[Image<T>],
    h: T,
    tolerance: f64,
    probe_seed: u64,
) -> Result<GradCheckReport> {
    finite_diff_check_with(layer, inputs, h, tolerance, probe_seed, |_| {})
}

/// As [`finite_diff_check`], letting `tamper` modify the analytic gradients
/// before comparison.
pub fn finite_diff_check_with<T: Scalar>(
    layer: &Layer<T>,
    inputs: &[Image<T>],
    h: T,
    tolerance: f64,
    probe_seed: u64,
    tamper: impl FnOnce(&mut AnalyticGrads<T>),
) -> Result<GradCheckReport> {
    let (outs, cache) = layer.forward(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let probes: Vec<Image<T>> = outs
        .iter()
        .map(|o| Image::from_fn(o.width(), o.height(), |_, _| T::c(rng.random_range(0.5..1.5))))
        .collect();
    let (grad_inputs, grad_params) = layer.backward(&cache, &probes)?;
    let mut analytic = AnalyticGrads {
        inputs: grad_inputs,
        params: grad_params,
    };
    tamper(&mut analytic);

    let mut groups = Vec::new();
    let mut perturbed = inputs.to_vec();
    for (m, grad) in analytic.inputs.iter().enumerate() {
        let mut numeric = Vec::with_capacity(perturbed[m].len());
        for i in 0..perturbed[m].len() {
            let mut v = perturbed[m].data()[i];
            let n = central_difference(&mut v, h, |x| {
                perturbed[m].data_mut()[i] = x;
                probe_loss(layer, &perturbed, &probes)
            })?;
            perturbed[m].data_mut()[i] = v;
            numeric.push(n);
        }
        groups.push(compare(format!("input[{m}]"), grad.data(), &numeric));
    }

    let mut kinds = Vec::new();
    layer.visit_params(|kind, values| kinds.push((kind, values.len())));
    let mut work = layer.clone();
    for (t, &(kind, len)) in kinds.iter().enumerate() {
        let mut numeric = Vec::with_capacity(len);
        for i in 0..len {
            let mut orig = T::zero();
            nth_param(&mut work, t, |vals| orig = vals[i]);
            let mut v = orig;
            let n = central_difference(&mut v, h, |x| {
                nth_param(&mut work, t, |vals| vals[i] = x);
                probe_loss(&work, inputs, &probes)
            })?;
            nth_param(&mut work, t, |vals| vals[i] = orig);
            numeric.push(n);
        }
        groups.push(compare(format!("{}[{t}]", param_name(kind)), &analytic.params[t], &numeric));
    }
    Ok(GradCheckReport::new(groups, tolerance))
}

/// Random single-filter PConv instance: a 3x3 kernel with weights in
/// `[0.05, 1]` over a 7x7 image with samples in `[0.3, 1]`.
pub fn random_pconv_instance<T: Scalar>(seed: u64, order: f64) -> Result<(Layer<T>, Image<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..9).map(|_| T::c(rng.random_range(0.05..1.0))).collect();
    let params = PConvParams::new(Kernel::new(3, 3, weights)?, T::c(order))?;
    let f = Image::from_fn(7, 7, |_, _| T::c(rng.random_range(0.3..1.0)));
    Ok((Layer::PConv(PConvLayer { filters: vec![params] }), f))
}

/// Finite-difference check of one [`random_pconv_instance`].
pub fn check_pconv_instance(seed: u64, order: f64, h: f64, tolerance: f64) -> Result<GradCheckReport> {
    let (layer, f) = random_pconv_instance::<f64>(seed, order)?;
    finite_diff_check(&layer, &[f], h, tolerance, seed ^ 0x5eed)
}

fn nth_param<T: Scalar>(layer: &mut Layer<T>, n: usize, mut f: impl FnMut(&mut [T])) {
    let mut idx = 0;
    layer.visit_params_mut(|_, vals| {
        if idx == n {
            f(vals);
        }
        idx += 1;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Activation, ConvParams};

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 2.1).abs() < 1e-15);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn central_difference_of_cubic() {
        let mut x = 2.0f64;
        let d = central_difference(&mut x, 1e-5, |v| Ok(v * v * v)).unwrap();
        assert!((d - 12.0).abs() < 1e-8);
        assert_eq!(x, 2.0);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let layer = Layer::Conv(ConvParams {
            k: 3,
            kernels: vec![vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, -0.9]],
            biases: vec![0.05],
            table: ConvParams::<f64>::full_table(1, 1),
            activation: Activation::Identity,
        });
        let f = Image::from_fn(6, 6, |r, c| ((r * 13 + c * 7) % 10) as f64 / 10.0);
        let ok = finite_diff_check(&layer, std::slice::from_ref(&f), 1e-5, 1e-6, 3).unwrap();
        assert!(ok.passed, "{ok}");
        let bad = finite_diff_check_with(&layer, &[f], 1e-5, 1e-6, 3, |g| {
            for v in &mut g.params[0] {
                *v *= 1.1;
            }
        })
        .unwrap();
        assert!(!bad.passed);
    }
}
