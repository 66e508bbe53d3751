//! Online (sample-by-sample) SGD with momentum, a decaying learning rate,
//! optional gradient clipping and alternating order/kernel optimization.

use crate::datagen::{mse, psnr_from_mse};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::network::{Network, UpdateRule};
use crate::scalar::Scalar;

/// How order and kernel updates are interleaved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternation {
    Off,
    /// Blocks of `k` epochs: even blocks update kernels only, odd blocks
    /// update orders only.
    EveryEpochs(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Decay horizon in samples; `None` uses the epoch length.
    pub decay_tau: Option<f64>,
    pub momentum: f64,
    pub max_samples: u64,
    pub alternate: Alternation,
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub eval_every: u64,
    /// Stop after this many evaluations without improvement.
    pub patience: Option<usize>,
    /// Samples per epoch; `None` uses the stream's dataset size.
    pub epoch_len: Option<u64>,
    /// Learning-rate multiplier for PConv orders.
    pub order_lr_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            decay_tau: None,
            momentum: 0.9,
            max_samples: 10_000,
            alternate: Alternation::Off,
            grad_clip: Some(1.0),
            seed: 0,
            eval_every: 500,
            patience: None,
            epoch_len: None,
            order_lr_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr0 >= 0.0) || !self.lr0.is_finite() {
            return bad("train.lr0 must be a finite non-negative number");
        }
        if matches!(self.decay_tau, Some(t) if !(t > 0.0)) {
            return bad("train.decay_tau must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("train.momentum must lie in [0, 1)");
        }
        if self.eval_every == 0 {
            return bad("train.eval_every must be positive");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("train.grad_clip must be positive");
        }
        if matches!(self.alternate, Alternation::EveryEpochs(0)) || self.epoch_len == Some(0) {
            return bad("epoch counts must be positive");
        }
        Ok(())
    }
}

/// `lr0 / (1 + t / tau)`
pub fn lr_schedule(lr0: f64, decay_tau: f64, t: u64) -> f64 {
    lr0 / (1.0 + t as f64 / decay_tau)
}

/// One training pair, target already at the network's output geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub input: Image<T>,
    pub target: Image<T>,
}

/// Source of training pairs, addressed by sample index so that streams are
/// reproducible however they are consumed.
pub trait SampleStream<T> {
    fn sample(&mut self, index: u64) -> Result<Sample<T>>;
    /// Size of the underlying finite dataset, if any.
    fn dataset_len(&self) -> Option<u64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub sample: u64,
    /// Mean training loss since the previous point.
    pub train_loss: f64,
    pub eval_mse: f64,
    pub eval_psnr: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub curve: Vec<CurvePoint>,
    pub best: Network<T>,
    pub best_eval_mse: f64,
    pub best_sample: u64,
    pub initial_eval_mse: f64,
    pub samples: u64,
    pub stopped_early: bool,
    /// Largest gradient norm passed to an update (after clipping).
    pub max_applied_norm: f64,
}

impl<T> TrainReport<T> {
    /// Loss curve as CSV (`sample_index,train_loss,eval_mse,eval_psnr,lr`).
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("sample_index,train_loss,eval_mse,eval_psnr,lr\n");
        for p in &self.curve {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.sample, p.train_loss, p.eval_mse, p.eval_psnr, p.lr
            ));
        }
        out
    }
}

/// Mean MSE of `net` over `samples`.
pub fn evaluate<T: Scalar>(net: &Network<T>, samples: &[Sample<T>]) -> Result<f64> {
    let per_sample = |s: &Sample<T>| -> Result<f64> {
        let pred = net.predict(&s.input)?;
        Ok(mse(&pred, &s.target)?.to_f64_lossy())
    };
    let results: Vec<Result<f64>> = if samples.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = samples.iter().map(|s| scope.spawn(move || per_sample(s))).collect();
            handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
        })
    } else {
        samples.iter().map(per_sample).collect()
    };
    let total = results.into_iter().sum::<Result<f64>>()?;
    Ok(total / samples.len().max(1) as f64)
}

/// Trains `net` in place. `net` ends with the final parameters; the best
/// held-out snapshot is returned in the report.
pub fn train_online<T: Scalar>(
    net: &mut Network<T>,
    stream: &mut dyn SampleStream<T>,
    eval: &[Sample<T>],
    config: &TrainConfig,
) -> Result<TrainReport<T>> {
    config.validate()?;
    if eval.is_empty() {
        return Err(Error::InvalidConfig("training needs at least one held-out sample".into()));
    }
    let epoch_len = config
        .epoch_len
        .or(stream.dataset_len())
        .unwrap_or(config.eval_every)
        .max(1);
    let tau = config.decay_tau.unwrap_or(epoch_len as f64);

    let initial = evaluate(net, eval)?;
    let mut report = TrainReport {
        curve: vec![CurvePoint {
            sample: 0,
            train_loss: f64::NAN,
            eval_mse: initial,
            eval_psnr: psnr_from_mse(initial),
            lr: config.lr0,
        }],
        best: net.clone(),
        best_eval_mse: initial,
        best_sample: 0,
        initial_eval_mse: initial,
        samples: 0,
        stopped_early: false,
        max_applied_norm: 0.0,
    };
    let mut window_loss = 0.0;
    let mut window_count = 0u64;
    let mut stale = 0usize;

    for t in 0..config.max_samples {
        let lr = lr_schedule(config.lr0, tau, t);
        let sample = stream.sample(t)?;
        let pass = net.forward(&sample.input)?;
        let grads = net.backward(&pass, &sample.target)?;
        if !grads.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                sample: t,
                p_values: net.orders().iter().map(|p| p.to_f64_lossy()).collect(),
                min_denominator: pass.min_denominator().to_f64_lossy(),
            });
        }
        let (freeze_orders, freeze_weights) = match config.alternate {
            Alternation::Off => (false, false),
            Alternation::EveryEpochs(k) => {
                let learn_orders = (t / epoch_len / k) % 2 == 1;
                (!learn_orders, learn_orders)
            }
        };
        let rule = UpdateRule {
            lr: T::c(lr),
            momentum: T::c(config.momentum),
            clip: config.grad_clip.map(T::c),
            order_lr_scale: T::c(config.order_lr_scale),
            freeze_orders,
            freeze_weights,
        };
        let applied = net.apply_update(&grads, &rule)?.to_f64_lossy();
        report.max_applied_norm = report.max_applied_norm.max(applied);
        window_loss += grads.loss.to_f64_lossy();
        window_count += 1;
        report.samples = t + 1;

        if (t + 1) % config.eval_every == 0 || t + 1 == config.max_samples {
            let eval_mse = evaluate(net, eval)?;
            report.curve.push(CurvePoint {
                sample: t + 1,
                train_loss: window_loss / window_count as f64,
                eval_mse,
                eval_psnr: psnr_from_mse(eval_mse),
                lr,
            });
            window_loss = 0.0;
            window_count = 0;
            if eval_mse < report.best_eval_mse {
                report.best_eval_mse = eval_mse;
                report.best_sample = t + 1;
                report.best = net.clone();
                stale = 0;
            } else {
                stale += 1;
                if config.patience.is_some_and(|p| stale >= p) {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0.5, 100.0, 0), 0.5);
        assert_eq!(lr_schedule(0.5, 100.0, 100), 0.25);
        assert_eq!(lr_schedule(0.5, 100.0, 300), 0.125);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { lr0: -1.0, ..Default::default() },
            TrainConfig { decay_tau: Some(0.0), ..Default::default() },
            TrainConfig { eval_every: 0, ..Default::default() },
            TrainConfig { alternate: Alternation::EveryEpochs(0), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
