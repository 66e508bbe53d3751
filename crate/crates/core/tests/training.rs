use morphlearn::datagen::{gen_pairs, substream, synth_scene, Operator, SceneSpec, TaskSpec};
use morphlearn::network::write_params;
use morphlearn::training::{Alternation, Sample};
use morphlearn::{train_online, Image64, Network64, NetworkSpec, TrainConfig, TrainReport};

fn spec() -> NetworkSpec {
    NetworkSpec::new(vec!["pconv k=3 p=1 in=input".parse().unwrap()])
}

fn images() -> Vec<Image64> {
    (0..3)
        .map(|i| synth_scene(24, 24, &SceneSpec::default(), &mut substream(9, i)).unwrap())
        .collect()
}

fn task() -> TaskSpec {
    let mut task = TaskSpec::new("dilate:square:2".parse::<Operator>().unwrap());
    task.patch = Some(12);
    task.seed = 4;
    task
}

fn train(config: &TrainConfig) -> (Network64, TrainReport<f64>) {
    let mut net = Network64::build(&spec(), 1).unwrap();
    let mut stream = gen_pairs(&images(), &task(), 2).unwrap();
    let eval: Vec<Sample<f64>> = stream.full_pairs(0).unwrap();
    let report = train_online(&mut net, &mut stream, &eval, config).unwrap();
    (net, report)
}

fn base() -> TrainConfig {
    TrainConfig {
        lr0: 0.01,
        max_samples: 40,
        eval_every: 10,
        order_lr_scale: 100.0,
        ..Default::default()
    }
}

fn split(net: &Network64) -> (Vec<f64>, Vec<f64>) {
    let (_, _, p) = net.pconv_filters().next().unwrap();
    (p.kernel.weights().to_vec(), vec![p.order])
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let (net, report) = train(&TrainConfig { lr0: 0.0, ..base() });
    assert_eq!(net, Network64::build(&spec(), 1).unwrap());
    assert_eq!(report.samples, 40);
    assert!(report.curve.iter().all(|p| p.eval_mse == report.initial_eval_mse));
}

#[test]
fn runs_are_reproducible() {
    let (a, ra) = train(&base());
    let (b, rb) = train(&base());
    assert_eq!(write_params(&a), write_params(&b));
    assert_eq!(ra.curve_csv(), rb.curve_csv());
    assert_eq!(write_params(&ra.best), write_params(&rb.best));
}

#[test]
fn training_reduces_the_held_out_error() {
    let (_, report) = train(&TrainConfig { max_samples: 400, eval_every: 100, ..base() });
    assert!(report.best_eval_mse < report.initial_eval_mse);
    assert!(report.best_sample > 0);
    assert_eq!(report.curve.len(), 5);
}

#[test]
fn applied_gradient_respects_the_clip() {
    let clip = 1e-3;
    let (_, report) = train(&TrainConfig { grad_clip: Some(clip), ..base() });
    assert!(report.max_applied_norm > 0.0);
    assert!(report.max_applied_norm <= clip * (1.0 + 1e-9), "{}", report.max_applied_norm);
}

#[test]
fn alternation_freezes_one_group_per_block() {
    let alt = |samples| TrainConfig {
        max_samples: samples,
        alternate: Alternation::EveryEpochs(1),
        epoch_len: Some(10),
        ..base()
    };
    let start = split(&Network64::build(&spec(), 1).unwrap());
    let (first, _) = train(&alt(10));
    let (second, _) = train(&alt(20));
    let (first, second) = (split(&first), split(&second));
    // Block 0 moves kernels only.
    assert_eq!(first.1, start.1);
    assert_ne!(first.0, start.0);
    // Block 1 moves orders only.
    assert_eq!(second.0, first.0);
    assert_ne!(second.1, first.1);
}

#[test]
fn patience_stops_a_stalled_run() {
    let (_, report) = train(&TrainConfig { lr0: 0.0, patience: Some(2), ..base() });
    assert!(report.stopped_early);
    assert_eq!(report.samples, 20);
}
