use morphlearn::layers::gradcheck::check_pconv_instance;
use morphlearn::network::{Gradients, UpdateRule};
use morphlearn::{Image64, Network64, NetworkSpec};

const ORDERS: [f64; 9] = [-10.0, -5.0, -1.0, -0.5, 0.0, 0.5, 1.0, 5.0, 10.0];

#[test]
fn pconv_layer_matches_finite_differences() {
    for seed in 0..20 {
        for p in ORDERS {
            let report = check_pconv_instance(seed, p, 1e-5, 1e-4).unwrap();
            assert!(report.passed, "seed {seed} P {p}\n{report}");
        }
    }
}

fn loss(net: &Network64, input: &Image64, target: &Image64) -> f64 {
    net.backward(&net.forward(input).unwrap(), target).unwrap().loss
}

/// Moves one parameter entry by `delta` through a plain SGD step.
fn nudge(net: &Network64, template: &Gradients<f64>, at: (usize, usize, usize), delta: f64) -> Network64 {
    let mut g = template.clone();
    for tensor in g.params.iter_mut().flatten() {
        tensor.iter_mut().for_each(|v| *v = 0.0);
    }
    g.params[at.0][at.1][at.2] = -1.0;
    let mut moved = net.clone();
    moved.apply_update(&g, &UpdateRule::sgd(delta, 0.0)).unwrap();
    moved
}

#[test]
fn whole_network_matches_finite_differences() {
    let spec = NetworkSpec::new(
        [
            "pconv k=3 filters=2 p=-/+ in=input",
            "pconv k=3 filters=2 p=+/- in=0",
            "conv k=1 out=1 in=input,1",
            "absdiff in=input,2",
        ]
        .iter()
        .map(|l| l.parse().unwrap())
        .collect(),
    );
    let h = 1e-5;
    for seed in 0..3 {
        let net = Network64::build(&spec, seed).unwrap();
        let input = Image64::from_fn(11, 11, |r, c| 0.3 + 0.7 * (((r * 31 + c * 17 + seed as usize * 5) % 23) as f64 / 22.0));
        let target = Image64::from_fn(7, 7, |r, c| 0.1 * ((r + 2 * c) % 5) as f64);
        let grads = net.backward(&net.forward(&input).unwrap(), &target).unwrap();
        let mut worst = 0.0f64;
        for (li, tensors) in grads.params.iter().enumerate() {
            for (ti, tensor) in tensors.iter().enumerate() {
                for (ei, &analytic) in tensor.iter().enumerate() {
                    let up = loss(&nudge(&net, &grads, (li, ti, ei), h), &input, &target);
                    let down = loss(&nudge(&net, &grads, (li, ti, ei), -h), &input, &target);
                    let numeric = (up - down) / (2.0 * h);
                    let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
    }
}
