use approx::assert_relative_eq;
use morphlearn::chm::{chm_filter, pseudo_close, pseudo_erosion_deviation, sup_distance};
use morphlearn::morphology::{close, StructuringElement};
use morphlearn::{Image64, Kernel64};
use proptest::prelude::*;

fn positive_image(side: usize) -> impl Strategy<Value = Image64> {
    prop::collection::vec(0.05f64..1.0, side * side).prop_map(move |v| Image64::new(side, side, v).unwrap())
}

fn kernel(k: usize) -> impl Strategy<Value = Kernel64> {
    prop::collection::vec(1e-3f64..1.0, k * k).prop_map(move |w| Kernel64::new(k, k, w).unwrap())
}

fn window_extrema(f: &Image64, k: usize, r: usize, c: usize) -> (f64, f64) {
    let w = f.window(r, c, k, k).unwrap();
    (w.min_value(), w.max_value())
}

proptest! {
    #[test]
    fn output_stays_inside_the_window_range(f in positive_image(9), w in kernel(3), p in -20.0f64..20.0) {
        let out = chm_filter(&f, &w, p).unwrap();
        for r in 0..out.height() {
            for c in 0..out.width() {
                let (lo, hi) = window_extrema(&f, 3, r, c);
                let v = out.get(r, c);
                prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12), "{lo} <= {v} <= {hi}");
            }
        }
    }

    #[test]
    fn increasing_in_the_order(f in positive_image(8), w in kernel(3), p in -19.0f64..19.0, dp in 0.01f64..1.0) {
        let lo = chm_filter(&f, &w, p).unwrap();
        let hi = chm_filter(&f, &w, p + dp).unwrap();
        for (a, b) in lo.data().iter().zip(hi.data()) {
            prop_assert!(a <= &(b * (1.0 + 1e-12)), "{a} > {b}");
        }
    }

    #[test]
    fn homogeneous_of_degree_one(f in positive_image(7), w in kernel(3), p in -10.0f64..10.0, s in 0.2f64..1.0) {
        let base = chm_filter(&f, &w, p).unwrap();
        let scaled = chm_filter(&f.map(|v| v * s), &w, p).unwrap();
        for (a, b) in base.data().iter().zip(scaled.data()) {
            prop_assert!((a * s - b).abs() <= 1e-11 * b);
        }
    }
}

#[test]
fn order_zero_is_the_weighted_mean() {
    let f = Image64::from_fn(5, 5, |r, c| 0.1 + 0.03 * (r * 5 + c) as f64);
    let w = Kernel64::new(3, 3, (1..=9).map(f64::from).collect()).unwrap();
    let out = chm_filter(&f, &w, 0.0).unwrap();
    let total: f64 = w.weights().iter().sum();
    for r in 0..3 {
        for c in 0..3 {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += w.weights()[i * 3 + j] * f.get(r + i, c + j);
                }
            }
            assert_relative_eq!(out.get(r, c), acc / total, max_relative = 1e-12);
        }
    }
}

#[test]
fn erosion_and_closing_limits() {
    let f = Image64::from_fn(24, 24, |r, c| 0.2 + 0.7 * ((r * 7 + c * 13) % 17) as f64 / 16.0);
    let se = StructuringElement::square(3).unwrap();
    let devs: Vec<f64> = [-5.0, -10.0, -20.0]
        .iter()
        .map(|&p| pseudo_erosion_deviation(&f, &se, p).unwrap())
        .collect();
    assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");

    let flat = Kernel64::flat(3).unwrap();
    let exact = close(&f, &se).unwrap();
    let near = sup_distance(&pseudo_close(&f, &flat, 15.0).unwrap(), &exact).unwrap();
    let far = sup_distance(&pseudo_close(&f, &flat, 5.0).unwrap(), &exact).unwrap();
    assert!(near < far, "{near} vs {far}");
}

#[test]
fn rejects_non_positive_inputs() {
    let f = Image64::from_fn(4, 4, |r, _| if r == 2 { 0.0 } else { 0.5 });
    assert!(chm_filter(&f, &Kernel64::flat(3).unwrap(), 1.0).is_err());
}
