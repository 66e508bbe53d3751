use morphlearn::morphology::{black_top_hat, close, dilate, erode, open, white_top_hat, StructuringElement};
use morphlearn::Image64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_elements() -> Vec<(String, StructuringElement)> {
    let mut out = Vec::new();
    for n in 1..=5 {
        out.push((format!("square {n}"), StructuringElement::square(n).unwrap()));
        out.push((format!("diamond {n}"), StructuringElement::diamond(n).unwrap()));
        out.push((format!("disk {n}"), StructuringElement::disk(n).unwrap()));
    }
    for len in [1, 2, 3, 4, 5] {
        for angle in [0, 45, 90, 135] {
            out.push((format!("line {len} {angle}"), StructuringElement::line(len, angle).unwrap()));
        }
    }
    // An irregular element with an off-centre mass.
    let mask = vec![true, true, false, false, true, false, false, false, true];
    out.push(("irregular".into(), StructuringElement::from_mask(3, 3, mask).unwrap()));
    out
}

fn random_image(rng: &mut ChaCha8Rng, side: usize) -> Image64 {
    Image64::from_fn(side, side, |_, _| (rng.random_range(0..256u32) as f64 + 0.5) / 256.0)
}

/// Direct evaluation of `sup_b f(x - b)` / `inf_b f(x + b)` over the
/// valid region, read straight off the mask.
fn brute_force(f: &Image64, se: &StructuringElement, dilation: bool) -> Image64 {
    let (or, oc) = se.origin();
    let (ow, oh) = (f.width() - se.width() + 1, f.height() - se.height() + 1);
    Image64::from_fn(ow, oh, |r, c| {
        let (cr, cc) = ((r + or) as isize, (c + oc) as isize);
        let mut acc = if dilation { f64::NEG_INFINITY } else { f64::INFINITY };
        for i in 0..se.height() {
            for j in 0..se.width() {
                if !se.contains(i, j) {
                    continue;
                }
                let (br, bc) = (i as isize - or as isize, j as isize - oc as isize);
                let v = if dilation {
                    f.get((cr - br) as usize, (cc - bc) as usize)
                } else {
                    f.get((cr + br) as usize, (cc + bc) as usize)
                };
                acc = if dilation { acc.max(v) } else { acc.min(v) };
            }
        }
        acc
    })
}

fn crop(img: &Image64, like: &Image64) -> Image64 {
    img.center_crop(like.width(), like.height()).unwrap()
}

fn assert_le(a: &Image64, b: &Image64, what: &str) {
    assert_eq!(a.dims(), b.dims(), "{what}");
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!(x <= y, "{what}: {x} > {y}");
    }
}

/// 50 random 12x12 images against every constructor.
#[test]
fn exhaustive_oracle_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let images: Vec<Image64> = (0..50).map(|_| random_image(&mut rng, 12)).collect();
    let mut checked_idempotence = 0;
    for (name, se) in all_elements() {
        let reflected = se.reflect();
        for f in &images {
            let d = dilate(f, &se).unwrap();
            let e = erode(f, &se).unwrap();
            assert_eq!(d, brute_force(f, &se, true), "{name}: dilation");
            assert_eq!(e, brute_force(f, &se, false), "{name}: erosion");

            let o = open(f, &se).unwrap();
            let c = close(f, &se).unwrap();
            // erode <= open <= f <= close <= dilate on the common region.
            let core = &o;
            assert_le(&crop(&e, core), core, &format!("{name}: erode <= open"));
            assert_le(core, &crop(f, core), &format!("{name}: open <= f"));
            assert_le(&crop(f, &c), &c, &format!("{name}: f <= close"));
            assert_le(&c, &crop(&d, &c), &format!("{name}: close <= dilate"));

            // Idempotence on the doubly valid region, where one exists.
            if o.width() > 2 * (se.width() - 1) && o.height() > 2 * (se.height() - 1) {
                let oo = open(&o, &se).unwrap();
                assert_eq!(oo, crop(&o, &oo), "{name}: open idempotent");
                let cc = close(&c, &se).unwrap();
                assert_eq!(cc, crop(&c, &cc), "{name}: close idempotent");
                checked_idempotence += 1;
            }

            // Duality under negation with the reflected element.
            let neg = f.map(|v| -v);
            assert_eq!(e, dilate(&neg, &reflected).unwrap().map(|v| -v), "{name}: erode/dilate duality");
            assert_eq!(c, open(&neg, &reflected).unwrap().map(|v| -v), "{name}: open/close duality");

            // Top-hats are non-negative residues.
            assert!(white_top_hat(f, &se).unwrap().data().iter().all(|&v| v >= 0.0), "{name}");
            assert!(black_top_hat(f, &se).unwrap().data().iter().all(|&v| v >= 0.0), "{name}");
        }
    }
    // Every element whose box is at most 3 wide fits twice into 12x12.
    assert!(checked_idempotence >= 50 * 22, "{checked_idempotence}");
}

fn element() -> impl Strategy<Value = StructuringElement> {
    prop_oneof![
        (1usize..6).prop_map(|n| StructuringElement::square(n).unwrap()),
        (1usize..6).prop_map(|n| StructuringElement::diamond(n).unwrap()),
        (1usize..6).prop_map(|n| StructuringElement::disk(n).unwrap()),
        (1usize..6, prop_oneof![Just(0u32), Just(45), Just(90), Just(135)])
            .prop_map(|(n, a)| StructuringElement::line(n, a).unwrap()),
    ]
}

fn image(side: usize) -> impl Strategy<Value = Image64> {
    prop::collection::vec(0.0f64..1.0, side * side).prop_map(move |v| Image64::new(side, side, v).unwrap())
}

proptest! {
    #[test]
    fn dilation_is_increasing(f in image(14), bump in image(14), se in element()) {
        let g = f.zip_map(&bump, |a, b| a + b).unwrap();
        assert_le(&dilate(&f, &se).unwrap(), &dilate(&g, &se).unwrap(), "dilate increasing");
        assert_le(&erode(&f, &se).unwrap(), &erode(&g, &se).unwrap(), "erode increasing");
    }

    #[test]
    fn dilation_commutes_with_constant_shift(f in image(14), k in -1.0f64..1.0, se in element()) {
        let shifted = f.map(|v| v + k);
        let lhs = dilate(&shifted, &se).unwrap();
        let rhs = dilate(&f, &se).unwrap().map(|v| v + k);
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
