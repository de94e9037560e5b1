#![allow(clippy::needless_range_loop)]

use std::path::Path;

use gftrees::config::RunConfig;
use gftrees::family::{GeneratingFamily, QuadraticLike};
use proptest::prelude::*;

fn corpus(name: &str) -> GeneratingFamily {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name);
    RunConfig::load(&p).unwrap().build_family().unwrap()
}

fn families() -> Vec<GeneratingFamily> {
    vec![corpus("unknot.json"), corpus("two_copy_circle.json"), corpus("unknot_fpd.json"), corpus("unknot.json").stabilize(1.0)]
}

/// (x, e1, e2, e3) in a box twice the outer one, from unit-cube coordinates.
fn spread(f: &GeneratingFamily, t: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..f.n {
        let iv = f.outer_box.0[i];
        out.push(iv[0] + (iv[1] - iv[0]) * t[i]);
    }
    for k in 0..3 {
        for j in 0..f.nf {
            let iv = f.outer_box.0[f.n + j];
            let c = 0.5 * (iv[0] + iv[1]);
            out.push(c + 2.0 * (iv[1] - iv[0]) * (t[f.n + k * f.nf + j] - 0.5));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extended_functions_jump_by_the_quadratic_sum(which in 0usize..4, t in proptest::collection::vec(0.0f64..1.0, 8)) {
        let f = &families()[which];
        let q = QuadraticLike::standard(f.nf, 0.5);
        let y = spread(f, &t);
        let (n, nf) = (f.n, f.nf);
        let [w12, w23, w13] = [(1, 2), (2, 3), (1, 3)].map(|(i, j)| f.extend(i, j, &q).unwrap().value(&y).unwrap());
        let qt = q.expr.compile(nf);
        let qsum: f64 = (0..3).map(|k| qt.value(&y[n + k * nf..n + (k + 1) * nf]).unwrap()).sum();
        let jump = w12 + w23 - w13;
        prop_assert!((jump - qsum).abs() < 1e-10 * (1.0 + qsum.abs()), "w12 + w23 - w13 = {jump}, Q sum = {qsum}");
    }

    #[test]
    fn difference_function_is_antisymmetric(which in 0usize..4, t in proptest::collection::vec(0.0f64..1.0, 8)) {
        let f = &families()[which];
        let y = spread(f, &t);
        let (n, nf) = (f.n, f.nf);
        let w = f.difference();
        let a: Vec<f64> = y[..n + 2 * nf].to_vec();
        let mut b = y[..n].to_vec();
        b.extend_from_slice(&y[n + nf..n + 2 * nf]);
        b.extend_from_slice(&y[n..n + nf]);
        let (va, vb) = (w.value(&a).unwrap(), w.value(&b).unwrap());
        prop_assert!((va + vb).abs() < 1e-12 * (1.0 + va.abs()));
    }

    #[test]
    fn families_are_linear_outside_the_outer_box(which in 0usize..4, seed in any::<u64>()) {
        let f = &families()[which];
        prop_assert!(f.exterior_residual(200, seed).unwrap() < 1e-10);
    }
}

#[test]
fn stabilization_adds_one_fiber_and_keeps_the_chart() {
    let f = corpus("unknot.json");
    let s = f.stabilize(-1.0);
    assert_eq!((s.n, s.nf), (f.n, f.nf + 1));
    assert_eq!(s.slope.last(), Some(&0.0));
    let fv = f.field.compile(2);
    let sv = s.field.compile(3);
    for p in [[0.3, -0.4], [1.0, 0.9], [-0.2, 0.0]] {
        let e = 0.7;
        let want = fv.value(&p).unwrap() - e * e;
        assert!((sv.value(&[p[0], p[1], e]).unwrap() - want).abs() < 1e-14);
    }
}
