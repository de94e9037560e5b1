use gftrees::expr::{parse, BinOp, Expr, Func, Layout};
use proptest::prelude::*;

const DIM: usize = 3;

fn layout() -> Layout {
    Layout::new(vec!["x1".into(), "e1".into(), "y".into()])
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0..DIM).prop_map(Expr::var),
        (-3.0f64..3.0).prop_map(|v| Expr::num((v * 8.0).round() / 8.0)),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul)])
                .prop_map(|(a, b, op)| Expr::Bin(op, Box::new(a), Box::new(b))),
            (inner.clone(), 0i32..4).prop_map(|(a, k)| a.powi(k)),
            inner.clone().prop_map(|a| -a),
            (inner, prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Bump), Just(Func::Step)])
                .prop_map(|(a, f)| Expr::call(f, a)),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.2f64..1.2, DIM)
}

fn scale(v: f64) -> f64 {
    1.0 + v.abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gradient_matches_central_differences(e in expr(), p in point()) {
        let t = e.compile(DIM);
        let Ok(j) = t.jet(&p) else { return Ok(()) };
        let h = 1e-6;
        for i in 0..DIM {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (t.value(&a).unwrap() - t.value(&b).unwrap()) / (2.0 * h);
            // bump/step are only C2, so allow for a kink in the third derivative
            prop_assert!((fd - j.grad[i]).abs() < 1e-4 * scale(j.grad[i]) * scale(j.value), "d{i}: fd {fd} vs {}", j.grad[i]);
        }
    }

    #[test]
    fn hessian_matches_differences_of_gradient(e in expr(), p in point()) {
        let t = e.compile(DIM);
        let Ok(j) = t.jet(&p) else { return Ok(()) };
        let h = 1e-5;
        for i in 0..DIM {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let (ga, gb) = (t.jet(&a).unwrap().grad, t.jet(&b).unwrap().grad);
            for k in 0..DIM {
                let fd = (ga[k] - gb[k]) / (2.0 * h);
                let tol = 1e-3 * scale(j.hess[(k, i)]) * scale(j.grad.amax()) * scale(j.value);
                prop_assert!((fd - j.hess[(k, i)]).abs() < tol, "H[{k},{i}]: fd {fd} vs {}", j.hess[(k, i)]);
            }
        }
    }

    #[test]
    fn hessian_is_symmetric(e in expr(), p in point()) {
        let Ok(j) = e.differentiate(&p) else { return Ok(()) };
        for i in 0..DIM {
            for k in 0..i {
                prop_assert!((j.hess[(i, k)] - j.hess[(k, i)]).abs() <= 1e-12 * scale(j.hess[(i, k)]));
            }
        }
    }

    #[test]
    fn printing_then_parsing_is_a_fixpoint(e in expr(), p in point()) {
        let l = layout();
        let s1 = e.display(&l).to_string();
        let e2 = parse(&s1, &l).map_err(|err| TestCaseError::fail(format!("{s1}: {err}")))?;
        let s2 = e2.display(&l).to_string();
        prop_assert_eq!(&s1, &s2);
        let (v1, v2) = (e.compile(DIM).value(&p), e2.compile(DIM).value(&p));
        if let (Ok(a), Ok(b)) = (v1, v2) {
            prop_assert!((a - b).abs() <= 1e-12 * scale(a), "{s1}: {a} vs {b}");
        }
    }
}

#[test]
fn bump_has_its_plateau_and_support() {
    let l = Layout::torus(1);
    let t = parse("bump(x)", &l).unwrap().compile(1);
    for (x, want) in [(0.0, 1.0), (1.0, 1.0), (-0.7, 1.0), (2.0, 0.0), (-3.0, 0.0)] {
        assert_eq!(t.value(&[x]).unwrap(), want, "bump({x})");
    }
    let j = t.jet(&[1.5]).unwrap();
    assert!((j.value - 0.5).abs() < 1e-15 && j.grad[0] < 0.0);
}

#[test]
fn fractional_powers_are_rejected() {
    let l = Layout::torus(1);
    assert!(parse("x^0.5", &l).is_err());
    assert!(parse("x^(1/2)", &l).is_err());
    assert!(parse("x^(-2)", &l).is_ok());
}
