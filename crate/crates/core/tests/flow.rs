use std::path::Path;

use gftrees::config::RunConfig;
use gftrees::flow::{integrate, Anchor, FlowOpts, Termination};
use gftrees::pipeline::Gf;
use gftrees::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(name: &str) -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)).unwrap()
}

#[test]
fn values_increase_along_trajectories() {
    for name in ["unknot.json", "two_copy_circle.json"] {
        let gf = Gf::setup(&cfg(name), Exec::default()).unwrap();
        let stop: Vec<Anchor> = gf.crits.iter().map(|c| Anchor::from_crit(&gf.w, c).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..12 {
            let x: Vec<f64> = gf.w.domain.0.iter().map(|iv| 0.8 * rng.random_range(iv[0]..iv[1])).collect();
            for sign in [1.0, -1.0] {
                let t = integrate(&gf.w, &x, sign, &stop, &gf.opts);
                for v in t.values.windows(2) {
                    assert!(sign * (v[1] - v[0]) >= -1e-12, "{name}: value went {} -> {} (sign {sign})", v[0], v[1]);
                }
                assert!(!matches!(t.termination, Termination::Failed(_)), "{name}: {:?}", t.termination);
            }
        }
    }
}

#[test]
fn trajectories_stay_in_the_escape_box_or_report_it() {
    let gf = Gf::setup(&cfg("unknot.json"), Exec::default()).unwrap();
    let stop: Vec<Anchor> = gf.crits.iter().map(|c| Anchor::from_crit(&gf.w, c).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x: Vec<f64> = gf.w.domain.0.iter().map(|iv| rng.random_range(iv[0]..iv[1])).collect();
        let t = integrate(&gf.w, &x, 1.0, &stop, &gf.opts);
        let inside = t.points[..t.points.len() - 1].iter().all(|p| gf.w.in_escape(p));
        assert!(inside, "left K' before the last sample");
        if !gf.w.in_escape(t.points.last().unwrap()) {
            assert_eq!(t.termination, Termination::Escaped);
        }
    }
}

/// The differential of w as (from, to, count) rows.
fn delta(mut c: RunConfig, edit: impl Fn(&mut RunConfig)) -> Vec<(String, String, usize)> {
    edit(&mut c);
    let gf = Gf::setup(&c, Exec::default()).unwrap();
    gf.lines(None).unwrap().entries.into_iter().map(|e| (e.from, e.to, e.count)).collect()
}

#[test]
fn differential_ignores_chart_radius_and_ode_tolerance() {
    let base = cfg("two_copy_circle.json");
    let want = delta(base.clone(), |_| {});
    assert!(want.iter().any(|e| e.2 > 0), "expected some connecting lines: {want:?}");
    assert_eq!(delta(base.clone(), |c| c.tolerances.r0 = 5e-3), want, "r0 halved");
    assert_eq!(
        delta(base, |c| {
            c.tolerances.ode_rtol /= 2.0;
            c.tolerances.ode_atol /= 2.0;
        }),
        want,
        "ODE tolerance halved"
    );
}

#[test]
fn flow_options_follow_the_tolerances() {
    let mut c = cfg("unknot.json");
    c.tolerances.r0 = 4e-3;
    c.tolerances.strict = true;
    let o = FlowOpts::from_tol(&c.tolerances);
    assert_eq!(o.r0, 4e-3);
    assert!(o.strict);
}
