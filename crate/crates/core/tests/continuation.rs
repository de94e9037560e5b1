use std::path::{Path, PathBuf};

use gftrees::complex::Mat2;
use gftrees::config::{PathConfig, PathEnd, RunConfig};
use gftrees::continuation::{cochain_defect, isotopy_compare, FamilyPath};
use gftrees::pipeline::{Gf, GfRun};
use gftrees::{Error, Exec};

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

#[test]
fn constant_path_is_the_identity_on_every_field() {
    let exec = Exec::default();
    let (_, fp) = FamilyPath::load(&corpus("constant_path.json"), exec).unwrap();
    assert!(fp.epsilon / 4.0 < fp.start.rho.rho);
    let r0 = GfRun::from_setup(fp.start.clone(), 7, true).unwrap();
    let r1 = GfRun::from_setup(fp.end.clone(), 7, true).unwrap();
    let iso = isotopy_compare(&fp, &r0, &r1, exec).unwrap();
    assert_eq!(iso.maps.len(), 4);
    for m in &iso.maps {
        assert_eq!(m.phi.matrix, Mat2::identity(r0.gf.chords.len()), "{}", m.phi.field);
        assert!(m.cochain_defect.is_empty());
    }
    assert!(iso.passed(), "{:?}", iso.verdict);
    assert!(fp.degenerate_slices().is_empty());
}

#[test]
fn misaligned_endpoints_are_refused() {
    let exec = Exec::default();
    let a = Gf::setup(&RunConfig::load(&corpus("unknot.json")).unwrap(), exec).unwrap();
    let b = Gf::setup(&RunConfig::load(&corpus("two_copy_circle.json")).unwrap(), exec).unwrap();
    let err = FamilyPath::from_setups(a, b, None, 3, exec).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn only_the_quintic_blend_is_offered() {
    let cfg = RunConfig::load(&corpus("unknot.json")).unwrap();
    let pc = PathConfig {
        start: PathEnd::Inline(Box::new(cfg.clone())),
        end: PathEnd::Inline(Box::new(cfg.clone())),
        sigma: "linear".into(),
        epsilon: None,
        t_samples: 3,
    };
    let err = FamilyPath::new(&pc, &cfg, &cfg, Exec::default()).unwrap_err();
    assert!(err.is_input_error(), "{err}");
}

#[test]
fn too_large_epsilon_is_rejected() {
    let exec = Exec::default();
    let g = Gf::setup(&RunConfig::load(&corpus("unknot.json")).unwrap(), exec).unwrap();
    let eps = 4.0 * g.rho.rho;
    let err = FamilyPath::from_setups(g.clone(), g, Some(eps), 3, exec).unwrap_err();
    assert!(matches!(err, Error::Continuation(_)), "{err}");
}

#[test]
fn cochain_defect_sees_a_broken_square() {
    // d0 = d1: a -> b; phi swapping a and b is not a cochain map
    let d = Mat2::from_rows(&[vec![0, 0], vec![1, 0]]);
    let swap = Mat2::from_rows(&[vec![0, 1], vec![1, 0]]);
    assert!(cochain_defect(&Mat2::identity(2), &d, &d).is_empty());
    assert!(!cochain_defect(&swap, &d, &d).is_empty());
}
