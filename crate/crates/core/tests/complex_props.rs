use std::collections::{BTreeMap, BTreeSet};

use gftrees::complex::{compare_rings, ChordComplex, Generator, Mat2};
use proptest::prelude::*;

/// Per grading 0..4: (free generators, acyclic pairs starting there).
fn shape() -> impl Strategy<Value = Vec<(usize, usize)>> {
    proptest::collection::vec((0usize..3, 0usize..3), 4)
}

/// Direct sum of free generators and pairs a -> b, in standard position.
fn standard(shape: &[(usize, usize)]) -> (Vec<Generator>, Mat2, BTreeMap<i64, usize>) {
    let mut gens = Vec::new();
    let mut edges = Vec::new();
    let mut ranks = BTreeMap::new();
    for (g, &(free, pairs)) in shape.iter().enumerate() {
        let g = g as i64;
        for _ in 0..free {
            gens.push(g);
        }
        if free > 0 {
            *ranks.entry(g).or_insert(0) += free;
        }
        for _ in 0..pairs {
            gens.push(g);
            gens.push(g + 1);
            edges.push((gens.len() - 1, gens.len() - 2));
        }
    }
    let n = gens.len();
    let mut d = Mat2::zeros(n, n);
    for (q, p) in edges {
        d.set(q, p, true);
    }
    let gens = gens.into_iter().enumerate().map(|(i, g)| Generator { id: format!("g{i}"), grading: g, value: i as f64 }).collect();
    (gens, d, ranks)
}

/// Conjugate by elementary row additions inside each grading (E = E^-1 over Z2).
fn scramble(gens: &[Generator], d: &Mat2, ops: &[(usize, usize)]) -> Mat2 {
    let n = gens.len();
    let mut d = d.clone();
    for &(a, b) in ops {
        let (i, j) = (a % n.max(1), b % n.max(1));
        if n == 0 || i == j || gens[i].grading != gens[j].grading {
            continue;
        }
        let mut e = Mat2::identity(n);
        e.set(i, j, true);
        d = e.mul(&d).mul(&e);
    }
    d
}

fn ops() -> impl Strategy<Value = Vec<(usize, usize)>> {
    proptest::collection::vec((0usize..64, 0usize..64), 0..40)
}

fn bits(n: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
    proptest::collection::vec(proptest::collection::vec(0u8..2, n), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ranks_survive_change_of_basis(sh in shape(), ops in ops()) {
        let (gens, d0, ranks) = standard(&sh);
        let d = scramble(&gens, &d0, &ops);
        prop_assert!(d.mul(&d).is_zero());
        let c = ChordComplex::single(gens, d, BTreeSet::new()).unwrap();
        let ring = c.cohomology().unwrap();
        prop_assert_eq!(ring.ranks(), &ranks);
        prop_assert!(ring.mu_is_zero());
        for h in &ring.h {
            for cl in &h.classes {
                prop_assert!(c.delta[0].mul_vec(&cl.rep).iter().all(|v| *v == 0), "class {} is not a cocycle", cl.label);
            }
        }
    }

    #[test]
    fn identity_comparison_passes_and_detects_nothing(sh in shape(), ops in ops()) {
        let (gens, d0, _) = standard(&sh);
        let d = scramble(&gens, &d0, &ops);
        let n = gens.len();
        let ring = ChordComplex::single(gens, d, BTreeSet::new()).unwrap().cohomology().unwrap();
        let id = Mat2::identity(n);
        prop_assert!(compare_rings(&ring, &ring, [&id, &id, &id]).unwrap().passed());
    }

    #[test]
    fn kernel_dimension_is_nullity(rows in bits(6)) {
        let m = Mat2::from_rows(&rows);
        let k = m.kernel();
        prop_assert_eq!(k.len(), m.cols() - m.rank());
        for v in &k {
            prop_assert!(m.mul_vec(v).iter().all(|x| *x == 0));
        }
    }

    #[test]
    fn solve_returns_a_preimage(rows in bits(5), x in proptest::collection::vec(0u8..2, 5)) {
        let m = Mat2::from_rows(&rows);
        let b = m.mul_vec(&x);
        let y = m.solve(&b).expect("b is in the image");
        prop_assert_eq!(m.mul_vec(&y), b);
    }

    #[test]
    fn multiplication_is_associative(a in bits(4), b in bits(4), c in bits(4)) {
        let (a, b, c) = (Mat2::from_rows(&a), Mat2::from_rows(&b), Mat2::from_rows(&c));
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert!(a.add(&a).is_zero());
    }
}

fn gen(id: &str, grading: i64, value: f64) -> Generator {
    Generator { id: id.into(), grading, value }
}

#[test]
fn a_corrupted_differential_is_localized() {
    // a -> b -> c with delta(a) = b, delta(b) = c breaks delta^2
    let gens = vec![gen("a", 0, 1.0), gen("b", 1, 2.0), gen("c", 2, 3.0)];
    let d = Mat2::from_rows(&[vec![0, 0, 0], vec![1, 0, 0], vec![0, 1, 0]]);
    let c = ChordComplex::single(gens, d, BTreeSet::new()).unwrap();
    let rep = c.verify_algebra();
    assert!(!rep.passed());
    assert_eq!(rep.delta_squared[0], vec![("c".to_string(), "a".to_string())]);
    assert!(c.cohomology().is_err());
}

#[test]
fn a_missing_product_term_breaks_leibniz() {
    // u a unit, a -> b; m2(u, a) = a but m2(u, b) is missing
    let gens = vec![gen("u", 0, 1.0), gen("a", 1, 2.0), gen("b", 2, 3.0)];
    let d = Mat2::from_rows(&[vec![0, 0, 0], vec![0, 0, 0], vec![0, 1, 0]]);
    let m2: BTreeSet<_> = [(0, 1, 1)].into();
    let c = ChordComplex::single(gens, d, m2).unwrap();
    let rep = c.verify_algebra();
    assert_eq!(rep.leibniz, vec![("u".to_string(), "a".to_string(), "b".to_string())]);
}
