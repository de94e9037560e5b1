//! Z2 cochain complexes with a product, their cohomology rings and comparisons.

mod mat;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub use mat::Mat2;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Generator {
    pub id: String,
    pub grading: i64,
    pub value: f64,
}

/// Three complexes C1, C2, C3 with m2: C1 x C2 -> C3.
///
/// `delta[k]` has entry (q, p) = 1 when the coefficient of q in delta(p) is 1.
/// In the chord setting the three generator lists coincide.
#[derive(Clone, Debug, Serialize)]
pub struct ChordComplex {
    pub gens: [Vec<Generator>; 3],
    pub delta: [Mat2; 3],
    /// (p1, p2, p0) index triples with count 1.
    pub m2: BTreeSet<(usize, usize, usize)>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AlgebraReport {
    /// Per complex, (q, p) entries where delta^2 is nonzero (as generator ids).
    pub delta_squared: [Vec<(String, String)>; 3],
    /// (p1, p2, p0) where the Leibniz defect is nonzero.
    pub leibniz: Vec<(String, String, String)>,
    /// Entries of delta or m2 breaking grading or value monotonicity.
    pub shape: Vec<String>,
}

impl AlgebraReport {
    pub fn passed(&self) -> bool {
        self.delta_squared.iter().all(Vec::is_empty) && self.leibniz.is_empty() && self.shape.is_empty()
    }
}

impl ChordComplex {
    pub fn new(gens: [Vec<Generator>; 3], delta: [Mat2; 3], m2: BTreeSet<(usize, usize, usize)>) -> Result<ChordComplex> {
        for k in 0..3 {
            let n = gens[k].len();
            if delta[k].rows() != n || delta[k].cols() != n {
                return Err(Error::Algebra(format!("delta{} is {}x{}, expected {n}x{n}", k + 1, delta[k].rows(), delta[k].cols())));
            }
        }
        if let Some(t) = m2.iter().find(|t| t.0 >= gens[0].len() || t.1 >= gens[1].len() || t.2 >= gens[2].len()) {
            return Err(Error::Algebra(format!("m2 entry {t:?} out of range")));
        }
        Ok(ChordComplex { gens, delta, m2 })
    }

    /// Single complex with m2 on itself.
    pub fn single(gens: Vec<Generator>, delta: Mat2, m2: BTreeSet<(usize, usize, usize)>) -> Result<ChordComplex> {
        ChordComplex::new([gens.clone(), gens.clone(), gens], [delta.clone(), delta.clone(), delta], m2)
    }

    /// m2 extended bilinearly.
    pub fn product(&self, a: &[u8], b: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; self.gens[2].len()];
        for &(i, j, k) in &self.m2 {
            out[k] ^= a[i] & b[j];
        }
        out
    }

    /// delta^2, the Leibniz defect and the shape conditions; violations are listed, not raised.
    pub fn verify_algebra(&self) -> AlgebraReport {
        let mut rep = AlgebraReport::default();
        for k in 0..3 {
            let d2 = self.delta[k].mul(&self.delta[k]);
            rep.delta_squared[k] = d2.support().into_iter().map(|(q, p)| (self.gens[k][q].id.clone(), self.gens[k][p].id.clone())).collect();
            for (q, p) in self.delta[k].support() {
                let (gp, gq) = (&self.gens[k][p], &self.gens[k][q]);
                if gq.grading != gp.grading + 1 {
                    rep.shape.push(format!("delta{}: {} -> {} changes grading by {}", k + 1, gp.id, gq.id, gq.grading - gp.grading));
                }
                if gq.value <= gp.value {
                    rep.shape.push(format!("delta{}: {} -> {} does not increase the value", k + 1, gp.id, gq.id));
                }
            }
        }
        for &(i, j, k) in &self.m2 {
            let (a, b, c) = (&self.gens[0][i], &self.gens[1][j], &self.gens[2][k]);
            if c.grading != a.grading + b.grading {
                rep.shape.push(format!("m2({}, {}) -> {}: gradings {} + {} != {}", a.id, b.id, c.id, a.grading, b.grading, c.grading));
            }
        }
        // delta3 m2(a,b) + m2(delta1 a, b) + m2(a, delta2 b) on basis pairs
        let (n1, n2) = (self.gens[0].len(), self.gens[1].len());
        for i in 0..n1 {
            let a = unit(n1, i);
            let da = self.delta[0].mul_vec(&a);
            for j in 0..n2 {
                let b = unit(n2, j);
                let db = self.delta[1].mul_vec(&b);
                let mut d = self.delta[2].mul_vec(&self.product(&a, &b));
                xor(&mut d, &self.product(&da, &b));
                xor(&mut d, &self.product(&a, &db));
                for (k, v) in d.iter().enumerate() {
                    if *v == 1 {
                        rep.leibniz.push((self.gens[0][i].id.clone(), self.gens[1][j].id.clone(), self.gens[2][k].id.clone()));
                    }
                }
            }
        }
        rep
    }

    pub fn cohomology(&self) -> Result<CohomologyRing> {
        let h: [Cohomology; 3] = [
            Cohomology::new(&self.gens[0], &self.delta[0])?,
            Cohomology::new(&self.gens[1], &self.delta[1])?,
            Cohomology::new(&self.gens[2], &self.delta[2])?,
        ];
        let mut mu = Vec::new();
        for a in &h[0].classes {
            let mut row = Vec::new();
            for b in &h[1].classes {
                let p = self.product(&a.rep, &b.rep);
                let c = h[2].coords(&p).ok_or_else(|| {
                    Error::Internal(format!("m2 of the representatives of {} and {} is not a cocycle", a.label, b.label))
                })?;
                row.push(c);
            }
            mu.push(row);
        }
        Ok(CohomologyRing { h, mu })
    }
}

fn unit(n: usize, i: usize) -> Vec<u8> {
    let mut v = vec![0u8; n];
    v[i] = 1;
    v
}

fn xor(a: &mut [u8], b: &[u8]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x ^= y);
}

#[derive(Clone, Debug, Serialize)]
pub struct Class {
    pub grading: i64,
    /// Cocycle representative over the generators.
    pub rep: Vec<u8>,
    /// Sum of generator ids in the representative.
    pub label: String,
}

/// Cohomology of one complex with a basis of classes.
#[derive(Clone, Debug, Serialize)]
pub struct Cohomology {
    pub ranks: BTreeMap<i64, usize>,
    pub classes: Vec<Class>,
    /// Columns: a basis of im delta followed by the class representatives.
    #[serde(skip)]
    basis: Mat2,
    #[serde(skip)]
    delta: Mat2,
    #[serde(skip)]
    boundaries: usize,
}

impl Cohomology {
    pub fn new(gens: &[Generator], delta: &Mat2) -> Result<Cohomology> {
        let n = gens.len();
        if !delta.mul(delta).is_zero() {
            return Err(Error::Algebra("delta^2 != 0; cohomology undefined".into()));
        }
        let mut grades: Vec<i64> = gens.iter().map(|g| g.grading).collect();
        grades.sort();
        grades.dedup();
        let mut bnd_cols: Vec<Vec<u8>> = Vec::new();
        let mut classes = Vec::new();
        let mut ranks = BTreeMap::new();
        for &g in &grades {
            let idx: Vec<usize> = (0..n).filter(|&i| gens[i].grading == g).collect();
            // delta restricted to C^g
            let sub = Mat2::from_cols(n, &idx.iter().map(|&i| delta.col(i)).collect::<Vec<_>>());
            let ker: Vec<Vec<u8>> = sub
                .kernel()
                .into_iter()
                .map(|k| {
                    let mut v = vec![0u8; n];
                    for (t, &i) in idx.iter().enumerate() {
                        v[i] = k[t];
                    }
                    v
                })
                .collect();
            // boundaries landing in grading g
            let prev: Vec<Vec<u8>> = (0..n).filter(|&i| gens[i].grading == g - 1).map(|i| delta.col(i)).collect();
            let mut span: Vec<Vec<u8>> = independent(prev);
            let nb = span.len();
            bnd_cols.extend(span.iter().cloned());
            let mut r = 0;
            for z in ker {
                let mut trial = span.clone();
                trial.push(z.clone());
                if Mat2::from_cols(n, &trial).rank() == trial.len() {
                    span = trial;
                    let label = (0..n).filter(|&i| z[i] == 1).map(|i| gens[i].id.as_str()).collect::<Vec<_>>().join("+");
                    classes.push(Class { grading: g, rep: z, label });
                    r += 1;
                }
            }
            debug_assert_eq!(span.len(), nb + r);
            if r > 0 {
                ranks.insert(g, r);
            }
        }
        let boundaries = bnd_cols.len();
        let mut cols = bnd_cols;
        cols.extend(classes.iter().map(|c| c.rep.clone()));
        Ok(Cohomology { ranks, classes, basis: Mat2::from_cols(n, &cols), delta: delta.clone(), boundaries })
    }

    pub fn dim(&self) -> usize {
        self.classes.len()
    }

    /// Class coordinates of a cocycle; None if `z` is not a cocycle.
    pub fn coords(&self, z: &[u8]) -> Option<Vec<u8>> {
        if self.delta.mul_vec(z).contains(&1) {
            return None;
        }
        if self.basis.cols() == 0 {
            return Some(vec![]);
        }
        let x = self.basis.solve(z)?;
        Some(x[self.boundaries..].to_vec())
    }

    /// Matrix of the map on cohomology induced by a chain map `phi` into `target`.
    pub fn induced(&self, phi: &Mat2, target: &Cohomology) -> Result<Mat2> {
        let mut cols = Vec::new();
        for c in &self.classes {
            let img = phi.mul_vec(&c.rep);
            cols.push(target.coords(&img).ok_or_else(|| Error::Algebra(format!("image of class {} is not a cocycle", c.label)))?);
        }
        Ok(Mat2::from_cols(target.dim(), &cols))
    }
}

fn independent(vs: Vec<Vec<u8>>) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = Vec::new();
    for v in vs {
        if v.iter().all(|x| *x == 0) {
            continue;
        }
        let mut trial = out.clone();
        trial.push(v);
        if Mat2::from_cols(trial[0].len(), &trial).rank() == trial.len() {
            out = trial;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CohomologyRing {
    pub h: [Cohomology; 3],
    /// mu[a][b] = class coordinates of mu2(a, b) in H(C3).
    pub mu: Vec<Vec<Vec<u8>>>,
}

impl CohomologyRing {
    pub fn ranks(&self) -> &BTreeMap<i64, usize> {
        &self.h[2].ranks
    }

    pub fn mu_is_zero(&self) -> bool {
        self.mu.iter().flatten().flatten().all(|v| *v == 0)
    }

    /// mu2 of two class-coordinate vectors.
    pub fn mu_of(&self, a: &[u8], b: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; self.h[2].dim()];
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                if ai & bj == 1 {
                    xor(&mut out, &self.mu[i][j]);
                }
            }
        }
        out
    }

    /// Nonzero structure constants as (a, b, [c...]) class labels.
    pub fn table(&self) -> Vec<(String, String, Vec<String>)> {
        let mut out = Vec::new();
        for (i, row) in self.mu.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if c.contains(&1) {
                    let terms = c.iter().enumerate().filter(|(_, v)| **v == 1).map(|(k, _)| self.h[2].classes[k].label.clone()).collect();
                    out.push((self.h[0].classes[i].label.clone(), self.h[1].classes[j].label.clone(), terms));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Verdict {
    pub ranks_equal: bool,
    pub isomorphism: bool,
    pub commutes: bool,
    pub defects: Vec<String>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.ranks_equal && self.isomorphism && self.commutes && self.defects.is_empty()
    }
}

/// Compare two rings through chain maps phi_k: C_k -> C'_k.
///
/// Checks graded ranks, that every induced map is an isomorphism, and that
/// phi3* mu = mu' (phi1* x phi2*) on all pairs of basis classes.
pub fn compare_rings(r0: &CohomologyRing, r1: &CohomologyRing, phi: [&Mat2; 3]) -> Result<Verdict> {
    let mut v = Verdict { ranks_equal: true, isomorphism: true, commutes: true, defects: vec![] };
    let mut ind = Vec::new();
    for k in 0..3 {
        if r0.h[k].ranks != r1.h[k].ranks {
            v.ranks_equal = false;
            v.defects.push(format!("H(C{}) ranks {:?} vs {:?}", k + 1, r0.h[k].ranks, r1.h[k].ranks));
        }
        let m = r0.h[k].induced(phi[k], &r1.h[k])?;
        if m.rows() != m.cols() || m.rank() != m.rows() {
            v.isomorphism = false;
            v.defects.push(format!("induced map on H(C{}) is not invertible", k + 1));
        }
        ind.push(m);
    }
    for a in 0..r0.h[0].dim() {
        for b in 0..r0.h[1].dim() {
            let lhs = ind[2].mul_vec(&r0.mu[a][b]);
            let rhs = r1.mu_of(&ind[0].col(a), &ind[1].col(b));
            if lhs != rhs {
                v.commutes = false;
                v.defects.push(format!("mu({}, {}) not preserved", r0.h[0].classes[a].label, r0.h[1].classes[b].label));
            }
        }
    }
    Ok(v)
}

/// Identity-on-labels map C -> C' by matching critical value (within `tol`) and grading.
pub fn match_by_value(g0: &[Generator], g1: &[Generator], tol: f64) -> Result<Mat2> {
    match_by_value_with(g0, g1, tol, |_, _| false)
}

/// As `match_by_value`; ties between equal (value, grading) pairs are broken by `same(i, j)`.
pub fn match_by_value_with(g0: &[Generator], g1: &[Generator], tol: f64, same: impl Fn(usize, usize) -> bool) -> Result<Mat2> {
    let mut m = Mat2::zeros(g1.len(), g0.len());
    if g0.len() != g1.len() {
        return Err(Error::Algebra(format!(
            "{} vs {} generators; give an explicit correspondence",
            g0.len(),
            g1.len()
        )));
    }
    let mut used = vec![false; g1.len()];
    for (i, a) in g0.iter().enumerate() {
        let mut hits: Vec<usize> = (0..g1.len()).filter(|&j| g1[j].grading == a.grading && (g1[j].value - a.value).abs() < tol).collect();
        if hits.len() > 1 {
            hits.retain(|&j| same(i, j));
        }
        match hits.as_slice() {
            [j] if !used[*j] => {
                used[*j] = true;
                m.set(*j, i, true);
            }
            [] => return Err(Error::Algebra(format!("no partner for {} (value {:.9}, grading {})", a.id, a.value, a.grading))),
            _ => {
                return Err(Error::Algebra(format!(
                    "value/grading matching of {} is ambiguous; give an explicit correspondence",
                    a.id
                )))
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(id: &str, grading: i64, value: f64) -> Generator {
        Generator { id: id.into(), grading, value }
    }

    /// Morse complex of the torus from four critical points with zero differential.
    fn torus_perfect() -> ChordComplex {
        let g = vec![gen("m", 0, 0.0), gen("a", 1, 1.0), gen("b", 1, 1.5), gen("t", 2, 3.0)];
        let mut m2 = BTreeSet::new();
        for i in 0..4 {
            m2.insert((0, i, i));
            m2.insert((i, 0, i));
        }
        m2.insert((1, 2, 3));
        m2.insert((2, 1, 3));
        ChordComplex::single(g, Mat2::zeros(4, 4), m2).unwrap()
    }

    #[test]
    fn torus_ring() {
        let c = torus_perfect();
        assert!(c.verify_algebra().passed());
        let r = c.cohomology().unwrap();
        assert_eq!(r.ranks().clone(), BTreeMap::from([(0, 1), (1, 2), (2, 1)]));
        assert_eq!(r.mu[1][2], vec![0, 0, 0, 1]);
        assert_eq!(r.mu[1][1], vec![0, 0, 0, 0]);
    }

    #[test]
    fn corrupted_delta_is_localized() {
        let mut c = torus_perfect();
        c.delta[2].set(3, 1, true);
        let rep = c.verify_algebra();
        assert!(!rep.passed());
        assert!(rep.delta_squared.iter().all(Vec::is_empty));
        // m2(m, a) = a and delta3(a) = t, but nothing else sees the new entry
        assert!(rep.leibniz.contains(&("m".into(), "a".into(), "t".into())));
        assert!(rep.leibniz.iter().all(|t| t.2 == "t"));
    }

    #[test]
    fn cancelling_pair_has_no_cohomology() {
        let g = vec![gen("p", 1, 1.0), gen("q", 2, 2.0), gen("r", 2, 2.5)];
        let d = Mat2::from_rows(&[vec![0, 0, 0], vec![1, 0, 0], vec![0, 0, 0]]);
        let c = ChordComplex::single(g, d, BTreeSet::new()).unwrap();
        let r = c.cohomology().unwrap();
        assert_eq!(r.ranks().clone(), BTreeMap::from([(2, 1)]));
        // q is exact, r is the class
        assert_eq!(r.h[2].coords(&[0, 1, 0]).unwrap(), vec![0]);
        assert_eq!(r.h[2].coords(&[0, 1, 1]).unwrap(), vec![1]);
        assert!(r.h[2].coords(&[1, 0, 0]).is_none());
    }

    #[test]
    fn empty_complex() {
        let c = ChordComplex::single(vec![], Mat2::zeros(0, 0), BTreeSet::new()).unwrap();
        let r = c.cohomology().unwrap();
        assert!(r.ranks().is_empty());
        assert!(compare_rings(&r, &r, [&Mat2::zeros(0, 0); 3]).unwrap().passed());
    }

    #[test]
    fn swapped_labels_break_commutativity() {
        let c = torus_perfect();
        let r = c.cohomology().unwrap();
        let id = Mat2::identity(4);
        assert!(compare_rings(&r, &r, [&id, &id, &id]).unwrap().passed());
        // kill the top class on the target side
        let mut p = Mat2::identity(4);
        p.set(3, 3, false);
        let v = compare_rings(&r, &r, [&id, &id, &p]).unwrap();
        assert!(!v.isomorphism && !v.commutes);
    }

    #[test]
    fn value_matching() {
        let a = vec![gen("p1", 2, 1.0), gen("p2", 2, 2.0)];
        let b = vec![gen("q1", 2, 2.0 + 1e-9), gen("q2", 2, 1.0)];
        let m = match_by_value(&a, &b, 1e-6).unwrap();
        assert_eq!(m.support(), vec![(0, 1), (1, 0)]);
        let c = vec![gen("q1", 2, 1.0), gen("q2", 2, 1.0)];
        assert!(match_by_value(&a[..1], &c[..1], 1e-6).is_ok());
        assert!(match_by_value(&[a[0].clone(), a[0].clone()], &c, 1e-6).is_err());
    }
}
