//! End-to-end runs: chords, line counts, tree counts, complexes and rings.

mod morse;

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

pub use morse::{MorseRun, Winding};

use crate::complex::{ChordComplex, CohomologyRing, Generator, Mat2};
use crate::config::{Grids, RunConfig, Tolerances};
use crate::critical::{annulus_gradient_floor, find_critical_points, iota, rho_and_perturbation_bound, CriticalPoint, RhoBound};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::family::{BoxN, Field, GeneratingFamily, QuadraticLike};
use crate::flow::{count_lines, Anchor, FlowOpts, LineMethod, Side};
use crate::trees::{solve_trees, Cloud, Edge, FlowTree, PerturbationTriple, TreeProblem};

/// One computed line count.
#[derive(Clone, Debug, Serialize)]
pub struct LineEntry {
    pub from: String,
    pub to: String,
    pub count: usize,
    pub parity: u8,
    pub method: LineMethod,
    #[serde(skip)]
    pub lines: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LineTable {
    pub field: String,
    pub entries: Vec<LineEntry>,
    /// (q, p) = count mod 2 of lines p -> q.
    pub matrix: Mat2,
}

/// Trees of one (p1, p2; p0) problem.
#[derive(Clone, Debug, Serialize)]
pub struct TreeEntry {
    pub p1: String,
    pub p2: String,
    pub p0: String,
    pub count: usize,
    pub parity: u8,
    pub trees: Vec<FlowTree>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductData {
    pub s: PerturbationTriple,
    pub entries: Vec<TreeEntry>,
}

impl ProductData {
    pub fn m2(&self, ids: [&[Generator]; 3]) -> BTreeSet<(usize, usize, usize)> {
        let pos = |k: usize, id: &str| ids[k].iter().position(|g| g.id == id).expect("known generator");
        self.entries.iter().filter(|e| e.parity == 1).map(|e| (pos(0, &e.p1), pos(1, &e.p2), pos(2, &e.p0))).collect()
    }
}

/// Density per axis so that a D-dimensional grid stays below `cap` points.
fn capped(density: usize, dim: usize, cap: f64) -> usize {
    density.min(cap.powf(1.0 / dim as f64).floor().max(2.0) as usize)
}

pub fn flow_opts(tol: &Tolerances) -> FlowOpts {
    FlowOpts::from_tol(tol)
}

/// Everything derived from a generating family up to the product.
#[derive(Clone, Debug)]
pub struct Gf {
    pub cfg: RunConfig,
    pub family: GeneratingFamily,
    pub w: Field,
    /// Isolated critical points of w (any sign).
    pub crits: Vec<CriticalPoint>,
    pub chords: Vec<CriticalPoint>,
    pub diagonal_hits: usize,
    /// min |grad w| over the blend annulus grid.
    pub annulus_floor: f64,
    pub q: QuadraticLike,
    /// The factor applied to the configured Q.
    pub lambda: f64,
    /// w_{1,2;3}, w_{2,3;3}, w_{1,3;3}.
    pub ext: [Field; 3],
    /// iota images of every chord for the three pairs.
    pub iota: Vec<[CriticalPoint; 3]>,
    pub rho: RhoBound,
    pub opts: FlowOpts,
    pub exec: Exec,
}

pub const PAIRS: [(usize, usize); 3] = [(1, 2), (2, 3), (1, 3)];

impl Gf {
    pub fn setup(cfg: &RunConfig, exec: Exec) -> Result<Gf> {
        let family = cfg.build_family()?;
        let spec = cfg.family.as_ref().expect("checked by build_family");
        let (n, nf) = (family.n, family.nf);
        let tol = &cfg.tolerances;
        let grids = &cfg.seeds;
        let w = family.difference();
        let mut pinned = Vec::new();
        for &(j, _) in &family.quadratic {
            pinned.push(n + j);
            pinned.push(n + nf + j);
        }
        let search = find_critical_points(&w, &w.domain, grids.crit_grid, &pinned, nf as i64, tol, exec)?;
        let crits = search.isolated.clone();
        let chords: Vec<CriticalPoint> = crits.iter().filter(|c| c.value > 0.0).cloned().collect();
        let inner = {
            let fi = family.fiber_box(false);
            let base = BoxN(family.inner_box.0[..n].to_vec());
            if family.base == crate::family::Base::Torus {
                family.base_box().concat(&fi).concat(&fi)
            } else {
                base.concat(&fi).concat(&fi)
            }
        };
        let annulus_floor = annulus_gradient_floor(&w, &inner, &w.domain, capped(grids.annulus_grid, w.dim(), 4e4), &pinned, exec);

        let rho_min = chords.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
        if !rho_min.is_finite() {
            return Err(Error::Critical("no Reeb chords (no positive critical values of w)".into()));
        }
        // shrink Q until its size on the inner fiber box stays below rho
        let q0 = spec.base_q(nf)?;
        let r = family.fiber_box(false).max_abs();
        let size = |q: &QuadraticLike| 2.0 * q.scale * r * r * nf as f64;
        let mut lambda = 1.0;
        while size(&q0.scaled(lambda)) >= rho_min && lambda > 1e-12 {
            lambda *= 0.5;
        }
        let q = if lambda == 1.0 { q0 } else { q0.scaled(lambda) };
        q.validate(5)?;
        let ext = [family.extend(1, 2, &q)?, family.extend(2, 3, &q)?, family.extend(1, 3, &q)?];

        let mut iota_pts = Vec::new();
        for c in &crits {
            let imgs: Vec<CriticalPoint> = PAIRS
                .iter()
                .zip(&ext)
                .map(|(&(i, j), f)| iota(c, i, j, n, nf, &q, f, tol))
                .collect::<Result<_>>()?;
            iota_pts.push(imgs.try_into().expect("three pairs"));
        }
        let lip = Grids { lipschitz_grid: capped(grids.lipschitz_grid, ext[0].dim(), 2e4), ..grids.clone() };
        let rho = rho_and_perturbation_bound(&chords, &[&ext[0], &ext[1], &ext[2]], &ext[0].domain, &lip, exec)?;
        Ok(Gf {
            cfg: cfg.clone(),
            family,
            w,
            crits,
            chords,
            diagonal_hits: search.diagonal_hits,
            annulus_floor,
            q,
            lambda,
            ext,
            iota: iota_pts,
            rho,
            opts: flow_opts(tol),
            exec,
        })
    }

    pub fn n(&self) -> usize {
        self.family.n
    }

    pub fn nf(&self) -> usize {
        self.family.nf
    }

    pub fn generators(&self) -> Vec<Generator> {
        self.chords.iter().map(|c| Generator { id: c.id.clone(), grading: c.grading, value: c.value }).collect()
    }

    fn chord_pos(&self) -> Vec<usize> {
        self.chords.iter().map(|c| self.crits.iter().position(|d| d.id == c.id).expect("chord among crits")).collect()
    }

    /// Field and critical points for `which`: None for w, Some(k) for the k-th extended field.
    fn field_and_points(&self, which: Option<usize>) -> (&Field, Vec<CriticalPoint>) {
        match which {
            None => (&self.w, self.crits.clone()),
            Some(k) => (&self.ext[k], self.iota.iter().map(|i| i[k].clone()).collect()),
        }
    }

    /// Line counts between chords of adjacent grading in w or an extended field.
    pub fn lines(&self, which: Option<usize>) -> Result<LineTable> {
        let (field, pts) = self.field_and_points(which);
        let anchors: Vec<Anchor> = pts.iter().map(|c| Anchor::from_crit(field, c)).collect::<Result<_>>()?;
        let pos = self.chord_pos();
        let m = pos.len();
        let mut matrix = Mat2::zeros(m, m);
        let mut entries = Vec::new();
        for (a, &pa) in pos.iter().enumerate() {
            for (b, &pb) in pos.iter().enumerate() {
                if self.chords[b].grading != self.chords[a].grading + 1 {
                    continue;
                }
                let lc = count_lines(field, &anchors[pa], &anchors[pb], &anchors, &self.opts, &self.cfg.seeds, self.exec)?;
                for l in &lc.lines {
                    if let Some(bad) = l.iter().find(|x| !field.in_escape(x)) {
                        return Err(Error::Internal(format!("line {} -> {} leaves K' at {bad:?}", self.chords[a].id, self.chords[b].id)));
                    }
                }
                matrix.set(b, a, lc.parity == 1);
                entries.push(LineEntry {
                    from: self.chords[a].id.clone(),
                    to: self.chords[b].id.clone(),
                    count: lc.count,
                    parity: lc.parity,
                    method: lc.method,
                    lines: lc.lines,
                });
            }
        }
        Ok(LineTable { field: field.tag.label(), entries, matrix })
    }

    /// Tree-space embedding of w-chart coordinates for edge k (0-based) of a GF tree.
    fn embed(&self, k: usize) -> Vec<Option<usize>> {
        let (n, nf) = (self.n(), self.nf());
        // slots (i, j) carried by the chart's (e, e') for the three edges
        let (i, j) = [(0, 1), (1, 2), (0, 2)][k];
        let mut out: Vec<Option<usize>> = (0..n).map(Some).collect();
        for slot in 0..3 {
            for m in 0..nf {
                out.push(if slot == i {
                    Some(n + m)
                } else if slot == j {
                    Some(n + nf + m)
                } else {
                    None
                });
            }
        }
        out
    }

    pub fn tree_dim(&self) -> usize {
        self.n() + 3 * self.nf()
    }

    pub fn perturbation(&self, seed: u64) -> PerturbationTriple {
        PerturbationTriple::sample(self.tree_dim(), self.rho.delta_pert, seed)
    }

    /// All (p1, p2; p0) tree counts for a perturbation drawn from `seed`.
    pub fn product(&self, seed: u64) -> Result<ProductData> {
        let s = self.perturbation(seed);
        let anchors: Vec<Anchor> = self.crits.iter().map(|c| Anchor::from_crit(&self.w, c)).collect::<Result<_>>()?;
        let pos = self.chord_pos();
        let mut triples = Vec::new();
        for a in 0..self.chords.len() {
            for b in 0..self.chords.len() {
                for c in 0..self.chords.len() {
                    if self.chords[c].grading == self.chords[a].grading + self.chords[b].grading {
                        triples.push([a, b, c]);
                    }
                }
            }
        }
        let tol = &self.cfg.tolerances;
        let mut clouds: HashMap<(usize, bool), Cloud> = HashMap::new();
        let edge = |k: usize, chord: usize| {
            let side = if k == 2 { Side::Stable } else { Side::Unstable };
            Edge::new(
                self.w.clone(),
                anchors[pos[chord]].clone(),
                side,
                anchors.clone(),
                self.embed(k),
                format!("{}:{}", self.ext[k].tag.label(), self.chords[chord].id),
                tol.r0,
            )
        };
        let mut entries = Vec::new();
        for t in triples {
            let edges = [edge(0, t[0]), edge(1, t[1]), edge(2, t[2])];
            for (k, e) in edges.iter().enumerate() {
                clouds.entry((t[k], k == 2)).or_insert_with(|| Cloud::build(e, &self.cfg.seeds, &self.opts, self.exec));
            }
            let g = |k: usize| self.chords[t[k]].grading;
            let pr = TreeProblem {
                edges,
                dim: self.tree_dim(),
                periodic: self.ext[0].periodic.clone(),
                escape: self.ext[0].escape.clone(),
                s: s.clone(),
                expected_dim: g(2) - g(0) - g(1),
                gradings: [g(0), g(1), g(2)],
                sink_field: Some((self.ext[2].clone(), self.rho.rho)),
                ids: [self.chords[t[0]].id.clone(), self.chords[t[1]].id.clone(), self.chords[t[2]].id.clone()],
            };
            let cl = [&clouds[&(t[0], false)], &clouds[&(t[1], false)], &clouds[&(t[2], true)]];
            let trees = solve_trees(&pr, cl, &self.opts, &self.cfg.seeds, tol.tree_dedup, self.exec)?;
            for tr in &trees {
                let sink = tr.sink_value.unwrap_or(f64::NAN);
                if self.chords[t[2]].value + 1e-9 < sink {
                    return Err(Error::Internal(format!(
                        "tree ({},{};{}) has w13 {sink} above w(p0) = {}",
                        pr.ids[0], pr.ids[1], pr.ids[2], self.chords[t[2]].value
                    )));
                }
            }
            entries.push(TreeEntry {
                p1: pr.ids[0].clone(),
                p2: pr.ids[1].clone(),
                p0: pr.ids[2].clone(),
                count: trees.len(),
                parity: (trees.len() % 2) as u8,
                trees,
            });
        }
        Ok(ProductData { s, entries })
    }

    /// Complex with delta_k from the given tables (w-lines for all three when `ext` is None).
    pub fn complex(&self, delta: &LineTable, ext: Option<&[LineTable; 3]>, product: &ProductData) -> Result<ChordComplex> {
        let gens = self.generators();
        let d = match ext {
            Some(e) => [e[0].matrix.clone(), e[1].matrix.clone(), e[2].matrix.clone()],
            None => [delta.matrix.clone(), delta.matrix.clone(), delta.matrix.clone()],
        };
        let m2 = product.m2([&gens, &gens, &gens]);
        ChordComplex::new([gens.clone(), gens.clone(), gens], d, m2)
    }
}

/// Result of a full GF run.
#[derive(Clone, Debug)]
pub struct GfRun {
    pub gf: Gf,
    pub delta: LineTable,
    pub delta_ext: Option<[LineTable; 3]>,
    pub product: ProductData,
    pub complex: ChordComplex,
    pub ring: CohomologyRing,
}

impl GfRun {
    /// `ext_lines` also counts lines in the three extended fields and uses them as delta_k.
    pub fn run(cfg: &RunConfig, seed: u64, ext_lines: bool, exec: Exec) -> Result<GfRun> {
        let gf = Gf::setup(cfg, exec)?;
        GfRun::from_setup(gf, seed, ext_lines)
    }

    pub fn from_setup(gf: Gf, seed: u64, ext_lines: bool) -> Result<GfRun> {
        let delta = gf.lines(None)?;
        let delta_ext = if ext_lines { Some([gf.lines(Some(0))?, gf.lines(Some(1))?, gf.lines(Some(2))?]) } else { None };
        let product = gf.product(seed)?;
        let complex = gf.complex(&delta, delta_ext.as_ref(), &product)?;
        let report = complex.verify_algebra();
        if !report.delta_squared.iter().all(Vec::is_empty) {
            return Err(Error::Algebra(format!("delta^2 != 0: {:?}", report.delta_squared)));
        }
        let ring = complex.cohomology()?;
        Ok(GfRun { gf, delta, delta_ext, product, complex, ring })
    }

    /// Reseeded product on the same chords and differential.
    pub fn reseed(&self, seed: u64) -> Result<GfRun> {
        let product = self.gf.product(seed)?;
        let complex = self.gf.complex(&self.delta, self.delta_ext.as_ref(), &product)?;
        let ring = complex.cohomology()?;
        Ok(GfRun { product, complex, ring, ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn capped_density() {
        assert_eq!(super::capped(7, 4, 2e4), 7);
        assert_eq!(super::capped(7, 7, 2e4), 4);
    }
}
