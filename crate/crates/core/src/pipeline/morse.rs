//! Morse mode on the flat torus: (f, g, f+g) and their tree product.

use std::collections::HashMap;

use serde::Serialize;

use super::{flow_opts, LineEntry, LineTable, ProductData, TreeEntry};
use crate::complex::{ChordComplex, CohomologyRing, Generator, Mat2};
use crate::config::{MorseSpec, RunConfig};
use crate::critical::{classify, cmp_points, newton_roots, CriticalPoint};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::expr::{parse, Layout};
use crate::family::{delta_mod, morse_mode_fields, BoxN, Field};
use crate::flow::{count_lines, integrate, Anchor, FlowOpts, ManifoldChart, Side, Termination};
use crate::trees::{solve_trees, Cloud, Edge, PerturbationTriple, TreeProblem};

const PREFIX: [&str; 3] = ["f", "g", "h"];

/// Closed unstable curve of an index-1 point on T^2, as integer windings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Winding {
    pub id: String,
    pub wx: i64,
    pub wy: i64,
}

impl Winding {
    /// Values of the dual cochain on the horizontal and vertical loops.
    pub fn evals(&self) -> [u8; 2] {
        [self.wy.rem_euclid(2) as u8, self.wx.rem_euclid(2) as u8]
    }
}

#[derive(Clone, Debug)]
pub struct MorseRun {
    pub spec: MorseSpec,
    pub fields: [Field; 3],
    pub crits: [Vec<CriticalPoint>; 3],
    pub delta: [LineTable; 3],
    pub product: ProductData,
    pub complex: ChordComplex,
    pub ring: CohomologyRing,
    /// Per field, windings of the index-1 points (2-dimensional tori only).
    pub windings: [Vec<Winding>; 3],
}

fn critical_points(f: &Field, prefix: &str, cfg: &RunConfig, exec: Exec) -> Result<Vec<CriticalPoint>> {
    let tol = &cfg.tolerances;
    let d = f.dim();
    let roots = newton_roots(f, &BoxN::cube(d, 0.0, 1.0), cfg.seeds.crit_grid, tol.tol_grad, tol.tol_dedup)?;
    let mut pts: Vec<CriticalPoint> = exec.map(&roots, |x| {
        let mut x = x.clone();
        f.wrap(&mut x);
        classify(f, &x, 0, tol)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    pts.sort_by(|a, b| a.value.total_cmp(&b.value).then_with(|| cmp_points(&a.coords, &b.coords)));
    for (i, p) in pts.iter_mut().enumerate() {
        p.id = format!("{prefix}{}", i + 1);
    }
    Ok(pts)
}

fn table(field: &Field, pts: &[CriticalPoint], opts: &FlowOpts, cfg: &RunConfig, exec: Exec) -> Result<LineTable> {
    let anchors: Vec<Anchor> = pts.iter().map(|c| Anchor::from_crit(field, c)).collect::<Result<_>>()?;
    let m = pts.len();
    let mut matrix = Mat2::zeros(m, m);
    let mut entries = Vec::new();
    for a in 0..m {
        for b in 0..m {
            if pts[b].index != pts[a].index + 1 {
                continue;
            }
            let lc = count_lines(field, &anchors[a], &anchors[b], &anchors, opts, &cfg.seeds, exec)?;
            matrix.set(b, a, lc.parity == 1);
            entries.push(LineEntry {
                from: pts[a].id.clone(),
                to: pts[b].id.clone(),
                count: lc.count,
                parity: lc.parity,
                method: lc.method,
                lines: lc.lines,
            });
        }
    }
    Ok(LineTable { field: field.tag.label(), entries, matrix })
}

/// Unwrapped displacement along a polyline on the torus.
fn displacement(pts: &[Vec<f64>], periodic: &[bool]) -> Vec<f64> {
    let mut d = vec![0.0; periodic.len()];
    for w in pts.windows(2) {
        for (di, s) in d.iter_mut().zip(delta_mod(&w[1], &w[0], periodic)) {
            *di += s;
        }
    }
    d
}

fn windings(field: &Field, pts: &[CriticalPoint], opts: &FlowOpts) -> Result<Vec<Winding>> {
    if field.dim() != 2 {
        return Ok(vec![]);
    }
    let anchors: Vec<Anchor> = pts.iter().map(|c| Anchor::from_crit(field, c)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (p, a) in pts.iter().zip(&anchors) {
        if p.index != 1 {
            continue;
        }
        let chart = ManifoldChart::new(a.clone(), Side::Unstable, opts.r0);
        let mut disp = Vec::new();
        let mut ends = Vec::new();
        for u in [1.0, -1.0] {
            let t = integrate(field, &chart.base(&[u]), 1.0, &anchors, opts);
            let Termination::Converged(e) = t.termination else {
                return Err(Error::Flow(format!("unstable branch of {} did not converge ({:?})", p.id, t.termination)));
            };
            let mut path = vec![a.coords.clone()];
            path.extend(t.points);
            path.push(anchors[e].coords.clone());
            disp.push(displacement(&path, &field.periodic));
            ends.push(e);
        }
        if ends[0] != ends[1] {
            return Err(Error::Flow(format!("unstable branches of {} end at different points", p.id)));
        }
        let w: Vec<f64> = disp[0].iter().zip(&disp[1]).map(|(a, b)| a - b).collect();
        out.push(Winding { id: p.id.clone(), wx: w[0].round() as i64, wy: w[1].round() as i64 });
    }
    Ok(out)
}

impl MorseRun {
    pub fn run(cfg: &RunConfig, seed: u64, exec: Exec) -> Result<MorseRun> {
        let spec = cfg.morse_spec();
        let d = spec.dims;
        if d == 0 {
            return Err(Error::Config("morse.dims must be positive".into()));
        }
        let layout = Layout::torus(d);
        let f = parse(&spec.f, &layout).map_err(|e| Error::Config(format!("morse.f: {e}")))?;
        let g = parse(&spec.g, &layout).map_err(|e| Error::Config(format!("morse.g: {e}")))?;
        let fields = morse_mode_fields(&f, &g, d);
        let opts = flow_opts(&cfg.tolerances);
        let crits: [Vec<CriticalPoint>; 3] = [
            critical_points(&fields[0], PREFIX[0], cfg, exec)?,
            critical_points(&fields[1], PREFIX[1], cfg, exec)?,
            critical_points(&fields[2], PREFIX[2], cfg, exec)?,
        ];
        let delta = [
            table(&fields[0], &crits[0], &opts, cfg, exec)?,
            table(&fields[1], &crits[1], &opts, cfg, exec)?,
            table(&fields[2], &crits[2], &opts, cfg, exec)?,
        ];
        let product = Self::trees(&fields, &crits, &spec, seed, &opts, cfg, exec)?;
        let gens: [Vec<Generator>; 3] = std::array::from_fn(|k| {
            crits[k].iter().map(|c| Generator { id: c.id.clone(), grading: c.grading, value: c.value }).collect()
        });
        let m2 = product.m2([&gens[0], &gens[1], &gens[2]]);
        let complex = ChordComplex::new(gens, delta.clone().map(|t| t.matrix), m2)?;
        let ring = complex.cohomology()?;
        let windings = [
            windings(&fields[0], &crits[0], &opts)?,
            windings(&fields[1], &crits[1], &opts)?,
            windings(&fields[2], &crits[2], &opts)?,
        ];
        Ok(MorseRun { spec, fields, crits, delta, product, complex, ring, windings })
    }

    fn trees(
        fields: &[Field; 3],
        crits: &[Vec<CriticalPoint>; 3],
        spec: &MorseSpec,
        seed: u64,
        opts: &FlowOpts,
        cfg: &RunConfig,
        exec: Exec,
    ) -> Result<ProductData> {
        let d = spec.dims;
        let s = PerturbationTriple::sample(d, spec.delta_pert, seed);
        let anchors: Vec<Vec<Anchor>> =
            (0..3).map(|k| crits[k].iter().map(|c| Anchor::from_crit(&fields[k], c)).collect()).collect::<Result<_>>()?;
        let mut clouds: HashMap<(usize, usize), Cloud> = HashMap::new();
        let edge = |k: usize, i: usize| {
            let side = if k == 2 { Side::Stable } else { Side::Unstable };
            Edge::new(
                fields[k].clone(),
                anchors[k][i].clone(),
                side,
                anchors[k].clone(),
                (0..d).map(Some).collect(),
                crits[k][i].id.clone(),
                cfg.tolerances.r0,
            )
        };
        let mut entries = Vec::new();
        for a in 0..crits[0].len() {
            for b in 0..crits[1].len() {
                for c in 0..crits[2].len() {
                    let g = [crits[0][a].grading, crits[1][b].grading, crits[2][c].grading];
                    if g[2] != g[0] + g[1] {
                        continue;
                    }
                    let idx = [a, b, c];
                    let edges = [edge(0, a), edge(1, b), edge(2, c)];
                    for (k, e) in edges.iter().enumerate() {
                        clouds.entry((k, idx[k])).or_insert_with(|| Cloud::build(e, &cfg.seeds, opts, exec));
                    }
                    let ids = [crits[0][a].id.clone(), crits[1][b].id.clone(), crits[2][c].id.clone()];
                    let pr = TreeProblem {
                        edges,
                        dim: d,
                        periodic: vec![true; d],
                        escape: BoxN::cube(d, 0.0, 1.0),
                        s: s.clone(),
                        expected_dim: g[2] - g[0] - g[1],
                        gradings: g,
                        sink_field: None,
                        ids: ids.clone(),
                    };
                    let cl = [&clouds[&(0, a)], &clouds[&(1, b)], &clouds[&(2, c)]];
                    let trees = solve_trees(&pr, cl, opts, &cfg.seeds, cfg.tolerances.tree_dedup, exec)?;
                    let [p1, p2, p0] = ids;
                    entries.push(TreeEntry { p1, p2, p0, count: trees.len(), parity: (trees.len() % 2) as u8, trees });
                }
            }
        }
        Ok(ProductData { s, entries })
    }

    /// (horizontal, vertical) loop evaluations of every degree-1 class of H(C_k).
    pub fn class_evals(&self, k: usize) -> Vec<[u8; 2]> {
        let h = &self.ring.h[k];
        h.classes
            .iter()
            .filter(|c| c.grading == 1)
            .map(|c| {
                let mut e = [0u8; 2];
                for (i, bit) in c.rep.iter().enumerate() {
                    if *bit == 1 {
                        if let Some(w) = self.windings[k].iter().find(|w| w.id == self.crits[k][i].id) {
                            let v = w.evals();
                            e[0] ^= v[0];
                            e[1] ^= v[1];
                        }
                    }
                }
                e
            })
            .collect()
    }
}
