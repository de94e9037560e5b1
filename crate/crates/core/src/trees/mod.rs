//! Perturbed Y-shaped flow trees: two half-infinite lines out of p1, p2 and one into p0
//! whose perturbed finite ends meet.

mod cloud;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;

pub use cloud::{Cloud, HashGrid};

use crate::config::Grids;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::family::{delta_mod, norm, BoxN, Field};
use crate::flow::solve::{condition, gauss_newton, Block, GnOpts, Unknown};
use crate::flow::{Anchor, FlowOpts, ManifoldChart, Side};

/// Endpoint offsets s1, s2, s3, all shorter than `bound`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationTriple {
    pub s: [Vec<f64>; 3],
    pub seed: u64,
    pub bound: f64,
}

impl PerturbationTriple {
    /// Uniform in the open ball of radius `bound` (each s_k independently).
    pub fn sample(dim: usize, bound: f64, seed: u64) -> PerturbationTriple {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
        let s = std::array::from_fn(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = norm(&v);
            let r = bound * unit.sample(&mut rng).powf(1.0 / dim as f64);
            v.into_iter().map(|x| x * r / n).collect()
        });
        PerturbationTriple { s, seed, bound }
    }

    pub fn zero(dim: usize) -> PerturbationTriple {
        PerturbationTriple { s: std::array::from_fn(|_| vec![0.0; dim]), seed: 0, bound: 0.0 }
    }

    pub fn within_bound(&self) -> bool {
        self.bound == 0.0 && self.s.iter().all(|v| v.iter().all(|x| *x == 0.0)) || self.s.iter().all(|v| norm(v) < self.bound)
    }
}

/// One edge: a chart of `field` at `anchor`, placed into tree space by `embed`.
#[derive(Clone, Debug)]
pub struct Edge {
    pub field: Field,
    pub chart: ManifoldChart,
    /// Critical points of `field`; orbits stop near them.
    pub avoid: Vec<Anchor>,
    /// For each tree-space coordinate, the chart-point coordinate it copies, or None for a
    /// free slot whose dynamics split off exactly (quadratic-like slot).
    pub embed: Vec<Option<usize>>,
    pub label: String,
}

impl Edge {
    pub fn new(field: Field, anchor: Anchor, side: Side, avoid: Vec<Anchor>, embed: Vec<Option<usize>>, label: String, r0: f64) -> Edge {
        Edge { chart: ManifoldChart::new(anchor, side, r0), field, avoid, embed, label }
    }

    pub fn params(&self) -> usize {
        self.chart.dim()
    }

    fn fixed(&self, c: usize) -> Option<usize> {
        self.embed[c]
    }
}

#[derive(Clone, Debug)]
pub struct TreeProblem {
    pub edges: [Edge; 3],
    pub dim: usize,
    pub periodic: Vec<bool>,
    /// K' in tree space.
    pub escape: BoxN,
    pub s: PerturbationTriple,
    /// |p0| - |p1| - |p2|.
    pub expected_dim: i64,
    pub gradings: [i64; 3],
    /// Field of the third edge on tree space and rho, for the positivity check.
    pub sink_field: Option<(Field, f64)>,
    pub ids: [String; 3],
}

/// Chart parameters (u_k, ell_k) of the three edges and values for free slots.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeParams {
    pub u: [Vec<f64>; 3],
    pub ell: [f64; 3],
    /// Per edge, a full tree-space vector; only free-slot entries are read.
    pub free: [Vec<f64>; 3],
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTree {
    pub params: TreeParams,
    /// E_k(gamma_k, s_k) for k = 1,2,3 (all equal up to the residual).
    pub ends: [Vec<f64>; 3],
    pub meeting: Vec<f64>,
    pub residual: f64,
    pub cond: f64,
    /// Value of the third edge's field at gamma_3(0), when defined.
    pub sink_value: Option<f64>,
    /// Edge polylines in tree space, each from its critical point to its finite end.
    #[serde(skip)]
    pub edges: [Vec<Vec<f64>>; 3],
}

impl TreeProblem {
    /// Unknowns minus equations of the reduced matching system.
    pub fn balance(&self) -> i64 {
        let unknowns: usize = self.edges.iter().map(Edge::params).sum();
        let eqs: usize = (0..self.dim)
            .map(|c| self.edges.iter().filter(|e| e.fixed(c).is_some()).count().saturating_sub(1))
            .sum();
        unknowns as i64 - eqs as i64
    }

    pub fn check(&self) -> Result<()> {
        if self.expected_dim != 0 {
            return Err(Error::Trees(format!(
                "expected dimension |p0| - |p1| - |p2| = {} - {} - {} = {} is not 0; isolated count undefined",
                self.gradings[2], self.gradings[0], self.gradings[1], self.expected_dim
            )));
        }
        if self.balance() != self.expected_dim {
            return Err(Error::Internal(format!(
                "tree system for ({},{};{}) has {} more unknowns than equations, expected {}",
                self.ids[0],
                self.ids[1],
                self.ids[2],
                self.balance(),
                self.expected_dim
            )));
        }
        if !self.s.within_bound() {
            return Err(Error::Trees("perturbation exceeds delta_pert".into()));
        }
        Ok(())
    }

    fn wrap(&self, c: usize, d: f64) -> f64 {
        if self.periodic[c] {
            crate::family::wrap_half(d)
        } else {
            d
        }
    }

    /// Reduced residual from three chart points: for every coordinate, differences of the
    /// perturbed values between consecutive edges that fix it.
    pub fn reduced(&self, pts: [&[f64]; 3]) -> Vec<f64> {
        let mut r = Vec::new();
        for c in 0..self.dim {
            let mut prev: Option<f64> = None;
            for k in 0..3 {
                if let Some(i) = self.edges[k].fixed(c) {
                    let v = pts[k][i] + self.s.s[k][c];
                    if let Some(p) = prev {
                        r.push(self.wrap(c, p - v));
                    }
                    prev = Some(v);
                }
            }
        }
        r
    }

    /// Free-slot values making the full system consistent with the reduced one.
    pub fn solve_free(&self, pts: [&[f64]; 3]) -> [Vec<f64>; 3] {
        let mut free: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; self.dim]);
        for c in 0..self.dim {
            let target = (0..3).find_map(|k| self.edges[k].fixed(c).map(|i| pts[k][i] + self.s.s[k][c]));
            for k in 0..3 {
                if self.edges[k].fixed(c).is_none() {
                    free[k][c] = target.unwrap_or(0.0) - self.s.s[k][c];
                }
            }
        }
        free
    }

    /// gamma_k(0) in tree space.
    pub fn end(&self, k: usize, pt: &[f64], free: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|c| match self.edges[k].fixed(c) {
                Some(i) => pt[i],
                None => free[c],
            })
            .collect()
    }

    fn chart_point(&self, k: usize, u: &[f64], ell: f64, opts: &FlowOpts) -> Option<Vec<f64>> {
        let e = &self.edges[k];
        let ev = e.chart.point(&e.field, u, ell, &e.avoid, opts);
        ev.ok.then_some(ev.point)
    }

    /// Full residual (E1+s1 - E2-s2, E2+s2 - E3-s3) in R^{2D}.
    pub fn tree_residual(&self, th: &TreeParams, opts: &FlowOpts) -> Option<Vec<f64>> {
        let mut ends = Vec::with_capacity(3);
        for k in 0..3 {
            let p = self.chart_point(k, &th.u[k], th.ell[k], opts)?;
            let e = self.end(k, &p, &th.free[k]);
            ends.push(e.iter().zip(&self.s.s[k]).map(|(a, b)| a + b).collect::<Vec<f64>>());
        }
        let mut r = delta_mod(&ends[0], &ends[1], &self.periodic);
        r.extend(delta_mod(&ends[1], &ends[2], &self.periodic));
        Some(r)
    }

    fn unknown(&self, u: &[Vec<f64>; 3], ell: [f64; 3]) -> Unknown {
        let mut blocks = Vec::new();
        for k in 0..3 {
            if self.edges[k].params() > 0 {
                blocks.push(Block::Sphere(u[k].clone()));
                blocks.push(Block::Real(ell[k]));
            }
        }
        Unknown(blocks)
    }

    fn split(&self, x: &Unknown) -> ([Vec<f64>; 3], [f64; 3]) {
        let mut u: [Vec<f64>; 3] = std::array::from_fn(|_| vec![]);
        let mut ell = [0.0; 3];
        let mut it = x.0.iter();
        for k in 0..3 {
            if self.edges[k].params() > 0 {
                if let (Some(Block::Sphere(a)), Some(Block::Real(l))) = (it.next(), it.next()) {
                    u[k] = a.clone();
                    ell[k] = *l;
                }
            }
        }
        (u, ell)
    }

    fn points(&self, u: &[Vec<f64>; 3], ell: [f64; 3], opts: &FlowOpts) -> Option<[Vec<f64>; 3]> {
        let a = self.chart_point(0, &u[0], ell[0], opts)?;
        let b = self.chart_point(1, &u[1], ell[1], opts)?;
        let c = self.chart_point(2, &u[2], ell[2], opts)?;
        Some([a, b, c])
    }
}

/// Seed and solve one tree problem; returns the deduplicated, validated trees.
pub fn solve_trees(problem: &TreeProblem, clouds: [&Cloud; 3], opts: &FlowOpts, grids: &Grids, tree_dedup: f64, exec: Exec) -> Result<Vec<FlowTree>> {
    problem.check()?;
    let seeds = cloud::seed_triples(problem, clouds, grids);
    log::debug!(
        "trees ({},{};{}): {} seeds, best score {:.3e}",
        problem.ids[0],
        problem.ids[1],
        problem.ids[2],
        seeds.len(),
        seeds.first().map_or(f64::NAN, |s| s.0)
    );
    let gn = GnOpts { tol: opts.tol_match, fd_step: opts.fd_step, max_iter: 40 };
    let f = |x: &Unknown| -> Option<Vec<f64>> {
        let (u, ell) = problem.split(x);
        let pts = problem.points(&u, ell, opts)?;
        Some(problem.reduced([&pts[0], &pts[1], &pts[2]]))
    };
    let sols = exec.map(&seeds, |(_, u, ell)| gauss_newton(f, problem.unknown(u, *ell), &gn));

    let mut trees: Vec<FlowTree> = Vec::new();
    for s in sols.into_iter().flatten() {
        if s.cond > opts.cond_cap {
            return Err(Error::Trees(format!(
                "non-transverse at this s (condition {:.2e} for ({},{};{})); resample s",
                s.cond, problem.ids[0], problem.ids[1], problem.ids[2]
            )));
        }
        let (u, ell) = problem.split(&s.x);
        let Some(pts) = problem.points(&u, ell, opts) else { continue };
        let free = problem.solve_free([&pts[0], &pts[1], &pts[2]]);
        let ends: [Vec<f64>; 3] = std::array::from_fn(|k| problem.end(k, &pts[k], &free[k]));
        let meeting: Vec<f64> = ends[0].iter().zip(&problem.s.s[0]).map(|(a, b)| a + b).collect();
        let mut dup = false;
        for t in &trees {
            let d = norm(&delta_mod(&t.meeting, &meeting, &problem.periodic));
            if d < 1e-6 {
                dup = true;
                break;
            }
            if d < tree_dedup {
                return Err(Error::Trees(format!(
                    "two trees for ({},{};{}) meet {d:.2e} apart: degenerate near-double tree; resample s",
                    problem.ids[0], problem.ids[1], problem.ids[2]
                )));
            }
        }
        if dup {
            continue;
        }
        let params = TreeParams { u, ell, free };
        let tree = finish(problem, params, ends, meeting, s.residual, s.cond, opts, grids)?;
        trees.push(tree);
    }
    trees.sort_by(|a, b| crate::critical::cmp_points(&a.meeting, &b.meeting));
    Ok(trees)
}

/// Trace the edges and check the tree invariants.
#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &TreeProblem,
    params: TreeParams,
    ends: [Vec<f64>; 3],
    meeting: Vec<f64>,
    residual: f64,
    cond: f64,
    opts: &FlowOpts,
    grids: &Grids,
) -> Result<FlowTree> {
    let mut polys: [Vec<Vec<f64>>; 3] = std::array::from_fn(|_| vec![]);
    for k in 0..3 {
        let e = &problem.edges[k];
        let mut pts = vec![e.chart.anchor.coords.clone()];
        if params.ell[k] > 0.0 {
            let tr = e.chart.trace(&e.field, &params.u[k], grids.arc_step, params.ell[k], &e.avoid, opts);
            pts.extend(tr.into_iter().map(|s| s.1));
        }
        let end_pt = e.chart.point(&e.field, &params.u[k], params.ell[k], &e.avoid, opts).point;
        pts.push(end_pt);
        // free slots sit at their end value along the whole edge
        let poly: Vec<Vec<f64>> = pts.iter().map(|p| problem.end(k, p, &params.free[k])).collect();
        polys[k] = if k == 2 { poly.into_iter().rev().collect() } else { poly };
    }
    for (k, poly) in polys.iter().enumerate() {
        if let Some(bad) = poly.iter().find(|p| !problem.escape.contains_mod(p, &problem.periodic)) {
            return Err(Error::Internal(format!(
                "tree ({},{};{}) edge {} leaves K' at {:?}",
                problem.ids[0],
                problem.ids[1],
                problem.ids[2],
                k + 1,
                bad
            )));
        }
    }
    let mut sink_value = None;
    if let Some((f3, rho)) = &problem.sink_field {
        let v = f3.value(&ends[2])?;
        let vm = f3.value(&meeting)?;
        if v <= rho / 4.0 || vm <= rho / 4.0 {
            return Err(Error::Internal(format!(
                "tree ({},{};{}) has sink value {v:.6} (meeting point {vm:.6}) <= rho/4 = {:.6}",
                problem.ids[0],
                problem.ids[1],
                problem.ids[2],
                rho / 4.0
            )));
        }
        sink_value = Some(v);
    }
    Ok(FlowTree { params, ends, meeting, residual, cond, sink_value, edges: polys })
}

pub fn count_trees(problem: &TreeProblem, clouds: [&Cloud; 3], opts: &FlowOpts, grids: &Grids, tree_dedup: f64, exec: Exec) -> Result<u8> {
    Ok((solve_trees(problem, clouds, opts, grids, tree_dedup, exec)?.len() % 2) as u8)
}

/// Jacobian condition of the reduced system at given parameters (diagnostics).
pub fn condition_at(problem: &TreeProblem, th: &TreeParams, opts: &FlowOpts) -> Option<f64> {
    let x = problem.unknown(&th.u, th.ell);
    let n = x.local_dim();
    let f = |x: &Unknown| {
        let (u, ell) = problem.split(x);
        let pts = problem.points(&u, ell, opts)?;
        Some(problem.reduced([&pts[0], &pts[1], &pts[2]]))
    };
    let r0 = f(&x)?;
    let mut j = nalgebra::DMatrix::zeros(r0.len(), n);
    let h = opts.fd_step;
    let mut d = vec![0.0; n];
    for c in 0..n {
        d[c] = h;
        let rp = f(&x.step(&d))?;
        d[c] = -h;
        let rm = f(&x.step(&d))?;
        d[c] = 0.0;
        for r in 0..r0.len() {
            j[(r, c)] = (rp[r] - rm[r]) / (2.0 * h);
        }
    }
    Some(condition(&j))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbations_respect_the_bound() {
        for seed in 0..50 {
            let p = PerturbationTriple::sample(4, 0.01, seed);
            assert!(p.within_bound());
            assert_eq!(p, PerturbationTriple::sample(4, 0.01, seed));
        }
        assert_ne!(PerturbationTriple::sample(2, 0.1, 1), PerturbationTriple::sample(2, 0.1, 2));
    }

    use crate::config::{Grids, Tolerances};
    use crate::expr::{parse, Layout};
    use crate::family::morse_mode_fields;

    struct Torus {
        h: [Field; 3],
        opts: FlowOpts,
        grids: Grids,
    }

    fn torus() -> Torus {
        let l = Layout::torus(2);
        let f = parse("cos(2*pi*x) + 0.3*cos(2*pi*y)", &l).unwrap();
        let g = parse("cos(2*pi*y) + 0.3*cos(2*pi*x)", &l).unwrap();
        let grids = Grids { sphere_dirs: 24, ..Grids::default() };
        Torus { h: morse_mode_fields(&f, &g, 2), opts: FlowOpts::from_tol(&Tolerances::default()), grids }
    }

    fn corners(f: &Field) -> Vec<Anchor> {
        [[0.0, 0.0], [0.0, 0.5], [0.5, 0.0], [0.5, 0.5]].iter().map(|c| Anchor::new(f, c).unwrap()).collect()
    }

    fn problem(t: &Torus, p1: [f64; 2], p2: [f64; 2], p0: [f64; 2], seed: u64) -> TreeProblem {
        let id = vec![Some(0), Some(1)];
        let a = |k: usize, c: [f64; 2]| Anchor::new(&t.h[k], &c).unwrap();
        let edge = |k: usize, c, side| Edge::new(t.h[k].clone(), a(k, c), side, corners(&t.h[k]), id.clone(), format!("h{k}"), 1e-2);
        let gr = |k: usize, c| a(k, c).index as i64;
        let gradings = [gr(0, p1), gr(1, p2), gr(2, p0)];
        TreeProblem {
            edges: [edge(0, p1, Side::Unstable), edge(1, p2, Side::Unstable), edge(2, p0, Side::Stable)],
            dim: 2,
            periodic: vec![true, true],
            escape: BoxN::cube(2, 0.0, 1.0),
            s: PerturbationTriple::sample(2, 0.05, seed),
            expected_dim: gradings[2] - gradings[0] - gradings[1],
            gradings,
            sink_field: None,
            ids: ["a".into(), "b".into(), "c".into()],
        }
    }

    fn count(t: &Torus, pr: &TreeProblem) -> usize {
        let clouds: Vec<Cloud> = pr.edges.iter().map(|e| Cloud::build(e, &t.grids, &t.opts, Exec::Sequential)).collect();
        solve_trees(pr, [&clouds[0], &clouds[1], &clouds[2]], &t.opts, &t.grids, 1e-4, Exec::Sequential).unwrap().len()
    }

    #[test]
    fn torus_products_pair_the_two_circles() {
        let t = torus();
        let (s1, s2, top) = ([0.0, 0.5], [0.5, 0.0], [0.0, 0.0]);
        let mut m = [[0usize; 2]; 2];
        for (i, a) in [s1, s2].iter().enumerate() {
            for (j, b) in [s1, s2].iter().enumerate() {
                m[i][j] = count(&t, &problem(&t, *a, *b, top, 3)) % 2;
            }
        }
        // nondegenerate pairing with vanishing squares
        assert_eq!(m, [[0, 1], [1, 0]]);
    }

    #[test]
    fn unit_times_class_is_the_class() {
        let t = torus();
        // minimum of f is the unit; h3 has its saddles at the same corners
        assert_eq!(count(&t, &problem(&t, [0.5, 0.5], [0.0, 0.5], [0.0, 0.5], 5)) % 2, 1);
        assert_eq!(count(&t, &problem(&t, [0.5, 0.5], [0.0, 0.5], [0.5, 0.0], 5)) % 2, 0);
    }

    #[test]
    fn nonzero_dimension_is_rejected() {
        let t = torus();
        let pr = problem(&t, [0.0, 0.5], [0.0, 0.5], [0.0, 0.5], 1);
        assert!(matches!(pr.check(), Err(Error::Trees(m)) if m.contains("not 0")));
    }

    #[test]
    fn residual_is_periodic() {
        let t = torus();
        let pr = problem(&t, [0.0, 0.5], [0.5, 0.0], [0.0, 0.0], 2);
        let a = pr.reduced([&[0.1, 0.2], &[0.3, 0.4], &[0.5, 0.6]]);
        let b = pr.reduced([&[1.1, -0.8], &[0.3, 2.4], &[0.5, 0.6]]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
