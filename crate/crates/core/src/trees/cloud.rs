//! Sampled charts and nearest-neighbour seeding for tree matching.

use std::collections::HashMap;

use super::{Edge, TreeProblem};
use crate::config::Grids;
use crate::exec::Exec;
use crate::family::{norm, wrap_half};
use crate::flow::{grid_spacing, sphere_grid, FlowOpts};

/// Chart samples of one edge: label, arclength and point.
#[derive(Clone, Debug)]
pub struct Cloud {
    pub u: Vec<Vec<f64>>,
    pub ell: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Angular spacing of the label grid.
    pub spacing: f64,
}

impl Cloud {
    pub fn build(edge: &Edge, grids: &Grids, opts: &FlowOpts, exec: Exec) -> Cloud {
        let k = edge.params();
        let dirs = sphere_grid(k, grids.sphere_dirs);
        let traces = exec.map(&dirs, |u| edge.chart.trace(&edge.field, u, grids.arc_step, grids.arc_max, &edge.avoid, opts));
        let mut c = Cloud { u: vec![], ell: vec![], points: vec![], spacing: grid_spacing(k, dirs.len()) };
        for (u, tr) in dirs.iter().zip(traces) {
            for (l, p) in tr {
                c.u.push(u.clone());
                c.ell.push(l);
                c.points.push(p);
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Uniform bucket grid on a few coordinates, periodic ones with period 1.
#[derive(Debug)]
pub struct HashGrid {
    h: f64,
    periodic: Vec<bool>,
    ncell: Vec<i64>,
    pts: Vec<Vec<f64>>,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl HashGrid {
    pub fn new(pts: Vec<Vec<f64>>, periodic: Vec<bool>, h: f64) -> HashGrid {
        let ncell = periodic.iter().map(|&p| if p { (1.0 / h).floor().max(1.0) as i64 } else { 0 }).collect();
        let mut g = HashGrid { h, periodic, ncell, pts, cells: HashMap::new() };
        for i in 0..g.pts.len() {
            let key = g.key(&g.pts[i]);
            g.cells.entry(key).or_default().push(i);
        }
        g
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter()
            .enumerate()
            .map(|(c, &v)| {
                if self.periodic[c] {
                    let n = self.ncell[c];
                    ((v.rem_euclid(1.0) * n as f64).floor() as i64).min(n - 1)
                } else {
                    (v / self.h).floor() as i64
                }
            })
            .collect()
    }

    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(c, (x, y))| {
                let d = if self.periodic[c] { wrap_half(x - y) } else { x - y };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Up to `k` nearest stored points among the neighbouring cells, as (distance, index).
    pub fn nearest(&self, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let base = self.key(q);
        let m = base.len();
        let mut out: Vec<(f64, usize)> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let total = 3usize.pow(m as u32);
        for code in 0..total {
            let mut key = base.clone();
            let mut c = code;
            for (d, kv) in key.iter_mut().enumerate() {
                *kv += (c % 3) as i64 - 1;
                c /= 3;
                if self.periodic[d] {
                    *kv = kv.rem_euclid(self.ncell[d]);
                }
            }
            if !seen.insert(key.clone()) {
                continue;
            }
            if let Some(ids) = self.cells.get(&key) {
                out.extend(ids.iter().map(|&i| (self.dist(q, &self.pts[i]), i)));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.truncate(k);
        out
    }
}

pub(crate) type Seed = (f64, [Vec<f64>; 3], [f64; 3]);

/// Perturbed value of coordinate `c` seen by edge `k` at chart point `p`, if edge k fixes it.
fn coord(pr: &TreeProblem, k: usize, c: usize, p: &[f64]) -> Option<f64> {
    pr.edges[k].embed[c].map(|i| p[i] + pr.s.s[k][c])
}

fn project(pr: &TreeProblem, k: usize, coords: &[usize], p: &[f64]) -> Vec<f64> {
    coords.iter().map(|&c| coord(pr, k, c, p).unwrap_or(0.0)).collect()
}

/// Candidate (u, ell) triples ordered by reduced residual, thinned in parameter space.
pub(crate) fn seed_triples(pr: &TreeProblem, clouds: [&Cloud; 3], grids: &Grids) -> Vec<Seed> {
    if clouds.iter().any(|c| c.is_empty()) {
        return vec![];
    }
    let fixed = |k: usize| -> Vec<usize> { (0..pr.dim).filter(|&c| pr.edges[k].embed[c].is_some()).collect() };
    let m12: Vec<usize> = fixed(0).into_iter().filter(|&c| pr.edges[1].embed[c].is_some()).collect();
    let m3 = fixed(2);
    let h = 4.0 * grids.arc_step;
    let per = |cs: &[usize]| cs.iter().map(|&c| pr.periodic[c]).collect::<Vec<_>>();

    // query the smaller of the first two clouds into the larger
    let (qk, gk) = if clouds[0].len() <= clouds[1].len() { (0, 1) } else { (1, 0) };
    let g12 = HashGrid::new(clouds[gk].points.iter().map(|p| project(pr, gk, &m12, p)).collect(), per(&m12), h);
    let g3 = HashGrid::new(clouds[2].points.iter().map(|p| project(pr, 2, &m3, p)).collect(), per(&m3), h);

    let mut cands: Vec<(f64, [usize; 3])> = Vec::new();
    for (a, pa) in clouds[qk].points.iter().enumerate() {
        for (_, b) in g12.nearest(&project(pr, qk, &m12, pa), 8) {
            let (i1, i2) = if qk == 0 { (a, b) } else { (b, a) };
            let (p1, p2) = (&clouds[0].points[i1], &clouds[1].points[i2]);
            let target: Vec<f64> = m3
                .iter()
                .map(|&c| match (coord(pr, 0, c, p1), coord(pr, 1, c, p2)) {
                    (Some(x), Some(y)) => {
                        if pr.periodic[c] {
                            x + 0.5 * wrap_half(y - x)
                        } else {
                            0.5 * (x + y)
                        }
                    }
                    (Some(x), None) | (None, Some(x)) => x,
                    (None, None) => 0.0,
                })
                .collect();
            for (_, i3) in g3.nearest(&target, 4) {
                let r = pr.reduced([p1, p2, &clouds[2].points[i3]]);
                cands.push((norm(&r), [i1, i2, i3]));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));

    let radius: [f64; 3] = std::array::from_fn(|k| 2.5 * clouds[k].spacing.min(0.5) + 2.5 * grids.arc_step);
    let mut kept: Vec<(f64, [usize; 3])> = Vec::new();
    for (s, ids) in cands {
        let close = kept.iter().any(|(_, o)| {
            (0..3).all(|k| {
                let (a, b) = (ids[k], o[k]);
                let du = norm(&clouds[k].u[a].iter().zip(&clouds[k].u[b]).map(|(x, y)| x - y).collect::<Vec<_>>());
                du + (clouds[k].ell[a] - clouds[k].ell[b]).abs() < radius[k]
            })
        });
        if !close {
            kept.push((s, ids));
            if kept.len() >= grids.newton_seeds {
                break;
            }
        }
    }
    kept.into_iter()
        .map(|(s, ids)| (s, std::array::from_fn(|k| clouds[k].u[ids[k]].clone()), std::array::from_fn(|k| clouds[k].ell[ids[k]])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_neighbours_wrap() {
        let g = HashGrid::new(vec![vec![0.99, 0.5], vec![0.5, 0.5], vec![0.02, 0.51]], vec![true, false], 0.1);
        let n = g.nearest(&[0.005, 0.5], 3);
        assert_eq!(n.len(), 2);
        assert_eq!(n[0].1, 0);
        assert!((n[0].0 - 0.015).abs() < 1e-12);
    }
}
