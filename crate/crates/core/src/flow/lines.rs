//! Counting isolated gradient lines between two critical points.

use serde::Serialize;

use super::solve::{gauss_newton, Block, GnOpts, Unknown};
use super::{integrate, level_orbit, sphere_grid, Anchor, FlowOpts, ManifoldChart, Side, Termination};
use crate::config::Grids;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::family::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LineMethod {
    /// Value of q not above p: nothing to count.
    Empty,
    /// 1-dim unstable manifold of p shot forward.
    ForwardShoot,
    /// 1-dim stable manifold of q shot backward.
    BackwardShoot,
    /// Both manifolds carried to the middle level and matched.
    LevelMatch,
}

#[derive(Clone, Debug, Serialize)]
pub struct LineCount {
    pub count: usize,
    pub parity: u8,
    pub method: LineMethod,
    /// One polyline per line found, from p towards q.
    pub lines: Vec<Vec<Vec<f64>>>,
}

impl LineCount {
    fn new(method: LineMethod, lines: Vec<Vec<Vec<f64>>>) -> LineCount {
        LineCount { count: lines.len(), parity: (lines.len() % 2) as u8, method, lines }
    }
}

fn same_point(field: &Field, a: &[f64], b: &[f64]) -> bool {
    field.dist(a, b) < 1e-9
}

/// Count gradient lines from `p` to `q` (index of q one above p) modulo 2.
///
/// `all` is the full set of critical points of `field`; it is the stop set for shooting.
pub fn count_lines(
    field: &Field,
    p: &Anchor,
    q: &Anchor,
    all: &[Anchor],
    opts: &FlowOpts,
    grids: &Grids,
    exec: Exec,
) -> Result<LineCount> {
    if q.index != p.index + 1 {
        return Err(Error::Flow(format!(
            "index gap {} - {} != 1: dimension != 0, count undefined at this grading",
            q.index, p.index
        )));
    }
    if q.value <= p.value {
        return Ok(LineCount::new(LineMethod::Empty, vec![]));
    }
    let d = field.dim();
    if d - p.index == 1 {
        shoot(field, p, q, all, 1.0, opts, exec)
    } else if q.index == 1 {
        shoot(field, q, p, all, -1.0, opts, exec).map(|mut c| {
            for l in c.lines.iter_mut() {
                l.reverse();
            }
            c
        })
    } else {
        level_match(field, p, q, opts, grids, exec)
    }
}

/// Shoot both branches of the 1-dim manifold of `from` and keep those captured by `to`.
fn shoot(field: &Field, from: &Anchor, to: &Anchor, all: &[Anchor], sign: f64, opts: &FlowOpts, exec: Exec) -> Result<LineCount> {
    let side = if sign > 0.0 { Side::Unstable } else { Side::Stable };
    let chart = ManifoldChart::new(from.clone(), side, opts.r0);
    let target = all.iter().position(|a| same_point(field, &a.coords, &to.coords));
    let Some(target) = target else {
        return Err(Error::Internal("target critical point missing from the stop set".into()));
    };
    let dirs = [vec![1.0], vec![-1.0]];
    let trajs = exec.map(&dirs, |u| {
        let b = chart.base(u);
        let mut t = integrate(field, &b, sign, all, opts);
        t.points.insert(0, from.coords.clone());
        t
    });
    let mut lines = Vec::new();
    for t in trajs {
        match t.termination {
            Termination::Converged(i) if i == target => lines.push(t.points),
            Termination::StepUnderflow => {
                return Err(Error::Flow(format!(
                    "step-size underflow near {:?}",
                    t.points.last().map(|p| p.to_vec()).unwrap_or_default()
                )))
            }
            _ => {}
        }
    }
    let method = if sign > 0.0 { LineMethod::ForwardShoot } else { LineMethod::BackwardShoot };
    Ok(LineCount::new(method, lines))
}

/// Orbit labels for level matching: the sphere grid plus copies tilted by exp(-rate * tau).
///
/// With rates spread apart, labels reaching the level along a slow direction form an
/// exponentially thin set; each tilt concentrates samples where one rate has just
/// climbed the value `gap` in the linear model.
/// Labels plus the tilt group each came from (0 = untilted).
fn tilted_labels(chart: &ManifoldChart, gap: f64, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let k = chart.dim();
    let mut out = sphere_grid(k, n);
    let mut group = vec![0; out.len()];
    if k < 2 {
        return (out, group);
    }
    let lo = chart.rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = chart.rates.iter().cloned().fold(0.0, f64::max);
    if hi < 2.0 * lo {
        return (out, group);
    }
    let r2 = chart.r0 * chart.r0;
    let mut refs = chart.rates.clone();
    refs.sort_by(f64::total_cmp);
    refs.dedup_by(|a, b| *a < 1.5 * *b);
    let base = out.clone();
    // each reference rate keeps slower directions and damps faster ones
    for &rf in refs.iter().filter(|&&r| r < hi / 1.5) {
        // time for the reference direction to travel from r0 to the level
        let t_ref = (2.0 * gap / (rf * r2)).max(1.0).ln() / (2.0 * rf);
        let taus = [t_ref / 3.0, 2.0 * t_ref / 3.0, t_ref];
        for tau in taus {
            let g = group.last().map_or(0, |g| g + 1);
            for y in &base {
                let u: Vec<f64> =
                    y.iter().zip(&chart.rates).map(|(yi, l)| yi * (-(l - rf).max(0.0) * tau).exp()).collect();
                let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nu > 1e-300 {
                    out.push(u.into_iter().map(|x| x / nu).collect());
                    group.push(g);
                }
            }
        }
    }
    (out, group)
}

/// Typical angular spacing of `sphere_grid(k, n)`.
pub(crate) fn grid_spacing(k: usize, count: usize) -> f64 {
    match k {
        0 | 1 => f64::INFINITY,
        2 => 2.0 * std::f64::consts::PI / count as f64,
        3 => (4.0 * std::f64::consts::PI / count as f64).sqrt(),
        _ => (2.0 * std::f64::consts::PI.powi(2) / count as f64).powf(1.0 / (k as f64 - 1.0)),
    }
}

fn level_match(
    field: &Field,
    p: &Anchor,
    q: &Anchor,
    opts: &FlowOpts,
    grids: &Grids,
    exec: Exec,
) -> Result<LineCount> {
    let c = 0.5 * (p.value + q.value);
    let cp = ManifoldChart::new(p.clone(), Side::Unstable, opts.r0);
    let cq = ManifoldChart::new(q.clone(), Side::Stable, opts.r0);
    let a_of = |u: &[f64]| -> Option<Vec<f64>> {
        let b = cp.base(u);
        let v = field.value(&b).ok()?;
        level_orbit(field, &b, 1.0, c - v, opts, false).map(|o| o.end)
    };
    let b_of = |v: &[f64]| -> Option<Vec<f64>> {
        let b = cq.base(v);
        let h = field.value(&b).ok()?;
        level_orbit(field, &b, -1.0, h - c, opts, false).map(|o| o.end)
    };
    let (us, ug) = tilted_labels(&cp, c - p.value, grids.sphere_dirs);
    let (vs, vg) = tilted_labels(&cq, q.value - c, grids.sphere_dirs);
    // seeding only needs rough positions
    let rough = FlowOpts { rtol: opts.rtol.max(1e-7), atol: opts.atol.max(1e-9), ..*opts };
    let a_pts = exec.map(&us, |u| {
        let b = cp.base(u);
        let v = field.value(&b).ok()?;
        level_orbit(field, &b, 1.0, c - v, &rough, false).map(|o| o.end)
    });
    let b_pts = exec.map(&vs, |v| {
        let b = cq.base(v);
        let h = field.value(&b).ok()?;
        level_orbit(field, &b, -1.0, h - c, &rough, false).map(|o| o.end)
    });

    // candidate pairs: nearest partner from each side
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    let nearest = |x: &[f64], pts: &[Option<Vec<f64>>]| -> Option<(f64, usize)> {
        pts.iter()
            .enumerate()
            .filter_map(|(i, p)| p.as_ref().map(|p| (field.dist(x, p), i)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    };
    for (i, a) in a_pts.iter().enumerate() {
        if let Some(a) = a {
            if let Some((dd, j)) = nearest(a, &b_pts) {
                cands.push((dd, i, j));
            }
        }
    }
    for (j, b) in b_pts.iter().enumerate() {
        if let Some(b) = b {
            if let Some((dd, i)) = nearest(b, &a_pts) {
                cands.push((dd, i, j));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    cands.dedup_by(|a, b| a.1 == b.1 && a.2 == b.2);
    // a candidate inside the mismatch radius of an already picked one adds nothing
    let img = |pts: &[Option<Vec<f64>>], i: usize| pts[i].clone().expect("candidates have images");
    let mut picked: Vec<(usize, usize, f64)> = Vec::new();
    let take = |gap: f64, i: usize, j: usize, picked: &mut Vec<(usize, usize, f64)>| {
        let (ai, bj) = (img(&a_pts, i), img(&b_pts, j));
        let near = picked.iter().any(|&(pi, pj, pg)| {
            (pi, pj) == (i, j) || field.dist(&ai, &img(&a_pts, pi)) + field.dist(&bj, &img(&b_pts, pj)) < pg
        });
        if !near {
            picked.push((i, j, gap));
        }
    };
    // a few seeds per tilt group so fast directions cannot crowd out the rest
    let groups: Vec<(bool, usize)> = {
        let mut g: Vec<(bool, usize)> = ug.iter().map(|&g| (true, g)).chain(vg.iter().map(|&g| (false, g))).collect();
        g.sort();
        g.dedup();
        g
    };
    if groups.len() > 2 {
        for &(side, g) in &groups {
            let before = picked.len();
            for &(gap, i, j) in &cands {
                if picked.len() >= before + 2 {
                    break;
                }
                if (side && ug[i] == g) || (!side && vg[j] == g) {
                    take(gap, i, j, &mut picked);
                }
            }
        }
    }
    let reserved = picked.len();
    for &(gap, i, j) in &cands {
        if picked.len() >= reserved + grids.newton_seeds {
            break;
        }
        take(gap, i, j, &mut picked);
    }

    let gn = GnOpts { tol: opts.tol_match, fd_step: opts.fd_step, max_iter: 40 };
    let residual = |x: &Unknown| -> Option<Vec<f64>> {
        let (Block::Sphere(u), Block::Sphere(v)) = (&x.0[0], &x.0[1]) else { return None };
        let a = a_of(u)?;
        let b = b_of(v)?;
        Some(field.delta(&a, &b))
    };
    log::debug!("level {c:.6}: {} candidate pairs, {} seeds, best gap {:.3e}", cands.len(), picked.len(), cands.first().map_or(f64::NAN, |c| c.0));
    let sols = exec.map(&picked, |&(i, j, _)| {
        let x0 = Unknown(vec![Block::Sphere(us[i].clone()), Block::Sphere(vs[j].clone())]);
        gauss_newton(residual, x0, &gn)
    });

    let mut found: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    for s in sols.into_iter().flatten() {
        if s.cond > opts.cond_cap {
            return Err(Error::Flow(format!(
                "suspected non-transverse configuration (condition {:.2e}); perturb family or lower tolerances",
                s.cond
            )));
        }
        let (Block::Sphere(u), Block::Sphere(v)) = (&s.x.0[0], &s.x.0[1]) else { unreachable!() };
        let Some(a) = a_of(u) else { continue };
        let mut dup = false;
        for (_, _, f) in &found {
            let dd = field.dist(f, &a);
            if dd < 1e-6 {
                dup = true;
                break;
            }
            if dd < 1e-4 {
                return Err(Error::Flow(format!(
                    "ambiguous cluster: two lines {dd:.2e} apart at level {c:.6}; suspected non-transverse configuration; perturb family or lower tolerances"
                )));
            }
        }
        if !dup {
            found.push((u.clone(), v.clone(), a));
        }
    }
    found.sort_by(|a, b| crate::critical::cmp_points(&a.2, &b.2));

    let mut lines = Vec::new();
    for (u, v, _) in &found {
        let bp = cp.base(u);
        let bq = cq.base(v);
        let (Some(up), Some(down)) = (
            level_orbit(field, &bp, 1.0, c - field.value(&bp)?, opts, true),
            level_orbit(field, &bq, -1.0, field.value(&bq)? - c, opts, true),
        ) else {
            continue;
        };
        let mut pts = vec![p.coords.clone()];
        pts.extend(up.samples.into_iter().map(|s| s.1));
        pts.extend(down.samples.into_iter().rev().map(|s| s.1));
        pts.push(q.coords.clone());
        lines.push(pts);
    }
    Ok(LineCount::new(LineMethod::LevelMatch, lines))
}
