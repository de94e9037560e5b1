//! Critical points of w and its relatives; rho and the perturbation radius.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{Grids, Tolerances};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::family::{norm, BoxN, Field, QuadraticLike};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub id: String,
    pub coords: Vec<f64>,
    pub value: f64,
    pub index: usize,
    pub grading: i64,
    pub hess_eigs: Vec<f64>,
}

/// Output of a search: the isolated roots and how many diagonal roots were dropped.
#[derive(Clone, Debug)]
pub struct CritSearch {
    /// Isolated roots sorted by value (negative ones included).
    pub isolated: Vec<CriticalPoint>,
    pub diagonal_hits: usize,
}

impl CritSearch {
    pub fn positive(&self) -> Vec<CriticalPoint> {
        self.isolated.iter().filter(|c| c.value > 0.0).cloned().collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoBound {
    pub rho: f64,
    pub lipschitz_l: f64,
    pub delta_pert: f64,
}

fn grid_points(bx: &BoxN, density: usize, pinned: &[usize]) -> Vec<Vec<f64>> {
    let d = bx.dim();
    let counts: Vec<usize> = (0..d).map(|i| if pinned.contains(&i) { 1 } else { density }).collect();
    let total: usize = counts.iter().product();
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|i| {
                    let c = counts[i];
                    let j = k % c;
                    k /= c;
                    if c == 1 && pinned.contains(&i) {
                        0.0
                    } else {
                        let [a, b] = bx.0[i];
                        a + (j as f64 + 0.5) * (b - a) / c as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Levenberg-Marquardt on grad f = 0 from one seed.
fn newton_from(f: &Field, seed: &[f64], tol_grad: f64) -> Option<Vec<f64>> {
    let d = f.dim();
    let mut x = seed.to_vec();
    let mut mu = 1e-6;
    let mut j = f.jet(&x).ok()?;
    let mut gn = j.grad.norm();
    for _ in 0..80 {
        if gn < tol_grad {
            f.wrap(&mut x);
            return Some(x);
        }
        let h = &j.hess;
        let a = h.transpose() * h;
        let rhs = -(h.transpose() * &j.grad);
        let mut improved = false;
        for _ in 0..12 {
            let m = &a + DMatrix::identity(d, d) * mu;
            let Some(step) = m.clone().cholesky().map(|c| c.solve(&rhs)) else {
                mu *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if !f.in_escape(&xn) {
                mu *= 10.0;
                continue;
            }
            if let Ok(jn) = f.jet(&xn) {
                let gnn = jn.grad.norm();
                if gnn < gn {
                    x = xn;
                    j = jn;
                    gn = gnn;
                    mu = (mu * 0.1).max(1e-14);
                    improved = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if gn < tol_grad {
        f.wrap(&mut x);
        Some(x)
    } else {
        None
    }
}

fn dedup(f: &Field, mut pts: Vec<(f64, Vec<f64>)>, tol: f64) -> Vec<(f64, Vec<f64>)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| cmp_points(&a.1, &b.1)));
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for p in pts {
        if !out.iter().any(|q| f.dist(&q.1, &p.1) < tol) {
            out.push(p);
        }
    }
    out
}

pub fn cmp_points(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Deduplicated converged Newton roots of grad f (no classification).
pub fn newton_roots(f: &Field, bx: &BoxN, grid: usize, tol_grad: f64, tol_dedup: f64) -> Result<Vec<Vec<f64>>> {
    let seeds = grid_points(bx, grid, &[]);
    let raw: Vec<(f64, Vec<f64>)> = seeds
        .iter()
        .filter_map(|s| newton_from(f, s, tol_grad))
        .filter(|x| bx.contains_mod(x, &f.periodic))
        .map(|x| (f.value(&x).unwrap_or(0.0), x))
        .collect();
    Ok(dedup(f, raw, tol_dedup).into_iter().map(|p| p.1).collect())
}

/// Classify a root by its Hessian spectrum.
pub fn classify(f: &Field, x: &[f64], shift: i64, tol: &Tolerances) -> Result<CriticalPoint> {
    let j = f.jet(x)?;
    let mut eigs: Vec<f64> = j.hess.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.total_cmp(b));
    let min_abs = eigs.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    if min_abs <= tol.tol_degenerate {
        return Err(Error::Critical(format!(
            "degenerate critical point of {} at {:?} (value {:.6}, min |eig| {:.2e}); the family is not generic",
            f.tag.label(),
            x,
            j.value,
            min_abs
        )));
    }
    let index = eigs.iter().filter(|e| **e < 0.0).count();
    Ok(CriticalPoint {
        id: String::new(),
        coords: x.to_vec(),
        value: j.value,
        index,
        grading: index as i64 - shift,
        hess_eigs: eigs,
    })
}

/// Grid + Newton search, classification and diagonal exclusion.
///
/// `pinned` coordinates are seeded at 0 only (exact quadratic directions).
pub fn find_critical_points(
    f: &Field,
    bx: &BoxN,
    grid: usize,
    pinned: &[usize],
    shift: i64,
    tol: &Tolerances,
    exec: Exec,
) -> Result<CritSearch> {
    if grid == 0 {
        return Err(Error::Critical("grid density must be positive".into()));
    }
    let seeds = grid_points(bx, grid, pinned);
    let roots: Vec<Option<Vec<f64>>> = exec.map(&seeds, |s| newton_from(f, s, tol.tol_grad));
    let mut diagonal = 0;
    let mut iso = Vec::new();
    for x in roots.into_iter().flatten() {
        if !bx.contains_mod(&x, &f.periodic) {
            continue;
        }
        let v = f.value(&x)?;
        if v.abs() < tol.tol_value {
            diagonal += 1;
        } else {
            iso.push((v, x));
        }
    }
    let iso = dedup(f, iso, tol.tol_dedup);
    let mut out = Vec::with_capacity(iso.len());
    for (_, x) in iso {
        out.push(classify(f, &x, shift, tol)?);
    }
    let mut k_pos = 0;
    let mut k_neg = 0;
    for c in out.iter_mut() {
        if c.value > 0.0 {
            k_pos += 1;
            c.id = format!("p{k_pos}");
        } else {
            k_neg += 1;
            c.id = format!("n{k_neg}");
        }
    }
    Ok(CritSearch { isolated: out, diagonal_hits: diagonal })
}

/// The positive generators of w, ids renumbered p1.. in value order.
pub fn chords(search: &CritSearch) -> Vec<CriticalPoint> {
    search.positive()
}

/// Insert 0_Q into slot k for the pair (i,j) and check it is critical for `ext`.
pub fn iota(
    p: &CriticalPoint,
    i: usize,
    j: usize,
    n: usize,
    nf: usize,
    q: &QuadraticLike,
    ext: &Field,
    tol: &Tolerances,
) -> Result<CriticalPoint> {
    let k = 6 - i - j;
    let x = &p.coords[..n];
    let e = &p.coords[n..n + nf];
    let ep = &p.coords[n + nf..n + 2 * nf];
    let mut slots: Vec<&[f64]> = vec![&[]; 3];
    slots[i - 1] = e;
    slots[j - 1] = ep;
    slots[k - 1] = &q.zero;
    let mut y = x.to_vec();
    for s in slots {
        y.extend_from_slice(s);
    }
    let g = ext.grad_vec(&y)?;
    if norm(&g) > 10.0 * tol.tol_grad.max(1e-12) {
        return Err(Error::Internal(format!(
            "iota({},{};{}) of {} is not critical (|grad| = {:.2e})",
            i,
            j,
            3,
            p.id,
            norm(&g)
        )));
    }
    let shift = ((j - i) * nf) as i64;
    let mut c = classify(ext, &y, shift, tol)?;
    c.id = p.id.clone();
    let sign_plus = k < i || k > j;
    let expected = if sign_plus { p.index } else { p.index + nf };
    if c.index != expected || c.grading != p.grading {
        return Err(Error::Internal(format!(
            "iota({i},{j};3) of {}: index {} (expected {expected}), grading {} (expected {})",
            p.id, c.index, c.grading, p.grading
        )));
    }
    Ok(c)
}

/// rho, the sampled Lipschitz constant of the extended fields over `k`, and rho/(4L).
pub fn rho_and_perturbation_bound(
    crits: &[CriticalPoint],
    fields: &[&Field],
    k: &BoxN,
    grids: &Grids,
    exec: Exec,
) -> Result<RhoBound> {
    let rho = crits
        .iter()
        .filter(|c| c.value > 0.0)
        .map(|c| c.value)
        .fold(f64::INFINITY, f64::min);
    if !rho.is_finite() {
        return Err(Error::Critical("no Reeb chords".into()));
    }
    let pts = grid_points(k, grids.lipschitz_grid, &[]);
    let mut l = 0.0f64;
    for f in fields {
        let norms: Vec<f64> = exec.map(&pts, |p| f.grad_vec(p).map(|g| norm(&g)).unwrap_or(0.0));
        l = norms.into_iter().fold(l, f64::max);
    }
    if l <= 0.0 {
        return Err(Error::Critical("zero Lipschitz estimate".into()));
    }
    Ok(RhoBound { rho, lipschitz_l: l, delta_pert: rho / (4.0 * l) })
}

/// Smallest |grad w| over grid points of `outer` not in `inner`.
pub fn annulus_gradient_floor(f: &Field, inner: &BoxN, outer: &BoxN, density: usize, pinned: &[usize], exec: Exec) -> f64 {
    let pts: Vec<Vec<f64>> = grid_points(outer, density, pinned)
        .into_iter()
        .filter(|p| !inner.contains_mod(p, &f.periodic))
        .collect();
    exec.map(&pts, |p| f.grad_vec(p).map(|g| norm(&g)).unwrap_or(f64::INFINITY))
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

pub fn hessian(f: &Field, x: &[f64]) -> Result<DMatrix<f64>> {
    Ok(f.jet(x)?.hess)
}

pub fn gradient(f: &Field, x: &[f64]) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(f.grad_vec(x)?))
}
