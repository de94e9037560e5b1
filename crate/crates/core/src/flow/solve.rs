//! Gauss-Newton over products of spheres and Euclidean factors.

use nalgebra::{DMatrix, DVector};

/// One factor of an unknown: a unit vector, a scalar, or a free vector.
#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    Sphere(Vec<f64>),
    Real(f64),
    Vector(Vec<f64>),
}

impl Block {
    fn local_dim(&self) -> usize {
        match self {
            Block::Sphere(u) => u.len().saturating_sub(1),
            Block::Real(_) => 1,
            Block::Vector(v) => v.len(),
        }
    }

    fn step(&self, d: &[f64]) -> Block {
        match self {
            Block::Sphere(u) => {
                if u.len() <= 1 {
                    return self.clone();
                }
                let t = tangent_basis(u);
                let mut v = u.clone();
                for (j, dj) in d.iter().enumerate() {
                    for i in 0..v.len() {
                        v[i] += dj * t[j][i];
                    }
                }
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                Block::Sphere(v.iter().map(|x| x / n).collect())
            }
            Block::Real(r) => Block::Real(r + d[0]),
            Block::Vector(v) => Block::Vector(v.iter().zip(d).map(|(a, b)| a + b).collect()),
        }
    }
}

/// Orthonormal basis of the complement of unit vector `u` (Householder).
pub fn tangent_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let k = u.len();
    let s = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = u.to_vec();
    v[0] += s;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    // columns 1..k of H = I - 2 v v^T / (v^T v); column 0 is -s*u
    (1..k)
        .map(|c| (0..k).map(|r| if r == c { 1.0 } else { 0.0 } - 2.0 * v[r] * v[c] / vv).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Unknown(pub Vec<Block>);

impl Unknown {
    pub fn local_dim(&self) -> usize {
        self.0.iter().map(Block::local_dim).sum()
    }

    pub fn step(&self, d: &[f64]) -> Unknown {
        let mut at = 0;
        Unknown(
            self.0
                .iter()
                .map(|b| {
                    let m = b.local_dim();
                    let out = b.step(&d[at..at + m]);
                    at += m;
                    out
                })
                .collect(),
        )
    }

    /// Which block each local coordinate belongs to.
    pub fn owners(&self) -> Vec<usize> {
        self.0.iter().enumerate().flat_map(|(i, b)| std::iter::repeat_n(i, b.local_dim())).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GnOpts {
    pub tol: f64,
    pub fd_step: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub struct GnSolution {
    pub x: Unknown,
    pub residual: f64,
    /// sigma_max / sigma_min of the Jacobian at the solution (1 when there are no unknowns).
    pub cond: f64,
    pub iterations: usize,
}

fn nrm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Forward-difference Jacobian. `f_partial(x, block)` may reuse work for untouched blocks;
/// here everything is recomputed through `f`.
fn jacobian<F>(f: &F, x: &Unknown, r0: &[f64], h: f64) -> Option<DMatrix<f64>>
where
    F: Fn(&Unknown) -> Option<Vec<f64>>,
{
    let n = x.local_dim();
    let m = r0.len();
    let mut j = DMatrix::zeros(m, n);
    let mut d = vec![0.0; n];
    for c in 0..n {
        d[c] = h;
        let xp = x.step(&d);
        d[c] = -h;
        let xm = x.step(&d);
        d[c] = 0.0;
        // central differences where both sides evaluate, one-sided otherwise
        match (f(&xp), f(&xm)) {
            (Some(rp), Some(rm)) => {
                for r in 0..m {
                    j[(r, c)] = (rp[r] - rm[r]) / (2.0 * h);
                }
            }
            (Some(rp), None) => {
                for r in 0..m {
                    j[(r, c)] = (rp[r] - r0[r]) / h;
                }
            }
            (None, Some(rm)) => {
                for r in 0..m {
                    j[(r, c)] = (r0[r] - rm[r]) / h;
                }
            }
            (None, None) => return None,
        }
    }
    Some(j)
}

pub fn condition(j: &DMatrix<f64>) -> f64 {
    if j.ncols() == 0 {
        return 1.0;
    }
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimize |f(x)| from `x0`; succeeds when the residual drops below `opts.tol`.
pub fn gauss_newton<F>(f: F, x0: Unknown, opts: &GnOpts) -> Option<GnSolution>
where
    F: Fn(&Unknown) -> Option<Vec<f64>>,
{
    let mut x = x0;
    let mut r = f(&x)?;
    let mut rn = nrm(&r);
    for it in 0..opts.max_iter {
        let j = jacobian(&f, &x, &r, opts.fd_step)?;
        if rn < opts.tol {
            return Some(GnSolution { cond: condition(&j), x, residual: rn, iterations: it });
        }
        if j.ncols() == 0 {
            return None;
        }
        let svd = j.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let step = svd.solve(&(-DVector::from_vec(r.clone())), smax * 1e-12).ok()?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let d: Vec<f64> = step.iter().map(|s| s * alpha).collect();
            let xn = x.step(&d);
            if let Some(rnew) = f(&xn) {
                let nn = nrm(&rnew);
                if nn < rn {
                    x = xn;
                    r = rnew;
                    rn = nn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rn < opts.tol {
        let j = jacobian(&f, &x, &r, opts.fd_step)?;
        return Some(GnSolution { cond: condition(&j), x, residual: rn, iterations: opts.max_iter });
    }
    None
}
