//! Generating families and the fields derived from them.

mod field;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use field::{delta_mod, norm, wrap_half, BoxN, Field, FieldTag};

use crate::error::{Error, Result};
use crate::expr::{Expr, Func, Layout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Base {
    Euclidean,
    Torus,
}

/// Q on R^N with a single nondegenerate minimum 0_Q of value 0.
#[derive(Clone, Debug)]
pub struct QuadraticLike {
    pub expr: Expr,
    pub zero: Vec<f64>,
    /// Outside this box Q(e) = scale * |e|^2.
    pub bx: BoxN,
    pub scale: f64,
}

impl QuadraticLike {
    /// scale * |e|^2.
    pub fn standard(nf: usize, scale: f64) -> QuadraticLike {
        let mut e = Expr::num(0.0);
        for j in 0..nf {
            let t = Expr::var(j).powi(2);
            e = if j == 0 { t } else { e + t };
        }
        let expr = if scale == 1.0 { e } else { Expr::num(scale) * e };
        QuadraticLike { expr, zero: vec![0.0; nf], bx: BoxN::cube(nf, -1.0, 1.0), scale }
    }

    pub fn fiber_dim(&self) -> usize {
        self.zero.len()
    }

    pub fn scaled(&self, lambda: f64) -> QuadraticLike {
        QuadraticLike {
            expr: Expr::num(lambda) * self.expr.clone(),
            zero: self.zero.clone(),
            bx: self.bx.clone(),
            scale: self.scale * lambda,
        }
    }

    /// Check the defining properties; `grid` seeds per axis for the critical search.
    pub fn validate(&self, grid: usize) -> Result<()> {
        let nf = self.fiber_dim();
        let t = self.expr.compile(nf);
        let j = t.jet(&self.zero)?;
        if j.value.abs() > 1e-12 || j.grad.norm() > 1e-10 {
            return Err(Error::Family(format!("Q: 0_Q = {:?} is not a zero-valued critical point", self.zero)));
        }
        let eig = j.hess.clone().symmetric_eigen().eigenvalues;
        if eig.iter().any(|&l| l <= 1e-8) {
            return Err(Error::Family("Q: Hessian at 0_Q is not positive definite".into()));
        }
        let big = self.bx.inflate(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..400 {
            let p: Vec<f64> = big.0.iter().map(|iv| rng.random_range(iv[0]..iv[1])).collect();
            if self.bx.contains(&p) {
                continue;
            }
            let want = self.scale * p.iter().map(|v| v * v).sum::<f64>();
            if (t.value(&p)? - want).abs() > 1e-9 * (1.0 + want) {
                return Err(Error::Family(format!("Q: not scale*|e|^2 outside its box at {p:?}")));
            }
        }
        let f = Field::new(
            self.expr.clone(),
            Layout::family(0, nf),
            vec![false; nf],
            self.bx.clone(),
            FieldTag::Other,
        );
        let roots = crate::critical::newton_roots(&f, &self.bx, grid, 1e-10, 1e-6)?;
        for r in roots {
            if norm(&f.delta(&r, &self.zero)) > 1e-6 {
                return Err(Error::Family(format!("Q: second critical point at {r:?}")));
            }
        }
        Ok(())
    }
}

/// F(x,e) = chi(x,e) * (core(x,e) - A.e) + A.e, plus optional quadratic summands.
#[derive(Clone, Debug)]
pub struct GeneratingFamily {
    pub base: Base,
    pub n: usize,
    pub nf: usize,
    pub core: Expr,
    pub slope: Vec<f64>,
    pub inner_box: BoxN,
    pub outer_box: BoxN,
    /// The assembled field on R^{n+N}.
    pub field: Expr,
    /// Fiber indices carrying an exact +-e^2 summand (from stabilization), with sign.
    pub quadratic: Vec<(usize, f64)>,
}

/// 1-D cutoff: 1 on [a,b], 0 outside [lo,hi].
fn cutoff(v: Expr, a: f64, b: f64, lo: f64, hi: f64) -> Expr {
    let left = (v.clone() - Expr::num(lo)) / Expr::num(a - lo);
    let right = (Expr::num(hi) - v) / Expr::num(hi - b);
    Expr::call(Func::Step, left) * Expr::call(Func::Step, right)
}

fn linear(slope: &[f64], offset: usize) -> Expr {
    let mut out: Option<Expr> = None;
    for (j, &a) in slope.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let t = if a == 1.0 { Expr::var(offset + j) } else { Expr::num(a) * Expr::var(offset + j) };
        out = Some(match out {
            None => t,
            Some(o) => o + t,
        });
    }
    out.unwrap_or(Expr::num(0.0))
}

impl GeneratingFamily {
    pub fn new(
        base: Base,
        n: usize,
        nf: usize,
        core: Expr,
        slope: Vec<f64>,
        inner_box: BoxN,
        outer_box: BoxN,
    ) -> Result<GeneratingFamily> {
        let d = n + nf;
        if nf == 0 {
            return Err(Error::Family("fiber dimension N must be positive".into()));
        }
        if slope.len() != nf {
            return Err(Error::Family(format!("slope has {} entries, N = {nf}", slope.len())));
        }
        if slope.iter().all(|&a| a == 0.0) {
            return Err(Error::Family("slope A must be nonzero".into()));
        }
        if inner_box.dim() != d || outer_box.dim() != d {
            return Err(Error::Family(format!("boxes must have n+N = {d} intervals")));
        }
        if core.arity() > d {
            return Err(Error::Family("core uses variables beyond n+N".into()));
        }
        let blended: Vec<usize> = match base {
            Base::Euclidean => (0..d).collect(),
            Base::Torus => (n..d).collect(),
        };
        if !inner_box.select(&blended).strictly_inside(&outer_box.select(&blended)) {
            return Err(Error::Family("inner_box must lie strictly inside outer_box".into()));
        }
        let mut chi: Option<Expr> = None;
        for &i in &blended {
            let [a, b] = inner_box.0[i];
            let [lo, hi] = outer_box.0[i];
            let c = cutoff(Expr::var(i), a, b, lo, hi);
            chi = Some(match chi {
                None => c,
                Some(x) => x * c,
            });
        }
        let lin = linear(&slope, n);
        let field = chi.expect("at least one fiber coordinate") * (core.clone() - lin.clone()) + lin;
        Ok(GeneratingFamily { base, n, nf, core, slope, inner_box, outer_box, field, quadratic: vec![] })
    }

    pub fn layout(&self) -> Layout {
        Layout::family(self.n, self.nf)
    }

    fn periodic_base(&self) -> bool {
        self.base == Base::Torus
    }

    /// Box of the fiber coordinates.
    pub fn fiber_box(&self, outer: bool) -> BoxN {
        let b = if outer { &self.outer_box } else { &self.inner_box };
        BoxN(b.0[self.n..].to_vec())
    }

    pub fn base_box(&self) -> BoxN {
        match self.base {
            Base::Euclidean => BoxN(self.outer_box.0[..self.n].to_vec()),
            Base::Torus => BoxN::cube(self.n, 0.0, 1.0),
        }
    }

    fn base_escape(&self) -> BoxN {
        match self.base {
            Base::Euclidean => self.base_box().inflate(1.5),
            Base::Torus => BoxN::cube(self.n, 0.0, 1.0),
        }
    }

    /// F with its fibre variables replaced by copy `k` in an (n + copies*N)-dim layout.
    fn f_in_copy(&self, k: usize) -> Expr {
        let (n, nf) = (self.n, self.nf);
        self.field.remap(&|i| if i < n { i } else { n + k * nf + (i - n) })
    }

    fn periodic(&self, copies: usize) -> Vec<bool> {
        let mut p = vec![self.periodic_base(); self.n];
        p.extend(vec![false; copies * self.nf]);
        p
    }

    /// w(x,e,e') = F(x,e) - F(x,e').
    pub fn difference(&self) -> Field {
        let expr = self.f_in_copy(0) - self.f_in_copy(1);
        let fb = self.fiber_box(true);
        let domain = self.base_box().concat(&fb).concat(&fb);
        let fe = fb.inflate(1.5);
        let escape = self.base_escape().concat(&fe).concat(&fe);
        Field::new(expr, Layout::copies(self.n, self.nf, 2), self.periodic(2), domain, FieldTag::Difference)
            .with_escape(escape)
    }

    /// w_{i,j;3} on R^{n+3N}; pairs are 1-based with i < j.
    pub fn extend(&self, i: usize, j: usize, q: &QuadraticLike) -> Result<Field> {
        if !(1 <= i && i < j && j <= 3) {
            return Err(Error::Family(format!("bad pair ({i},{j})")));
        }
        if q.fiber_dim() != self.nf {
            return Err(Error::Family(format!(
                "Q has fiber dimension {}, family has {}",
                q.fiber_dim(),
                self.nf
            )));
        }
        let k = 6 - i - j;
        let (n, nf) = (self.n, self.nf);
        let qk = q.expr.remap(&|m| n + (k - 1) * nf + m);
        let sign_plus = k < i || k > j;
        let diff = self.f_in_copy(i - 1) - self.f_in_copy(j - 1);
        let expr = if sign_plus { diff + qk } else { diff - qk };
        let fb = self.fiber_box(true);
        let domain = self.base_box().concat(&fb).concat(&fb).concat(&fb);
        let fe = fb.inflate(1.5);
        let escape = self.base_escape().concat(&fe).concat(&fe).concat(&fe);
        Ok(Field::new(expr, Layout::copies(n, nf, 3), self.periodic(3), domain, FieldTag::Extended { i, j })
            .with_escape(escape))
    }

    /// F +- e_{N+1}^2.
    pub fn stabilize(&self, sign: f64) -> GeneratingFamily {
        let nf = self.nf + 1;
        let new_var = self.n + self.nf;
        let q = Expr::var(new_var).powi(2);
        let (field, core) = if sign > 0.0 {
            (self.field.clone() + q.clone(), self.core.clone() + q)
        } else {
            (self.field.clone() - q.clone(), self.core.clone() - q)
        };
        let r_in = self.fiber_box(false).max_abs();
        let r_out = self.fiber_box(true).max_abs();
        let mut inner = self.inner_box.clone();
        inner.0.push([-r_in, r_in]);
        let mut outer = self.outer_box.clone();
        outer.0.push([-r_out, r_out]);
        let mut slope = self.slope.clone();
        slope.push(0.0);
        let mut quadratic = self.quadratic.clone();
        quadratic.push((self.nf, sign.signum()));
        GeneratingFamily { base: self.base, n: self.n, nf, core, slope, inner_box: inner, outer_box: outer, field, quadratic }
    }

    /// F o Phi with Phi(x,e) = (x, phi_x(e)); `phi` holds N expressions in (x,e).
    pub fn precompose_fpd(&self, phi: &[Expr], samples: usize, seed: u64) -> Result<GeneratingFamily> {
        let (n, nf) = (self.n, self.nf);
        if phi.len() != nf {
            return Err(Error::Family(format!("fpd needs {nf} component expressions, got {}", phi.len())));
        }
        let d = n + nf;
        let tapes: Vec<_> = phi.iter().map(|p| p.compile(d)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outer = &self.outer_box;
        let periodic = self.periodic(1);
        let big = outer.inflate(3.0);
        let mut checked = 0;
        while checked < samples {
            let p: Vec<f64> = big.0.iter().map(|iv| rng.random_range(iv[0]..iv[1])).collect();
            if outer.contains_mod(&p, &periodic) {
                continue;
            }
            checked += 1;
            for (j, t) in tapes.iter().enumerate() {
                let v = t.value(&p)?;
                if (v - p[n + j]).abs() > 1e-12 {
                    return Err(Error::Family(format!(
                        "fpd is not the identity outside the outer box: component {} moves {:?}",
                        j + 1,
                        p
                    )));
                }
            }
        }
        for _ in 0..samples {
            let p: Vec<f64> = outer.0.iter().map(|iv| rng.random_range(iv[0]..iv[1])).collect();
            let mut jac = nalgebra::DMatrix::zeros(nf, nf);
            let mut g = vec![0.0; d];
            for (r, t) in tapes.iter().enumerate() {
                t.gradient(&p, &mut g)?;
                for c in 0..nf {
                    jac[(r, c)] = g[n + c];
                }
            }
            if jac.determinant().abs() < 1e-8 {
                return Err(Error::Family(format!("fpd Jacobian is singular at {p:?}")));
            }
        }
        let sub = |i: usize| if i < n { Expr::var(i) } else { phi[i - n].clone() };
        let mut out = self.clone();
        out.field = self.field.subst(&sub);
        out.core = self.core.subst(&sub);
        Ok(out)
    }

    /// max |F - A.e - quadratic summands| over points sampled outside the outer box.
    pub fn exterior_residual(&self, samples: usize, seed: u64) -> Result<f64> {
        let d = self.n + self.nf;
        let t = self.field.compile(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let periodic = self.periodic(1);
        let big = self.outer_box.inflate(3.0);
        let quad: Vec<usize> = self.quadratic.iter().map(|q| self.n + q.0).collect();
        let mut worst = 0.0f64;
        let mut k = 0;
        while k < samples {
            let p: Vec<f64> = big.0.iter().map(|iv| rng.random_range(iv[0]..iv[1])).collect();
            // quadratic directions never blend, so test exteriority on the others
            let outside = (0..d).any(|i| {
                !quad.contains(&i) && !periodic[i] && (p[i] < self.outer_box.0[i][0] || p[i] > self.outer_box.0[i][1])
            });
            if !outside {
                continue;
            }
            k += 1;
            let mut want: f64 = self.slope.iter().enumerate().map(|(j, a)| a * p[self.n + j]).sum();
            for &(j, s) in &self.quadratic {
                want += s * p[self.n + j] * p[self.n + j];
            }
            worst = worst.max((t.value(&p)? - want).abs());
        }
        Ok(worst)
    }
}

/// (f, g, f+g) on the flat torus of dimension `d`.
pub fn morse_mode_fields(f: &Expr, g: &Expr, d: usize) -> [Field; 3] {
    let layout = Layout::torus(d);
    let mk = |e: Expr, k| Field::new(e, layout.clone(), vec![true; d], BoxN::cube(d, 0.0, 1.0), FieldTag::Morse(k));
    [mk(f.clone(), 1), mk(g.clone(), 2), mk(f.clone() + g.clone(), 3)]
}
