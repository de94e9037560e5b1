use std::cell::RefCell;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::{bump, smoothstep, BinOp, Expr, Func, Layout};

#[derive(Clone, Debug, PartialEq)]
pub enum EvalError {
    DivisionByZero { sub: String },
    NonFinite { at: Vec<f64> },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::DivisionByZero { sub } => write!(f, "division by zero in `{sub}`"),
            EvalError::NonFinite { at } => write!(f, "non-finite value at {at:?}"),
        }
    }
}

impl std::error::Error for EvalError {}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Powi(u32, i32),
    Sin(u32),
    Cos(u32),
    Exp(u32),
    Bump(u32),
    Step(u32),
}

/// Value, gradient and Hessian of a field at a point.
#[derive(Clone, Debug)]
pub struct Jet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Flat instruction list compiled from an [`Expr`].
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    dim: usize,
    div_src: Vec<(u32, String)>,
}

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

impl Tape {
    pub fn compile(e: &Expr, dim: usize) -> Tape {
        assert!(e.arity() <= dim, "expression uses {} variables, layout has {dim}", e.arity());
        let mut t = Tape { ops: Vec::new(), dim, div_src: Vec::new() };
        let names = Layout::new((0..dim).map(|i| format!("v{i}")).collect());
        t.emit(e, &names);
        t
    }

    fn push(&mut self, op: Op) -> u32 {
        self.ops.push(op);
        (self.ops.len() - 1) as u32
    }

    fn emit(&mut self, e: &Expr, names: &Layout) -> u32 {
        match e {
            Expr::Num(v) => self.push(Op::Const(*v)),
            Expr::Var(i) => self.push(Op::Var(*i)),
            Expr::Neg(a) => {
                let a = self.emit(a, names);
                self.push(Op::Neg(a))
            }
            Expr::Bin(op, a, b) => {
                let a = self.emit(a, names);
                let b = self.emit(b, names);
                let id = self.push(match op {
                    BinOp::Add => Op::Add(a, b),
                    BinOp::Sub => Op::Sub(a, b),
                    BinOp::Mul => Op::Mul(a, b),
                    BinOp::Div => Op::Div(a, b),
                });
                if *op == BinOp::Div {
                    self.div_src.push((id, e.display(names).to_string()));
                }
                id
            }
            Expr::Pow(a, k) => {
                let a = self.emit(a, names);
                self.push(Op::Powi(a, *k))
            }
            Expr::Call(f, a) => {
                let a = self.emit(a, names);
                self.push(match f {
                    Func::Sin => Op::Sin(a),
                    Func::Cos => Op::Cos(a),
                    Func::Exp => Op::Exp(a),
                    Func::Bump => Op::Bump(a),
                    Func::Step => Op::Step(a),
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn div_error(&self, at: usize) -> EvalError {
        let sub = self
            .div_src
            .iter()
            .find(|(i, _)| *i as usize == at)
            .map(|(_, s)| s.clone())
            .unwrap_or_default();
        EvalError::DivisionByZero { sub }
    }

    fn forward(&self, x: &[f64], v: &mut Vec<f64>) -> Result<f64, EvalError> {
        debug_assert_eq!(x.len(), self.dim);
        v.clear();
        for (i, op) in self.ops.iter().enumerate() {
            let r = match *op {
                Op::Const(c) => c,
                Op::Var(k) => x[k],
                Op::Neg(a) => -v[a as usize],
                Op::Add(a, b) => v[a as usize] + v[b as usize],
                Op::Sub(a, b) => v[a as usize] - v[b as usize],
                Op::Mul(a, b) => v[a as usize] * v[b as usize],
                Op::Div(a, b) => {
                    let d = v[b as usize];
                    if d == 0.0 {
                        return Err(self.div_error(i));
                    }
                    v[a as usize] / d
                }
                Op::Powi(a, k) => v[a as usize].powi(k),
                Op::Sin(a) => v[a as usize].sin(),
                Op::Cos(a) => v[a as usize].cos(),
                Op::Exp(a) => v[a as usize].exp(),
                Op::Bump(a) => bump(v[a as usize]).0,
                Op::Step(a) => smoothstep(v[a as usize]).0,
            };
            v.push(r);
        }
        let out = *v.last().unwrap_or(&0.0);
        if !out.is_finite() {
            return Err(EvalError::NonFinite { at: x.to_vec() });
        }
        Ok(out)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            self.forward(x, &mut s.0)
        })
    }

    /// Value and gradient (reverse sweep). `g` must have length `dim`.
    pub fn gradient(&self, x: &[f64], g: &mut [f64]) -> Result<f64, EvalError> {
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            let (v, adj) = &mut *s;
            let out = self.forward(x, v)?;
            g.iter_mut().for_each(|gi| *gi = 0.0);
            adj.clear();
            adj.resize(v.len(), 0.0);
            if let Some(last) = adj.last_mut() {
                *last = 1.0;
            }
            for i in (0..self.ops.len()).rev() {
                let a_i = adj[i];
                if a_i == 0.0 {
                    continue;
                }
                match self.ops[i] {
                    Op::Const(_) => {}
                    Op::Var(k) => g[k] += a_i,
                    Op::Neg(a) => adj[a as usize] -= a_i,
                    Op::Add(a, b) => {
                        adj[a as usize] += a_i;
                        adj[b as usize] += a_i;
                    }
                    Op::Sub(a, b) => {
                        adj[a as usize] += a_i;
                        adj[b as usize] -= a_i;
                    }
                    Op::Mul(a, b) => {
                        let (va, vb) = (v[a as usize], v[b as usize]);
                        adj[a as usize] += a_i * vb;
                        adj[b as usize] += a_i * va;
                    }
                    Op::Div(a, b) => {
                        let vb = v[b as usize];
                        adj[a as usize] += a_i / vb;
                        adj[b as usize] -= a_i * v[i] / vb;
                    }
                    Op::Powi(a, k) => {
                        let va = v[a as usize];
                        if k != 0 {
                            adj[a as usize] += a_i * k as f64 * va.powi(k - 1);
                        }
                    }
                    Op::Sin(a) => adj[a as usize] += a_i * v[a as usize].cos(),
                    Op::Cos(a) => adj[a as usize] -= a_i * v[a as usize].sin(),
                    Op::Exp(a) => adj[a as usize] += a_i * v[i],
                    Op::Bump(a) => adj[a as usize] += a_i * bump(v[a as usize]).1,
                    Op::Step(a) => adj[a as usize] += a_i * smoothstep(v[a as usize]).1,
                }
            }
            Ok(out)
        })
    }

    /// Value, gradient and Hessian by forward second-order propagation.
    pub fn jet(&self, x: &[f64]) -> Result<Jet, EvalError> {
        let d = self.dim;
        let mut vals: Vec<f64> = Vec::with_capacity(self.ops.len());
        let mut gs: Vec<DVector<f64>> = Vec::with_capacity(self.ops.len());
        let mut hs: Vec<DMatrix<f64>> = Vec::with_capacity(self.ops.len());
        // chain rule through a scalar function with derivatives (f1, f2)
        let unary = |g: &DVector<f64>, h: &DMatrix<f64>, f1: f64, f2: f64| -> (DVector<f64>, DMatrix<f64>) {
            (g * f1, h * f1 + g * g.transpose() * f2)
        };
        for (i, op) in self.ops.iter().enumerate() {
            let (v, g, h) = match *op {
                Op::Const(c) => (c, DVector::zeros(d), DMatrix::zeros(d, d)),
                Op::Var(k) => {
                    let mut g = DVector::zeros(d);
                    g[k] = 1.0;
                    (x[k], g, DMatrix::zeros(d, d))
                }
                Op::Neg(a) => {
                    let a = a as usize;
                    (-vals[a], -&gs[a], -&hs[a])
                }
                Op::Add(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    (vals[a] + vals[b], &gs[a] + &gs[b], &hs[a] + &hs[b])
                }
                Op::Sub(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    (vals[a] - vals[b], &gs[a] - &gs[b], &hs[a] - &hs[b])
                }
                Op::Mul(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    let cross = &gs[a] * gs[b].transpose();
                    let h = &hs[a] * vals[b] + &hs[b] * vals[a] + &cross + cross.transpose();
                    (vals[a] * vals[b], &gs[a] * vals[b] + &gs[b] * vals[a], h)
                }
                Op::Div(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    let vb = vals[b];
                    if vb == 0.0 {
                        return Err(self.div_error(i));
                    }
                    // r = a * (1/b)
                    let (gi, hi) = unary(&gs[b], &hs[b], -1.0 / (vb * vb), 2.0 / (vb * vb * vb));
                    let inv = 1.0 / vb;
                    let cross = &gs[a] * gi.transpose();
                    let h = &hs[a] * inv + &hi * vals[a] + &cross + cross.transpose();
                    (vals[a] * inv, &gs[a] * inv + &gi * vals[a], h)
                }
                Op::Powi(a, k) => {
                    let a = a as usize;
                    let va = vals[a];
                    let kf = k as f64;
                    let f1 = if k == 0 { 0.0 } else { kf * va.powi(k - 1) };
                    let f2 = if k == 0 || k == 1 { 0.0 } else { kf * (kf - 1.0) * va.powi(k - 2) };
                    let (g, h) = unary(&gs[a], &hs[a], f1, f2);
                    (va.powi(k), g, h)
                }
                Op::Sin(a) | Op::Cos(a) | Op::Exp(a) | Op::Bump(a) | Op::Step(a) => {
                    let a = a as usize;
                    let t = vals[a];
                    let (f0, f1, f2) = match op {
                        Op::Sin(_) => (t.sin(), t.cos(), -t.sin()),
                        Op::Cos(_) => (t.cos(), -t.sin(), -t.cos()),
                        Op::Exp(_) => (t.exp(), t.exp(), t.exp()),
                        Op::Bump(_) => bump(t),
                        _ => smoothstep(t),
                    };
                    let (g, h) = unary(&gs[a], &hs[a], f1, f2);
                    (f0, g, h)
                }
            };
            vals.push(v);
            gs.push(g);
            hs.push(h);
        }
        let value = vals.pop().unwrap_or(0.0);
        let grad = gs.pop().unwrap_or_else(|| DVector::zeros(d));
        let mut hess = hs.pop().unwrap_or_else(|| DMatrix::zeros(d, d));
        if !value.is_finite() {
            return Err(EvalError::NonFinite { at: x.to_vec() });
        }
        // symmetrize away round-off from the outer products
        let ht = hess.transpose();
        hess = (&hess + ht) * 0.5;
        Ok(Jet { value, grad, hess })
    }
}
