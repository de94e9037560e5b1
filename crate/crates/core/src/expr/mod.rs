//! Scalar expressions over R^D with exact first and second derivatives.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   = term { ("+" | "-") term } ;
//! term   = unary { ("*" | "/") unary } ;
//! unary  = "-" unary | power ;
//! power  = atom [ "^" int | "^" "-" int | "^" "(" ["-"] int ")" ] ;
//! atom   = number | ident | func "(" expr ")" | "(" expr ")" ;
//! func   = "sin" | "cos" | "exp" | "bump" | "step" ;
//! ```
//!
//! Identifiers are resolved against a [`Layout`]. `pi` is a constant.
//! `bump(t)` is 1 for |t| <= 1, 0 for |t| >= 2, and C^2 in between;
//! `step(t)` is the quintic smoothstep clamped to [0, 1].

mod parse;
mod tape;

use std::collections::BTreeMap;
use std::fmt;

pub use parse::{parse, ParseError};
pub use tape::{EvalError, Jet, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Bump,
    Step,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Bump => "bump",
            Func::Step => "step",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "bump" => Func::Bump,
            "step" => Func::Step,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

/// Quintic smoothstep clamped to [0,1], with first and second derivative.
pub fn smoothstep(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let t2 = t * t;
        let v = t2 * t * (10.0 - 15.0 * t + 6.0 * t2);
        let d = 30.0 * t2 * (1.0 - t) * (1.0 - t);
        let dd = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
        (v, d, dd)
    }
}

/// The cutoff primitive: value, first and second derivative.
pub fn bump(t: f64) -> (f64, f64, f64) {
    let a = t.abs();
    if a <= 1.0 || a >= 2.0 {
        return (if a <= 1.0 { 1.0 } else { 0.0 }, 0.0, 0.0);
    }
    let (v, d, dd) = smoothstep(2.0 - a);
    (v, -t.signum() * d, dd)
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    pub fn powi(self, k: i32) -> Expr {
        Expr::Pow(Box::new(self), k)
    }

    /// Largest variable index used, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.arity(),
            Expr::Bin(_, a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Replace every variable by an expression.
    pub fn subst(&self, f: &dyn Fn(usize) -> Expr) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(i) => f(*i),
            Expr::Neg(a) => Expr::Neg(Box::new(a.subst(f))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.subst(f)), Box::new(b.subst(f))),
            Expr::Pow(a, k) => Expr::Pow(Box::new(a.subst(f)), *k),
            Expr::Call(g, a) => Expr::Call(*g, Box::new(a.subst(f))),
        }
    }

    /// Renumber variables.
    pub fn remap(&self, map: &dyn Fn(usize) -> usize) -> Expr {
        self.subst(&|i| Expr::Var(map(i)))
    }

    pub fn compile(&self, dim: usize) -> Tape {
        Tape::compile(self, dim)
    }

    /// Value, gradient and Hessian at `p`.
    pub fn differentiate(&self, p: &[f64]) -> Result<Jet, EvalError> {
        Tape::compile(self, p.len()).jet(p)
    }

    pub fn display<'a>(&'a self, layout: &'a Layout) -> Printer<'a> {
        Printer { e: self, layout }
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

macro_rules! bin_impl {
    ($tr:ident, $m:ident, $op:expr) => {
        impl std::ops::$tr for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                Expr::Bin($op, Box::new(self), Box::new(rhs))
            }
        }
    };
}
bin_impl!(Add, add, BinOp::Add);
bin_impl!(Sub, sub, BinOp::Sub);
bin_impl!(Mul, mul, BinOp::Mul);
bin_impl!(Div, div, BinOp::Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

/// Names of the coordinates of R^D, plus accepted aliases.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    names: Vec<String>,
    lookup: BTreeMap<String, usize>,
}

impl Layout {
    pub fn new(names: Vec<String>) -> Layout {
        let lookup = names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Layout { names, lookup }
    }

    pub fn alias(mut self, name: &str, idx: usize) -> Layout {
        self.lookup.entry(name.to_string()).or_insert(idx);
        self
    }

    /// Base coordinates x1..xn followed by fiber coordinates e1..eN.
    pub fn family(n: usize, nf: usize) -> Layout {
        let mut names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        names.extend((1..=nf).map(|j| format!("e{j}")));
        let mut l = Layout::new(names);
        for i in 0..n {
            l = l.alias(&format!("x_{}", i + 1), i);
        }
        for j in 0..nf {
            l = l.alias(&format!("e_{}", j + 1), n + j);
        }
        if n == 1 {
            l = l.alias("x", 0);
        }
        if nf == 1 {
            l = l.alias("e", n);
        }
        l
    }

    /// Torus coordinates x1..xd, with x, y, z as aliases.
    pub fn torus(d: usize) -> Layout {
        let mut l = Layout::new((1..=d).map(|i| format!("x{i}")).collect());
        for (i, a) in ["x", "y", "z"].iter().enumerate().take(d) {
            l = l.alias(a, i);
        }
        for i in 0..d {
            l = l.alias(&format!("x_{}", i + 1), i);
        }
        l
    }

    /// Base coordinates followed by `copies` blocks of fiber coordinates e_{k,j}.
    pub fn copies(n: usize, nf: usize, copies: usize) -> Layout {
        let mut names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        for k in 1..=copies {
            for j in 1..=nf {
                names.push(format!("e_{{{k},{j}}}"));
            }
        }
        Layout::new(names)
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }
}

pub struct Printer<'a> {
    e: &'a Expr,
    layout: &'a Layout,
}

impl Printer<'_> {
    fn child(&self, e: &Expr, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let p = Printer { e, layout: self.layout };
        if e.prec() < min_prec {
            write!(f, "({p})")
        } else {
            write!(f, "{p}")
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.e {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "-{}", -v),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => match self.layout.names.get(*i) {
                Some(n) => write!(f, "{n}"),
                None => write!(f, "?{i}"),
            },
            Expr::Neg(a) => {
                write!(f, "-")?;
                self.child(a, f, 3)
            }
            Expr::Bin(op, a, b) => {
                let (p, s) = match op {
                    BinOp::Add => (1, " + "),
                    BinOp::Sub => (1, " - "),
                    BinOp::Mul => (2, "*"),
                    BinOp::Div => (2, "/"),
                };
                self.child(a, f, p)?;
                write!(f, "{s}")?;
                // left associative: right operand needs strictly higher precedence
                self.child(b, f, p + 1)
            }
            Expr::Pow(a, k) => {
                self.child(a, f, 5)?;
                if *k < 0 {
                    write!(f, "^(-{})", -(*k as i64))
                } else {
                    write!(f, "^{k}")
                }
            }
            Expr::Call(g, a) => {
                write!(f, "{}(", g.name())?;
                self.child(a, f, 0)?;
                write!(f, ")")
            }
        }
    }
}
