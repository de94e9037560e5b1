use serde::{Deserialize, Serialize};

use crate::expr::{EvalError, Expr, Jet, Layout, Tape};

/// Axis-aligned box, one closed interval per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxN(pub Vec<[f64; 2]>);

impl BoxN {
    pub fn new(iv: Vec<[f64; 2]>) -> BoxN {
        BoxN(iv)
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> BoxN {
        BoxN(vec![[lo, hi]; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.0.iter().zip(p).all(|(iv, &v)| v >= iv[0] && v <= iv[1])
    }

    /// Containment ignoring the coordinates flagged periodic.
    pub fn contains_mod(&self, p: &[f64], periodic: &[bool]) -> bool {
        self.0
            .iter()
            .zip(p)
            .zip(periodic)
            .all(|((iv, &v), &per)| per || (v >= iv[0] && v <= iv[1]))
    }

    /// Scale every interval about its midpoint.
    pub fn inflate(&self, factor: f64) -> BoxN {
        BoxN(
            self.0
                .iter()
                .map(|[a, b]| {
                    let (c, h) = (0.5 * (a + b), 0.5 * (b - a) * factor);
                    [c - h, c + h]
                })
                .collect(),
        )
    }

    pub fn concat(&self, other: &BoxN) -> BoxN {
        BoxN(self.0.iter().chain(other.0.iter()).copied().collect())
    }

    pub fn select(&self, idx: &[usize]) -> BoxN {
        BoxN(idx.iter().map(|&i| self.0[i]).collect())
    }

    pub fn strictly_inside(&self, outer: &BoxN) -> bool {
        self.dim() == outer.dim()
            && self.0.iter().zip(&outer.0).all(|(a, b)| a[0] > b[0] && a[1] < b[1] && a[0] < a[1])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flat_map(|iv| iv.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Which construction produced a field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldTag {
    Difference,
    Extended { i: usize, j: usize },
    Continuation(Box<FieldTag>),
    Morse(usize),
    Other,
}

impl FieldTag {
    pub fn label(&self) -> String {
        match self {
            FieldTag::Difference => "w".into(),
            FieldTag::Extended { i, j } => format!("w_{{{i},{j};3}}"),
            FieldTag::Continuation(t) => format!("W[{}]", t.label()),
            FieldTag::Morse(k) => format!("h{k}"),
            FieldTag::Other => "field".into(),
        }
    }
}

/// A scalar field on R^D (some coordinates possibly periodic with period 1).
#[derive(Clone, Debug)]
pub struct Field {
    pub expr: Expr,
    pub layout: Layout,
    pub periodic: Vec<bool>,
    /// Region where critical points live.
    pub domain: BoxN,
    /// Escape box; trajectories leaving it are discarded.
    pub escape: BoxN,
    pub tag: FieldTag,
    tape: Tape,
}

impl Field {
    pub fn new(expr: Expr, layout: Layout, periodic: Vec<bool>, domain: BoxN, tag: FieldTag) -> Field {
        let dim = layout.dim();
        assert_eq!(periodic.len(), dim);
        assert_eq!(domain.dim(), dim);
        let tape = expr.compile(dim);
        let escape = domain.inflate(1.5);
        Field { expr, layout, periodic, domain, escape, tag, tape }
    }

    pub fn with_escape(mut self, escape: BoxN) -> Field {
        self.escape = escape;
        self
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.tape.value(x)
    }

    pub fn gradient(&self, x: &[f64], g: &mut [f64]) -> Result<f64, EvalError> {
        self.tape.gradient(x, g)
    }

    pub fn grad_vec(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut g = vec![0.0; self.dim()];
        self.tape.gradient(x, &mut g)?;
        Ok(g)
    }

    pub fn jet(&self, x: &[f64]) -> Result<Jet, EvalError> {
        self.tape.jet(x)
    }

    pub fn any_periodic(&self) -> bool {
        self.periodic.iter().any(|&p| p)
    }

    /// Reduce periodic coordinates into [0,1).
    pub fn wrap(&self, x: &mut [f64]) {
        for (v, &p) in x.iter_mut().zip(&self.periodic) {
            if p {
                *v = v.rem_euclid(1.0);
                if *v >= 1.0 {
                    *v = 0.0;
                }
            }
        }
    }

    /// a - b with periodic components taken in [-1/2, 1/2).
    pub fn delta(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        delta_mod(a, b, &self.periodic)
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        norm(&self.delta(a, b))
    }

    pub fn in_escape(&self, x: &[f64]) -> bool {
        self.escape.contains_mod(x, &self.periodic)
    }
}

pub fn wrap_half(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

pub fn delta_mod(a: &[f64], b: &[f64], periodic: &[bool]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(periodic)
        .map(|((x, y), &p)| if p { wrap_half(x - y) } else { x - y })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
