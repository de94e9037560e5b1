//! Continuation maps along a convex path of generating families.
//!
//! `W(p, t) = (1 - s(t)) w0(p) + s(t) w1(p) + eps (t^2/2 - t^4/4)` with `s` the
//! quintic smoothstep. The t axis is stored as `tau = t / a` so that the
//! t-curvature at the ends is comparable to the spatial Hessian.

use serde::Serialize;

use crate::complex::{compare_rings, Cohomology, Mat2, Verdict};
use crate::config::{PathConfig, RunConfig};
use crate::critical::{find_critical_points, CriticalPoint};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::expr::{BinOp, Expr, Func, Layout};
use crate::family::{BoxN, Field, FieldTag};
use crate::flow::{count_lines, Anchor};
use crate::pipeline::{Gf, GfRun, LineEntry};

/// One sampled time slice of the path.
#[derive(Clone, Debug, Serialize)]
pub struct Slice {
    pub t: f64,
    /// Least positive critical value of w^t, when the slice could be classified.
    pub rho: Option<f64>,
    pub chords: usize,
    pub degenerate: Option<String>,
}

#[derive(Clone, Debug)]
pub struct FamilyPath {
    pub start: Gf,
    pub end: Gf,
    pub epsilon: f64,
    /// t = a * tau.
    pub a: f64,
    pub slices: Vec<Slice>,
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::Bin(op, Box::new(a), Box::new(b))
}

/// (1 - s) e0 + s e1 with s a constant or an expression.
fn blend(e0: &Expr, e1: &Expr, s: Expr) -> Expr {
    let one_minus = bin(BinOp::Sub, Expr::num(1.0), s.clone());
    bin(BinOp::Add, bin(BinOp::Mul, one_minus, e0.clone()), bin(BinOp::Mul, s, e1.clone()))
}

fn aligned(a: &Gf, b: &Gf) -> Result<()> {
    let (f, g) = (&a.family, &b.family);
    if f.base != g.base || f.n != g.n || f.nf != g.nf {
        return Err(Error::Config("path endpoints differ in base or dimensions".into()));
    }
    if f.slope != g.slope {
        return Err(Error::Config(format!("path endpoints differ in slope: {:?} vs {:?}", f.slope, g.slope)));
    }
    if f.inner_box != g.inner_box || f.outer_box != g.outer_box {
        return Err(Error::Config("path endpoints differ in inner or outer box".into()));
    }
    Ok(())
}

fn median_abs_eig(pts: &[CriticalPoint]) -> f64 {
    let mut e: Vec<f64> = pts.iter().flat_map(|c| c.hess_eigs.iter().map(|v| v.abs())).collect();
    if e.is_empty() {
        return 1.0;
    }
    e.sort_by(f64::total_cmp);
    e[e.len() / 2]
}

impl FamilyPath {
    pub fn load(path: &std::path::Path, exec: Exec) -> Result<(PathConfig, FamilyPath)> {
        let (pc, a, b) = PathConfig::load(path)?;
        let fp = FamilyPath::new(&pc, &a, &b, exec)?;
        Ok((pc, fp))
    }

    pub fn new(pc: &PathConfig, a: &RunConfig, b: &RunConfig, exec: Exec) -> Result<FamilyPath> {
        if pc.sigma != "quintic" {
            return Err(Error::Config(format!("unknown sigma '{}' (only 'quintic')", pc.sigma)));
        }
        let start = Gf::setup(a, exec)?;
        let end = Gf::setup(b, exec)?;
        FamilyPath::from_setups(start, end, pc.epsilon, pc.t_samples, exec)
    }

    pub fn from_setups(start: Gf, end: Gf, epsilon: Option<f64>, t_samples: usize, exec: Exec) -> Result<FamilyPath> {
        aligned(&start, &end)?;
        let slices = sample_slices(&start, &end, t_samples.max(2), exec)?;
        let rho_min = slices.iter().filter_map(|s| s.rho).fold(f64::INFINITY, f64::min);
        if !rho_min.is_finite() {
            return Err(Error::Continuation("no slice has a positive critical value".into()));
        }
        let epsilon = epsilon.unwrap_or(0.1 * rho_min);
        if epsilon <= 0.0 {
            return Err(Error::Config(format!("epsilon {epsilon} must be positive")));
        }
        for s in &slices {
            if let Some(r) = s.rho {
                if epsilon / 4.0 >= r {
                    return Err(Error::Continuation(format!("epsilon/4 = {} is not below rho = {r} at t = {}", epsilon / 4.0, s.t)));
                }
            }
        }
        let m = median_abs_eig(&start.chords).max(median_abs_eig(&end.chords));
        let a = (m / epsilon).sqrt().max(1.0);
        Ok(FamilyPath { start, end, epsilon, a, slices })
    }

    /// Same path run backwards.
    pub fn reversed(&self) -> FamilyPath {
        let mut slices = self.slices.clone();
        slices.reverse();
        for s in slices.iter_mut() {
            s.t = 1.0 - s.t;
        }
        FamilyPath { start: self.end.clone(), end: self.start.clone(), slices, ..self.clone() }
    }

    pub fn degenerate_slices(&self) -> Vec<&Slice> {
        self.slices.iter().filter(|s| s.degenerate.is_some()).collect()
    }

    /// W for w (None) or the k-th extended field.
    pub fn field(&self, which: Option<usize>) -> Field {
        let (f0, f1) = match which {
            None => (&self.start.w, &self.end.w),
            Some(k) => (&self.start.ext[k], &self.end.ext[k]),
        };
        let d = f0.dim();
        let t = bin(BinOp::Mul, Expr::num(self.a), Expr::var(d));
        let s = Expr::call(Func::Step, t.clone());
        let profile = bin(
            BinOp::Sub,
            bin(BinOp::Mul, Expr::num(0.5 * self.epsilon), t.clone().powi(2)),
            bin(BinOp::Mul, Expr::num(0.25 * self.epsilon), t.powi(4)),
        );
        let expr = bin(BinOp::Add, blend(&f0.expr, &f1.expr, s), profile);
        let mut names: Vec<String> = (0..d).map(|i| f0.layout.name(i).to_string()).collect();
        names.push("t".into());
        let tau = [-0.25 / self.a, 1.25 / self.a];
        let mut periodic = f0.periodic.clone();
        periodic.push(false);
        Field::new(
            expr,
            Layout::new(names),
            periodic,
            f0.domain.concat(&BoxN(vec![[0.0, 1.0 / self.a]])),
            FieldTag::Continuation(Box::new(f0.tag.clone())),
        )
        .with_escape(f0.escape.concat(&BoxN(vec![tau])))
    }

    /// Critical points of the endpoint field `which`, lifted to t = 0 and t = 1.
    fn ends(&self, which: Option<usize>) -> (Vec<CriticalPoint>, Vec<CriticalPoint>) {
        let pts = |g: &Gf| -> Vec<CriticalPoint> {
            match which {
                None => g.crits.clone(),
                Some(k) => g.iota.iter().map(|i| i[k].clone()).collect(),
            }
        };
        (pts(&self.start), pts(&self.end))
    }
}

fn sample_slices(start: &Gf, end: &Gf, n: usize, exec: Exec) -> Result<Vec<Slice>> {
    let fam = &start.family;
    let mut pinned = Vec::new();
    for &(j, _) in &fam.quadratic {
        pinned.push(fam.n + j);
        pinned.push(fam.n + fam.nf + j);
    }
    let (w0, w1) = (&start.w, &end.w);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let s = crate::expr::smoothstep(t).0;
        let f = Field::new(blend(&w0.expr, &w1.expr, Expr::num(s)), w0.layout.clone(), w0.periodic.clone(), w0.domain.clone(), FieldTag::Other)
            .with_escape(w0.escape.clone());
        let slice = match find_critical_points(&f, &f.domain, start.cfg.seeds.crit_grid, &pinned, fam.nf as i64, &start.cfg.tolerances, exec) {
            Ok(search) => {
                let pos = search.positive();
                let rho = pos.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
                Slice { t, rho: rho.is_finite().then_some(rho), chords: pos.len(), degenerate: None }
            }
            Err(e) => Slice { t, rho: None, chords: 0, degenerate: Some(e.to_string()) },
        };
        if let Some(msg) = &slice.degenerate {
            log::warn!("slice t = {t:.3}: {msg}");
        }
        out.push(slice);
    }
    Ok(out)
}

/// Phi for one field, with the line counts behind it.
#[derive(Clone, Debug, Serialize)]
pub struct ContinuationMatrix {
    pub field: String,
    /// (q, p) = number mod 2 of W-lines from (p, 0) to (q, 1); rows are end chords.
    pub matrix: Mat2,
    pub entries: Vec<LineEntry>,
}

pub fn continuation_matrix(path: &FamilyPath, which: Option<usize>, exec: Exec) -> Result<ContinuationMatrix> {
    let field = path.field(which);
    let (c0, c1) = path.ends(which);
    let lift = |c: &CriticalPoint, tau: f64| -> Result<Anchor> {
        let mut x = c.coords.clone();
        x.push(tau);
        Anchor::new(&field, &x)
    };
    let a0: Vec<Anchor> = c0.iter().map(|c| lift(c, 0.0)).collect::<Result<_>>()?;
    let a1: Vec<Anchor> = c1.iter().map(|c| lift(c, 1.0 / path.a)).collect::<Result<_>>()?;
    let all: Vec<Anchor> = a0.iter().chain(&a1).cloned().collect();
    let pos = |g: &Gf| -> Vec<usize> { g.chords.iter().map(|c| g.crits.iter().position(|d| d.id == c.id).expect("chord among crits")).collect() };
    let (p0, p1) = (pos(&path.start), pos(&path.end));
    let (ch0, ch1) = (&path.start.chords, &path.end.chords);
    let mut matrix = Mat2::zeros(ch1.len(), ch0.len());
    let mut entries = Vec::new();
    for (a, &pa) in p0.iter().enumerate() {
        for (b, &pb) in p1.iter().enumerate() {
            if ch0[a].grading != ch1[b].grading {
                continue;
            }
            let (p, q) = (&a0[pa], &a1[pb]);
            if q.index != p.index + 1 {
                return Err(Error::Continuation(format!(
                    "W-indices {} at ({},0) and {} at ({},1) differ by {}, not 1",
                    p.index,
                    ch0[a].id,
                    q.index,
                    ch1[b].id,
                    q.index as i64 - p.index as i64
                )));
            }
            let lc = count_lines(&field, p, q, &all, &path.start.opts, &path.start.cfg.seeds, exec)?;
            for l in &lc.lines {
                if let Some(bad) = l.iter().find(|x| !field.in_escape(x)) {
                    return Err(Error::Internal(format!("continuation line {} -> {} leaves the box at {bad:?}", ch0[a].id, ch1[b].id)));
                }
            }
            matrix.set(b, a, lc.parity == 1);
            entries.push(LineEntry {
                from: ch0[a].id.clone(),
                to: ch1[b].id.clone(),
                count: lc.count,
                parity: lc.parity,
                method: lc.method,
                lines: lc.lines,
            });
        }
    }
    Ok(ContinuationMatrix { field: field.tag.label(), matrix, entries })
}

/// Entries of d1 Phi + Phi d0 (empty for a cochain map).
pub fn cochain_defect(phi: &Mat2, d0: &Mat2, d1: &Mat2) -> Vec<(usize, usize)> {
    d1.mul(phi).add(&phi.mul(d0)).support()
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationCheck {
    pub phi: ContinuationMatrix,
    pub cochain_defect: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IsotopyReport {
    pub epsilon: f64,
    pub t_scale: f64,
    pub slices: Vec<Slice>,
    /// Phi for w, then for the three extended fields.
    pub maps: Vec<ContinuationCheck>,
    pub verdict: Verdict,
    /// Induced map of Phi_reverse * Phi on H(w); identity when the check passes.
    pub reversal: Mat2,
    pub reversal_is_identity: bool,
}

impl IsotopyReport {
    pub fn passed(&self) -> bool {
        self.verdict.passed() && self.reversal_is_identity && self.maps.iter().all(|m| m.cochain_defect.is_empty())
    }
}

/// Full isotopy comparison between two endpoint runs of `path`.
pub fn isotopy_compare(path: &FamilyPath, r0: &GfRun, r1: &GfRun, exec: Exec) -> Result<IsotopyReport> {
    if r0.ring.h.iter().zip(&r1.ring.h).any(|(a, b)| a.ranks != b.ranks) {
        return Err(Error::Continuation(format!(
            "endpoint ranks differ: {:?} vs {:?}; a continuation map cannot be an isomorphism",
            r0.ring.ranks(),
            r1.ring.ranks()
        )));
    }
    let mut maps = Vec::new();
    for which in [None, Some(0), Some(1), Some(2)] {
        let phi = continuation_matrix(path, which, exec)?;
        let (d0, d1) = match which {
            None => (&r0.delta.matrix, &r1.delta.matrix),
            Some(k) => (&r0.complex.delta[k], &r1.complex.delta[k]),
        };
        let cochain_defect = cochain_defect(&phi.matrix, d0, d1);
        maps.push(ContinuationCheck { phi, cochain_defect });
    }
    if let Some(bad) = maps.iter().find(|m| !m.cochain_defect.is_empty()) {
        return Err(Error::Continuation(format!("{} is not a cochain map: defects {:?}", bad.phi.field, bad.cochain_defect)));
    }
    let verdict = compare_rings(&r0.ring, &r1.ring, [&maps[1].phi.matrix, &maps[2].phi.matrix, &maps[3].phi.matrix])?;

    let back = continuation_matrix(&path.reversed(), None, exec)?;
    let h0 = Cohomology::new(&r0.gf.generators(), &r0.delta.matrix)?;
    let h1 = Cohomology::new(&r1.gf.generators(), &r1.delta.matrix)?;
    let reversal = h1.induced(&back.matrix, &h0)?.mul(&h0.induced(&maps[0].phi.matrix, &h1)?);
    let reversal_is_identity = reversal == Mat2::identity(h0.dim());
    Ok(IsotopyReport {
        epsilon: path.epsilon,
        t_scale: path.a,
        slices: path.slices.clone(),
        maps,
        verdict,
        reversal,
        reversal_is_identity,
    })
}
