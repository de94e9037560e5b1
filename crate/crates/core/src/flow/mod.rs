//! Gradient trajectories: integration, invariant-manifold charts and line counts.

mod chart;
mod lines;
pub mod ode;
pub mod solve;

use nalgebra::DMatrix;
use serde::Serialize;

pub use chart::{sphere_grid, ChartEval, ManifoldChart, Side};
pub use lines::{count_lines, LineCount, LineMethod};
pub(crate) use lines::grid_spacing;

use crate::config::Tolerances;
use crate::critical::CriticalPoint;
use crate::error::Result;
use crate::family::{norm, Field};
use ode::{dopri5, Control, OdeEnd, OdeOpts};

#[derive(Clone, Copy, Debug)]
pub struct FlowOpts {
    pub rtol: f64,
    pub atol: f64,
    pub r0: f64,
    pub r_conv: f64,
    pub strict: bool,
    pub max_time: f64,
    pub fd_step: f64,
    pub tol_match: f64,
    pub cond_cap: f64,
}

impl FlowOpts {
    pub fn from_tol(t: &Tolerances) -> FlowOpts {
        FlowOpts {
            rtol: t.ode_rtol,
            atol: t.ode_atol,
            r0: t.r0,
            r_conv: t.r_conv,
            strict: t.strict,
            max_time: 500.0,
            fd_step: t.fd_step,
            tol_match: t.tol_match,
            cond_cap: t.cond_cap,
        }
    }

    pub fn ode(&self) -> OdeOpts {
        OdeOpts::new(self.rtol, self.atol)
    }
}

/// A critical point with its Hessian eigen-decomposition, for charts and stop tests.
#[derive(Clone, Debug)]
pub struct Anchor {
    pub coords: Vec<f64>,
    pub value: f64,
    pub index: usize,
    /// Ascending eigenvalues and matching unit eigenvectors.
    pub eigs: Vec<f64>,
    pub vecs: Vec<Vec<f64>>,
}

impl Anchor {
    pub fn new(field: &Field, coords: &[f64]) -> Result<Anchor> {
        let j = field.jet(coords)?;
        let se = j.hess.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let eigs: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let vecs: Vec<Vec<f64>> = order.iter().map(|&i| se.eigenvectors.column(i).iter().copied().collect()).collect();
        let index = eigs.iter().filter(|e| **e < 0.0).count();
        Ok(Anchor { coords: coords.to_vec(), value: j.value, index, eigs, vecs })
    }

    pub fn from_crit(field: &Field, c: &CriticalPoint) -> Result<Anchor> {
        Anchor::new(field, &c.coords)
    }

    /// Value window used by the convergence test.
    fn window(&self, r: f64) -> f64 {
        let lmax = self.eigs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        2.0 * lmax * r * r + 1e-12
    }

    /// Component of `d` along eigendirections repelling for the given flow sign.
    fn repelling_part(&self, d: &[f64], sign: f64) -> f64 {
        let mut s = 0.0;
        for (e, v) in self.eigs.iter().zip(&self.vecs) {
            // forward flow (sign +) moves away along positive eigenvalues
            if e * sign > 0.0 {
                let c: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                s += c * c;
            }
        }
        s.sqrt()
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        let d = self.eigs.len();
        let mut h = DMatrix::zeros(d, d);
        for (e, v) in self.eigs.iter().zip(&self.vecs) {
            for r in 0..d {
                for c in 0..d {
                    h[(r, c)] += e * v[r] * v[c];
                }
            }
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Termination {
    /// Entered the convergence ball of stop-set member `i`.
    Converged(usize),
    Escaped,
    Timeout,
    StepUnderflow,
    Failed(String),
    Reached,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn max_escape_violation(&self, field: &Field) -> bool {
        self.points.iter().any(|p| !field.in_escape(p))
    }
}

/// Which member of `stop` (if any) has captured `x`.
pub fn captured(field: &Field, stop: &[Anchor], x: &[f64], value: f64, sign: f64, opts: &FlowOpts) -> Option<usize> {
    for (i, a) in stop.iter().enumerate() {
        let d = field.delta(x, &a.coords);
        let dist = norm(&d);
        if dist < opts.r_conv && (value - a.value).abs() < a.window(opts.r_conv) {
            if opts.strict && a.repelling_part(&d, sign) > 0.5 * dist {
                continue;
            }
            return Some(i);
        }
    }
    None
}

/// Time-parametrized flow x' = sign * grad h until capture, escape or timeout.
pub fn integrate(field: &Field, start: &[f64], sign: f64, stop: &[Anchor], opts: &FlowOpts) -> Trajectory {
    let d = field.dim();
    let mut points = vec![start.to_vec()];
    let mut values = vec![field.value(start).unwrap_or(f64::NAN)];
    let mut term = None;
    let mut g = vec![0.0; d];
    let res = dopri5(
        |y, dy| {
            field.gradient(y, dy).map_err(|e| e.to_string())?;
            for v in dy.iter_mut() {
                *v *= sign;
            }
            Ok(())
        },
        start,
        opts.max_time,
        &OdeOpts { h_max: 0.05, ..opts.ode() },
        |_, y| {
            let v = field.gradient(y, &mut g).unwrap_or(f64::NAN);
            points.push(y.to_vec());
            values.push(v);
            if !field.in_escape(y) {
                term = Some(Termination::Escaped);
                return Control::Stop;
            }
            if let Some(i) = captured(field, stop, y, v, sign, opts) {
                term = Some(Termination::Converged(i));
                return Control::Stop;
            }
            Control::Continue
        },
    );
    let termination = term.unwrap_or(match res.end {
        OdeEnd::Reached | OdeEnd::MaxSteps => Termination::Timeout,
        OdeEnd::StepUnderflow => Termination::StepUnderflow,
        OdeEnd::RhsFailed(e) => Termination::Failed(e),
        OdeEnd::Stopped => Termination::Timeout,
    });
    Trajectory { points, values, termination }
}

/// Outcome of an arclength or level integration.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub end: Vec<f64>,
    /// Parameter reached (arclength or level distance).
    pub reached: f64,
    pub samples: Vec<(f64, Vec<f64>)>,
    pub complete: bool,
}

/// x' = sign * grad h / |grad h| (arclength) for length `len`.
///
/// Stops early near any member of `avoid` (within `stop_r`) or on leaving the escape box.
pub fn arc_orbit(
    field: &Field,
    start: &[f64],
    sign: f64,
    len: f64,
    avoid: &[Anchor],
    stop_r: f64,
    opts: &FlowOpts,
    record: Option<f64>,
) -> Orbit {
    let mut samples = vec![(0.0, start.to_vec())];
    let ode = OdeOpts { h0: 1e-3, h_max: record.unwrap_or(0.05), ..opts.ode() };
    let mut bad = false;
    let res = dopri5(
        |y, dy| {
            let _ = field.gradient(y, dy).map_err(|e| e.to_string())?;
            let n = norm(dy);
            if n < 1e-13 {
                return Err("stalled at a critical point".into());
            }
            for v in dy.iter_mut() {
                *v *= sign / n;
            }
            Ok(())
        },
        start,
        len,
        &ode,
        |s, y| {
            if record.is_some() {
                samples.push((s, y.to_vec()));
            }
            if !field.in_escape(y) || avoid.iter().any(|a| field.dist(y, &a.coords) < stop_r) {
                bad = true;
                return Control::Stop;
            }
            Control::Continue
        },
    );
    let complete = !bad && res.end == OdeEnd::Reached;
    Orbit { end: res.y, reached: res.s, samples, complete }
}

/// x' = sign * grad h / |grad h|^2 so that h changes by exactly `sign * dv`.
///
/// With `record`, every accepted step is kept in `samples` (parameter = level distance).
pub fn level_orbit(field: &Field, start: &[f64], sign: f64, dv: f64, opts: &FlowOpts, record: bool) -> Option<Orbit> {
    let mut samples = vec![(0.0, start.to_vec())];
    if dv <= 0.0 {
        return (dv > -1e-12).then(|| Orbit { end: start.to_vec(), reached: 0.0, samples, complete: true });
    }
    let mut bad = false;
    let res = dopri5(
        |y, dy| {
            let _ = field.gradient(y, dy).map_err(|e| e.to_string())?;
            let n2: f64 = dy.iter().map(|v| v * v).sum();
            if n2 < 1e-20 {
                return Err("stalled".into());
            }
            for v in dy.iter_mut() {
                *v *= sign / n2;
            }
            Ok(())
        },
        start,
        dv,
        &OdeOpts { h0: dv * 1e-3, max_steps: 20_000, ..opts.ode() },
        |s, y| {
            if record {
                samples.push((s, y.to_vec()));
            }
            if !field.in_escape(y) {
                bad = true;
                return Control::Stop;
            }
            Control::Continue
        },
    );
    (!bad && res.end == OdeEnd::Reached).then_some(Orbit { end: res.y, reached: res.s, samples, complete: true })
}
