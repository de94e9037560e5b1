//! Charts of unstable/stable manifolds: orbit label on a sphere plus arclength.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{arc_orbit, Anchor, FlowOpts};
use crate::family::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    /// Points flowing out of p under the positive flow.
    Unstable,
    /// Points flowing into p.
    Stable,
}

impl Side {
    /// Direction of travel along the chart: forward flow for Unstable, backward for Stable.
    pub fn sign(self) -> f64 {
        match self {
            Side::Unstable => 1.0,
            Side::Stable => -1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ManifoldChart {
    pub anchor: Anchor,
    pub side: Side,
    pub r0: f64,
    /// Frame vectors (unit eigenvectors) and their rates |lambda|.
    pub frame: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
}

/// One evaluated chart point.
#[derive(Clone, Debug)]
pub struct ChartEval {
    pub point: Vec<f64>,
    /// Whether the orbit stayed in the escape box and away from other critical points.
    pub ok: bool,
}

impl ManifoldChart {
    pub fn new(anchor: Anchor, side: Side, r0: f64) -> ManifoldChart {
        let mut frame = Vec::new();
        let mut rates = Vec::new();
        for (e, v) in anchor.eigs.iter().zip(&anchor.vecs) {
            let keep = match side {
                Side::Unstable => *e > 0.0,
                Side::Stable => *e < 0.0,
            };
            if keep {
                frame.push(v.clone());
                rates.push(e.abs());
            }
        }
        if let (Some(lo), Some(hi)) = (
            rates.iter().cloned().reduce(f64::min),
            rates.iter().cloned().reduce(f64::max),
        ) {
            // orbit labels lose the fast components once r0^(hi/lo) drops below round-off
            if hi / lo * -r0.log10() > 16.0 {
                log::warn!("chart at {:?}: rate ratio {:.1} is too anisotropic for r0 = {r0:e}", anchor.coords, hi / lo);
            }
        }
        ManifoldChart { anchor, side, r0, frame, rates }
    }

    pub fn dim(&self) -> usize {
        self.frame.len()
    }

    /// Base point of the linear orbit labelled by `u`, at distance r0 from p.
    pub fn base(&self, u: &[f64]) -> Vec<f64> {
        let k = self.dim();
        assert_eq!(u.len(), k);
        if k == 0 {
            return self.anchor.coords.clone();
        }
        // solve sum u_i^2 exp(2 l_i s) = r0^2 for s by Newton on the log
        let target = 2.0 * self.r0.ln();
        let lmin = self.rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut s = self.r0.ln() / lmin;
        for _ in 0..60 {
            let (mut g, mut dg) = (0.0, 0.0);
            for (ui, li) in u.iter().zip(&self.rates) {
                let t = ui * ui * (2.0 * li * s).exp();
                g += t;
                dg += 2.0 * li * t;
            }
            let f = g.ln() - target;
            let step = f / (dg / g);
            s -= step;
            if step.abs() < 1e-15 * (1.0 + s.abs()) {
                break;
            }
        }
        let mut x = self.anchor.coords.clone();
        for ((ui, li), v) in u.iter().zip(&self.rates).zip(&self.frame) {
            let c = ui * (li * s).exp();
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += c * vi;
            }
        }
        x
    }

    /// Point at arclength `ell` along the orbit labelled `u`; ell in [-r0, 0) interpolates towards p.
    pub fn point(&self, field: &Field, u: &[f64], ell: f64, avoid: &[Anchor], opts: &FlowOpts) -> ChartEval {
        let b = self.base(u);
        if self.dim() == 0 {
            return ChartEval { point: b, ok: true };
        }
        if ell <= 0.0 {
            let f = ((self.r0 + ell) / self.r0).max(0.0);
            let p = &self.anchor.coords;
            let point = p.iter().zip(&b).map(|(pi, bi)| pi + f * (bi - pi)).collect();
            return ChartEval { point, ok: true };
        }
        let o = arc_orbit(field, &b, self.side.sign(), ell, avoid, 0.5 * opts.r_conv, opts, None);
        ChartEval { point: o.end, ok: o.complete }
    }

    /// Samples (ell, point) along the orbit of `u` every `step` up to `max` or until it stops.
    pub fn trace(&self, field: &Field, u: &[f64], step: f64, max: f64, avoid: &[Anchor], opts: &FlowOpts) -> Vec<(f64, Vec<f64>)> {
        let b = self.base(u);
        if self.dim() == 0 {
            return vec![(0.0, b)];
        }
        let mut out = vec![(-0.5 * self.r0, self.point(field, u, -0.5 * self.r0, avoid, opts).point)];
        let o = arc_orbit(field, &b, self.side.sign(), max, avoid, 0.5 * opts.r_conv, opts, Some(step));
        let mut next = 0.0;
        for (s, p) in o.samples {
            if s >= next {
                out.push((s, p));
                next = s + step;
            }
        }
        out
    }
}

/// Deterministic samples of the unit sphere S^{k-1} in R^k.
///
/// k=1: both signs; k=2: `n` equally spaced angles; k=3: Fibonacci lattice with about n^2/4
/// points; k>=4: 1500 normalized Gaussian draws from a fixed stream.
pub fn sphere_grid(k: usize, n: usize) -> Vec<Vec<f64>> {
    match k {
        0 => vec![vec![]],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let m = (n * n / 4).max(8);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + k as u64);
            (0..1500)
                .map(|_| {
                    let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let n = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;
    use crate::expr::{parse, Layout};
    use crate::family::{norm, BoxN, FieldTag};

    fn saddle() -> Field {
        let l = Layout::new(vec!["a".into(), "b".into()]);
        Field::new(parse("a^2 - 4*b^2", &l).unwrap(), l, vec![false; 2], BoxN::cube(2, -1.0, 1.0), FieldTag::Other)
    }

    #[test]
    fn base_point_sits_at_r0() {
        let f = saddle();
        let a = Anchor::new(&f, &[0.0, 0.0]).unwrap();
        let c = ManifoldChart::new(a, Side::Unstable, 1e-2);
        assert_eq!(c.dim(), 1);
        let b = c.base(&[1.0]);
        assert!((norm(&b) - 1e-2).abs() < 1e-15);
        assert!(b[1].abs() < 1e-15);
    }

    #[test]
    fn anisotropic_labels_follow_linear_orbits() {
        let l = Layout::new(vec!["a".into(), "b".into()]);
        let f = Field::new(parse("a^2 + 4*b^2", &l).unwrap(), l, vec![false; 2], BoxN::cube(2, -1.0, 1.0), FieldTag::Other);
        let a = Anchor::new(&f, &[0.0, 0.0]).unwrap();
        let c = ManifoldChart::new(a, Side::Unstable, 1e-2);
        let u = [0.6, 0.8];
        let b = c.base(&u);
        assert!((norm(&b) - 1e-2).abs() < 1e-14);
        // b = (u_a e^{2s}, u_b e^{8s}) up to frame signs
        let s = (b[0].abs() / 0.6).ln() / 2.0;
        assert!((b[1].abs() - 0.8 * (8.0 * s).exp()).abs() < 1e-14);
    }

    #[test]
    fn values_move_with_the_side() {
        let f = saddle();
        let opts = FlowOpts::from_tol(&Tolerances::default());
        let a = Anchor::new(&f, &[0.0, 0.0]).unwrap();
        let up = ManifoldChart::new(a.clone(), Side::Unstable, 1e-2);
        let down = ManifoldChart::new(a, Side::Stable, 1e-2);
        let pu = up.point(&f, &[1.0], 0.3, &[], &opts);
        let pd = down.point(&f, &[-1.0], 0.3, &[], &opts);
        assert!(pu.ok && pd.ok);
        assert!(f.value(&pu.point).unwrap() > 0.0);
        assert!(f.value(&pd.point).unwrap() < 0.0);
        assert!((norm(&pu.point) - 0.31).abs() < 1e-8);
    }

    #[test]
    fn sphere_grids_are_unit() {
        for k in 1..6 {
            for u in sphere_grid(k, 12) {
                assert!((norm(&u) - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(sphere_grid(3, 48).len(), 576);
    }
}
