//! Invariant checks shared by `verify`, `compare` and the tests.

use serde::Serialize;

use crate::complex::{compare_rings, match_by_value_with, Mat2, Verdict};
use crate::config::RunConfig;
use crate::critical::CriticalPoint;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::family::Base;
use crate::pipeline::{Gf, GfRun, PAIRS};

/// Value tolerance for matching generators across equivalent families.
pub const MATCH_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// A chord with its grading in both conventions.
#[derive(Clone, Debug, Serialize)]
pub struct ChordRow {
    pub id: String,
    pub coords: Vec<f64>,
    pub value: f64,
    pub index: usize,
    /// ind - N.
    pub grading: i64,
    /// ind - N - 1.
    pub grading_shifted: i64,
}

pub fn chord_rows(chords: &[CriticalPoint]) -> Vec<ChordRow> {
    chords
        .iter()
        .map(|c| ChordRow {
            id: c.id.clone(),
            coords: c.coords.clone(),
            value: c.value,
            index: c.index,
            grading: c.grading,
            grading_shifted: c.grading - 1,
        })
        .collect()
}

/// iota preserves values and satisfies ind_ij - (j-i)N = ind - N for every chord and pair.
pub fn iota_check(gf: &Gf) -> Check {
    let nf = gf.nf() as i64;
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for (c, imgs) in gf.crits.iter().zip(&gf.iota) {
        if c.value <= 0.0 {
            continue;
        }
        for (&(i, j), im) in PAIRS.iter().zip(imgs) {
            let dv = (im.value - c.value).abs();
            worst = worst.max(dv);
            if dv > 1e-9 {
                bad.push(format!("{} ({i},{j}): value moved by {dv:.2e}", c.id));
            }
            if im.index as i64 - (j - i) as i64 * nf != c.index as i64 - nf {
                bad.push(format!("{} ({i},{j}): index {} vs {}", c.id, im.index, c.index));
            }
        }
    }
    let detail = if bad.is_empty() { format!("max value drift {worst:.2e}") } else { bad.join("; ") };
    Check::new("iota", bad.is_empty(), detail)
}

/// Line counts in w and in each extended field agree entry for entry.
pub fn line_agreement(run: &GfRun) -> Check {
    let Some(ext) = &run.delta_ext else {
        return Check::new("lines-agree", false, "extended line counts were not computed");
    };
    let mut bad = Vec::new();
    for t in ext {
        for (a, b) in run.delta.entries.iter().zip(&t.entries) {
            if (a.from.as_str(), a.to.as_str(), a.count) != (b.from.as_str(), b.to.as_str(), b.count) {
                bad.push(format!("{} {}->{}: {} in w, {} in {}", t.field, a.from, a.to, a.count, b.count, t.field));
            }
        }
        if t.entries.len() != run.delta.entries.len() {
            bad.push(format!("{} has {} entries, w has {}", t.field, t.entries.len(), run.delta.entries.len()));
        }
    }
    let n = run.delta.entries.len();
    let detail = if bad.is_empty() { format!("{n} entries x 3 fields") } else { bad.join("; ") };
    Check::new("lines-agree", bad.is_empty(), detail)
}

pub fn algebra_check(run: &GfRun, seed: u64) -> Check {
    let rep = run.complex.verify_algebra();
    let detail = if rep.passed() {
        format!("delta^2 = 0, Leibniz defect = 0 ({} trees)", run.product.entries.iter().map(|e| e.count).sum::<usize>())
    } else {
        format!("delta^2 {:?}; Leibniz {:?}; shape {:?}", rep.delta_squared, rep.leibniz, rep.shape)
    };
    Check::new(format!("algebra[seed {seed}]"), rep.passed(), detail)
}

/// Every line and tree sample in K', every tree meeting point with w13 > rho/4.
pub fn confinement(run: &GfRun) -> Result<Check> {
    let gf = &run.gf;
    let mut bad = Vec::new();
    let mut samples = 0usize;
    let mut tables = vec![(&gf.w, &run.delta)];
    if let Some(ext) = &run.delta_ext {
        tables.extend(gf.ext.iter().zip(ext.iter()));
    }
    for (field, t) in tables {
        for e in &t.entries {
            for l in &e.lines {
                samples += l.len();
                if let Some(x) = l.iter().find(|x| !field.in_escape(x)) {
                    bad.push(format!("line {}->{} in {} at {x:?}", e.from, e.to, t.field));
                }
            }
        }
    }
    let quarter = gf.rho.rho / 4.0;
    let mut min_meet = f64::INFINITY;
    for e in &run.product.entries {
        for tr in &e.trees {
            for poly in &tr.edges {
                samples += poly.len();
                if let Some(x) = poly.iter().find(|x| !gf.ext[0].in_escape(x)) {
                    bad.push(format!("tree ({},{};{}) at {x:?}", e.p1, e.p2, e.p0));
                }
            }
            let v = gf.ext[2].value(&tr.meeting)?;
            min_meet = min_meet.min(v);
            if v <= quarter {
                bad.push(format!("tree ({},{};{}) meets at w13 = {v} <= rho/4", e.p1, e.p2, e.p0));
            }
        }
    }
    let detail = if bad.is_empty() && min_meet.is_finite() {
        format!("{samples} samples in K'; min w13 at meeting points {min_meet:.4} > rho/4 = {quarter:.4}")
    } else if bad.is_empty() {
        format!("{samples} samples in K'; no trees")
    } else {
        bad.join("; ")
    };
    Ok(Check::new("confinement", bad.is_empty(), detail))
}

/// Compare two runs whose generators correspond by (value, grading).
pub fn compare_matched(a: &GfRun, b: &GfRun) -> Result<(Mat2, Verdict)> {
    let (ca, cb) = (&a.gf.chords, &b.gf.chords);
    let n = a.gf.n();
    let torus = a.gf.family.base == Base::Torus;
    // equivalences fix the base point of a chord, which separates symmetric chords
    let same = |i: usize, j: usize| {
        (0..n).all(|k| {
            let d = (ca[i].coords[k] - cb[j].coords[k]).abs();
            let d = if torus { d.rem_euclid(1.0).min(1.0 - d.rem_euclid(1.0)) } else { d };
            d < 1e-6
        })
    };
    let m = match_by_value_with(&a.gf.generators(), &b.gf.generators(), MATCH_TOL, same)?;
    let v = compare_rings(&a.ring, &b.ring, [&m, &m, &m])?;
    Ok((m, v))
}

/// Class-level comparison of two perturbations on the same chords.
pub fn compare_reseeded(a: &GfRun, b: &GfRun) -> Result<Verdict> {
    let id: [Mat2; 3] = std::array::from_fn(|k| Mat2::identity(a.complex.gens[k].len()));
    compare_rings(&a.ring, &b.ring, [&id[0], &id[1], &id[2]])
}

pub fn stabilized(cfg: &RunConfig, sign: char) -> Result<RunConfig> {
    let mut out = cfg.clone();
    let fam = out.family.as_mut().ok_or_else(|| Error::Config("stabilization needs a `family` block".into()))?;
    fam.stabilize.get_or_insert_with(Vec::new).push(sign.to_string());
    Ok(out)
}

/// (untwisted, twisted) configs: the config's own fpd if present, else a default twist of e1
/// supported in the middle of the outer box.
pub fn fpd_pair(cfg: &RunConfig) -> Result<(RunConfig, RunConfig)> {
    let fam = cfg.family.as_ref().ok_or_else(|| Error::Config("fpd comparison needs a `family` block".into()))?;
    let mut plain = cfg.clone();
    if fam.fpd.is_some() {
        plain.family.as_mut().expect("present").fpd = None;
        return Ok((plain, cfg.clone()));
    }
    let (n, nf) = (fam.n, fam.nf);
    let half = |iv: [f64; 2]| 0.5 * (iv[1] - iv[0]);
    let re = 0.5 * half(fam.outer_box.0[n]);
    let mut twist = format!("e1 + {}*bump(e1/{re})", 0.3 * re);
    if fam.base == Base::Euclidean {
        for i in 0..n {
            let iv = fam.outer_box.0[i];
            let (c, r) = (0.5 * (iv[0] + iv[1]), 0.5 * half(iv));
            twist.push_str(&format!("*bump((x{} - {c})/{r})", i + 1));
        }
    }
    let mut phi = vec![twist];
    phi.extend((2..=nf).map(|j| format!("e{j}")));
    let mut twisted = cfg.clone();
    twisted.family.as_mut().expect("present").fpd = Some(phi);
    Ok((plain, twisted))
}

/// Everything `verify` checks for a family config.
#[derive(Clone, Debug)]
pub struct VerifyOutput {
    pub run: GfRun,
    pub checks: Vec<Check>,
}

impl VerifyOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn verdict_check(name: &str, v: Result<Verdict>) -> Check {
    match v {
        Ok(v) => Check::new(name, v.passed(), if v.passed() { "ranks and mu2 agree".to_string() } else { v.defects.join("; ") }),
        Err(e) => Check::new(name, false, e.to_string()),
    }
}

/// Run every invariant suite on a family config. `equivalences` adds the stabilization
/// and fpd comparisons, which rerun the pipeline on modified families.
pub fn verify(cfg: &RunConfig, seed: u64, equivalences: bool, exec: Exec) -> Result<VerifyOutput> {
    let run = GfRun::run(cfg, seed, true, exec)?;
    let mut checks = vec![Check::new("chords", !run.gf.chords.is_empty(), format!("{} positive critical points", run.gf.chords.len()))];
    checks.push(iota_check(&run.gf));
    checks.push(line_agreement(&run));
    checks.push(algebra_check(&run, seed));
    checks.push(confinement(&run)?);
    for k in 1..3 {
        let s = seed.wrapping_add(k);
        let other = run.reseed(s)?;
        checks.push(algebra_check(&other, s));
        checks.push(confinement(&other)?);
        checks.push(verdict_check(&format!("reseed[{seed} vs {s}]"), compare_reseeded(&run, &other)));
    }
    if equivalences {
        for sign in ['+', '-'] {
            let v = stabilized(cfg, sign).and_then(|c| GfRun::run(&c, seed, false, exec)).and_then(|b| compare_matched(&run, &b).map(|x| x.1));
            checks.push(verdict_check(&format!("stabilize[{sign}]"), v));
        }
        let v = fpd_pair(cfg).and_then(|(p, t)| {
            let a = GfRun::run(&p, seed, false, exec)?;
            let b = GfRun::run(&t, seed, false, exec)?;
            compare_matched(&a, &b).map(|x| x.1)
        });
        checks.push(verdict_check("fpd", v));
    }
    Ok(VerifyOutput { run, checks })
}

/// Ranks (1,2,1) and the cup-product pattern mu(a,b) = (a_H b_V + a_V b_H) top on T^2.
pub fn morse_torus_checks(run: &crate::pipeline::MorseRun) -> Vec<Check> {
    let mut checks = Vec::new();
    let want: std::collections::BTreeMap<i64, usize> = [(0, 1), (1, 2), (2, 1)].into();
    for (k, h) in run.ring.h.iter().enumerate() {
        checks.push(Check::new(format!("ranks[C{}]", k + 1), h.ranks == want, format!("{:?}", h.ranks)));
    }
    let ok = run.ring.h.iter().all(|h| h.ranks == want);
    if !ok || run.spec.dims != 2 {
        return checks;
    }
    let deg1 = |k: usize| -> Vec<usize> { (0..run.ring.h[k].dim()).filter(|&i| run.ring.h[k].classes[i].grading == 1).collect() };
    let top = run.ring.h[2].classes.iter().position(|c| c.grading == 2).expect("rank 1 in degree 2");
    let (e0, e1) = (run.class_evals(0), run.class_evals(1));
    let mut bad = Vec::new();
    let mut nonzero = 0;
    for (ia, &a) in deg1(0).iter().enumerate() {
        for (ib, &b) in deg1(1).iter().enumerate() {
            let (x, y) = (e0[ia], e1[ib]);
            let expect = (x[0] & y[1]) ^ (x[1] & y[0]);
            let got = run.ring.mu[a][b][top];
            nonzero += got as usize;
            if got != expect {
                bad.push(format!("mu({}, {}) = {got}, cup product gives {expect}", run.ring.h[0].classes[a].label, run.ring.h[1].classes[b].label));
            }
        }
    }
    let detail = if bad.is_empty() { format!("{nonzero} nonzero degree-1 products, all match") } else { bad.join("; ") };
    checks.push(Check::new("cup-product", bad.is_empty() && nonzero > 0, detail));
    checks.push(algebra_of(&run.complex));
    checks
}

fn algebra_of(c: &crate::complex::ChordComplex) -> Check {
    let rep = c.verify_algebra();
    Check::new("algebra", rep.passed(), if rep.passed() { "delta^2 = 0, Leibniz defect = 0".into() } else { format!("{rep:?}") })
}
