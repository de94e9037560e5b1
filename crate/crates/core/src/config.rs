//! Run configuration (JSON) and its defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse, Expr, Layout};
use crate::family::{Base, BoxN, GeneratingFamily, QuadraticLike};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tol_grad: f64,
    pub tol_dedup: f64,
    pub tol_degenerate: f64,
    pub tol_value: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    /// Chart radius around critical points.
    pub r0: f64,
    /// Convergence ball radius for trajectories.
    pub r_conv: f64,
    pub tol_match: f64,
    pub tree_dedup: f64,
    pub cond_cap: f64,
    pub fd_step: f64,
    pub blend_grad_floor: f64,
    /// Stable-subspace projection test on convergence.
    pub strict: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_grad: 1e-9,
            tol_dedup: 1e-6,
            tol_degenerate: 1e-6,
            tol_value: 1e-7,
            ode_rtol: 1e-10,
            ode_atol: 1e-12,
            r0: 1e-2,
            r_conv: 2e-3,
            tol_match: 1e-8,
            tree_dedup: 1e-4,
            cond_cap: 1e9,
            fd_step: 1e-5,
            blend_grad_floor: 1e-3,
            strict: false,
        }
    }
}

/// Seed block: rng seed and sampling densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub rng_seed: u64,
    pub crit_grid: usize,
    pub lipschitz_grid: usize,
    pub annulus_grid: usize,
    /// Directions per circle when sampling chart spheres.
    pub sphere_dirs: usize,
    /// Arclength spacing of tree seed clouds.
    pub arc_step: f64,
    pub arc_max: f64,
    /// Newton starts per line or tree problem.
    pub newton_seeds: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            rng_seed: 7,
            crit_grid: 12,
            lipschitz_grid: 7,
            annulus_grid: 12,
            sphere_dirs: 48,
            arc_step: 0.02,
            arc_max: 3.0,
            newton_seeds: 24,
        }
    }
}

impl Grids {
    pub fn doubled(&self) -> Grids {
        Grids {
            crit_grid: self.crit_grid * 2,
            sphere_dirs: self.sphere_dirs * 2,
            arc_step: self.arc_step / 2.0,
            newton_seeds: self.newton_seeds * 2,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Gf,
    MorseTorus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QSpec {
    /// Expression in the fiber variables e1..eN; default |e|^2.
    #[serde(default)]
    pub expr: Option<String>,
    #[serde(default)]
    pub zero: Option<Vec<f64>>,
    #[serde(default, rename = "box")]
    pub bx: Option<BoxN>,
    /// Starting factor lambda before the automatic halving.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub base: Base,
    pub n: usize,
    #[serde(rename = "N")]
    pub nf: usize,
    pub core: String,
    pub slope: Vec<f64>,
    pub inner_box: BoxN,
    pub outer_box: BoxN,
    #[serde(default, rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<QSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpd: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stabilize: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseSpec {
    pub dims: usize,
    pub f: String,
    pub g: String,
    /// Perturbation radius (no rho is available in this mode).
    #[serde(default = "default_morse_delta")]
    pub delta_pert: f64,
}

fn default_morse_delta() -> f64 {
    0.05
}

impl Default for MorseSpec {
    fn default() -> Self {
        MorseSpec {
            dims: 2,
            f: "cos(2*pi*x) + 0.3*cos(2*pi*y)".into(),
            g: "cos(2*pi*y) + 0.3*cos(2*pi*x)".into(),
            delta_pert: default_morse_delta(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub morse: Option<MorseSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seeds: Grids,
    #[serde(default)]
    pub output: OutputSpec,
}

fn parse_field(what: &str, src: &str, layout: &Layout) -> Result<Expr> {
    parse(src, layout).map_err(|e| Error::Config(format!("{what}: {e}")))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn morse_torus_default() -> RunConfig {
        RunConfig { mode: Mode::MorseTorus, morse: Some(MorseSpec::default()), ..Default::default() }
    }

    fn check(&self) -> Result<()> {
        match self.mode {
            Mode::Gf if self.family.is_none() => Err(Error::Config("mode gf needs a `family` block".into())),
            Mode::MorseTorus if self.family.is_some() => {
                Err(Error::Config("mode morse-torus takes a `morse` block, not `family`".into()))
            }
            _ => Ok(()),
        }
    }

    /// Parse the family block into a generating family (fpd and stabilization applied).
    pub fn build_family(&self) -> Result<GeneratingFamily> {
        let spec = self.family.as_ref().ok_or_else(|| Error::Config("missing `family` block".into()))?;
        spec.build()
    }

    pub fn morse_spec(&self) -> MorseSpec {
        self.morse.clone().unwrap_or_default()
    }
}

impl FamilySpec {
    pub fn build_plain(&self) -> Result<GeneratingFamily> {
        let layout = Layout::family(self.n, self.nf);
        let core = parse_field("family.core", &self.core, &layout)?;
        GeneratingFamily::new(
            self.base,
            self.n,
            self.nf,
            core,
            self.slope.clone(),
            self.inner_box.clone(),
            self.outer_box.clone(),
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<GeneratingFamily> {
        let mut f = self.build_plain()?;
        if let Some(phi) = &self.fpd {
            let layout = f.layout();
            let exprs = phi
                .iter()
                .enumerate()
                .map(|(j, s)| parse_field(&format!("family.fpd[{j}]"), s, &layout))
                .collect::<Result<Vec<_>>>()?;
            f = f.precompose_fpd(&exprs, 10_000, 5)?;
        }
        for s in self.stabilize.iter().flatten() {
            let sign = match s.as_str() {
                "+" => 1.0,
                "-" => -1.0,
                other => return Err(Error::Config(format!("stabilize entries are \"+\" or \"-\", got {other:?}"))),
            };
            f = f.stabilize(sign);
        }
        Ok(f)
    }

    /// The unscaled quadratic-like function for the (final) fiber dimension.
    pub fn base_q(&self, nf: usize) -> Result<QuadraticLike> {
        match &self.q {
            None => Ok(QuadraticLike::standard(nf, 1.0)),
            Some(q) => {
                let mut out = match &q.expr {
                    None => QuadraticLike::standard(nf, 1.0),
                    Some(src) => {
                        let expr = parse_field("family.Q.expr", src, &Layout::family(0, nf))?;
                        QuadraticLike {
                            expr,
                            zero: q.zero.clone().unwrap_or(vec![0.0; nf]),
                            bx: q.bx.clone().unwrap_or_else(|| BoxN::cube(nf, -1.0, 1.0)),
                            scale: 1.0,
                        }
                    }
                };
                if q.scale != 1.0 {
                    out = out.scaled(q.scale);
                }
                if out.fiber_dim() != nf {
                    return Err(Error::Config(format!("Q has fiber dimension {}, expected {nf}", out.fiber_dim())));
                }
                Ok(out)
            }
        }
    }
}

/// Config for an isotopy comparison: two family configs joined by a convex path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub start: PathEnd,
    pub end: PathEnd,
    /// Only the quintic smoothstep is offered.
    #[serde(default = "quintic")]
    pub sigma: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Number of t-slices sampled for rho^t.
    #[serde(default = "slices")]
    pub t_samples: usize,
}

fn quintic() -> String {
    "quintic".into()
}

fn slices() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathEnd {
    File(PathBuf),
    Inline(Box<RunConfig>),
}

impl PathConfig {
    pub fn load(path: &Path) -> Result<(PathConfig, RunConfig, RunConfig)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let pc: PathConfig = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let a = pc.start.resolve(dir)?;
        let b = pc.end.resolve(dir)?;
        Ok((pc, a, b))
    }
}

impl PathEnd {
    pub fn resolve(&self, dir: &Path) -> Result<RunConfig> {
        match self {
            PathEnd::File(p) => RunConfig::load(&dir.join(p)),
            PathEnd::Inline(c) => {
                c.check()?;
                Ok((**c).clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNKNOT: &str = r#"{
        "family": {"base": "euclidean", "n": 1, "N": 1,
                   "core": "e1^3/3 + (x1^2 - 1)*e1", "slope": [1.0],
                   "inner_box": [[-1.1, 1.1], [-1.1, 1.1]],
                   "outer_box": [[-1.3, 1.3], [-2.0, 2.0]]}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let c = RunConfig::from_json(UNKNOT).unwrap();
        assert_eq!(c.tolerances, Tolerances::default());
        let f = c.build_family().unwrap();
        assert_eq!((f.n, f.nf), (1, 1));
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = UNKNOT.replace("\"slope\"", "\"slop\": 1, \"slope\"");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = UNKNOT.replacen('{', "{\"extra\": 3,", 1);
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn malformed_expression_reports_position() {
        let bad = UNKNOT.replace("e1^3/3 + (x1^2 - 1)*e1", "x1 +");
        let c = RunConfig::from_json(&bad).unwrap();
        let err = c.build_family().unwrap_err();
        assert!(err.to_string().contains("position 5"), "{err}");
        assert!(err.is_input_error());
    }
}
