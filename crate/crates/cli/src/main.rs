use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde_json::{json, Value};

use gftrees::config::{Mode, RunConfig};
use gftrees::continuation::{isotopy_compare, FamilyPath};
use gftrees::pipeline::{GfRun, MorseRun};
use gftrees::suite::{self, Check};
use gftrees::Exec;

mod dump;
mod report;

use report::Report;

#[derive(Parser, Debug)]
#[command(name = "gftrees", version, about = "Generating family cohomology with flow-tree products over Z2")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Seed for the perturbation triple s (default: the config's rng_seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Write line and tree polylines as CSV into DIR.
    #[arg(long, global = true, value_name = "DIR", num_args = 0..=1, default_missing_value = "gftrees-dump")]
    dump_trees: Option<PathBuf>,
    /// Write the JSON report to PATH.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Reject convergence along repelling directions.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Positive critical points of w with index and grading.
    Chords { config: PathBuf },
    /// Gradient-line counts and the differential.
    Differential { config: PathBuf },
    /// Graded ranks and the product on cohomology.
    Cohomology { config: PathBuf },
    /// Flow-tree counts and m2.
    Product { config: PathBuf },
    /// Every invariant suite on one family.
    Verify {
        config: PathBuf,
        /// Skip the stabilization and fpd reruns.
        #[arg(long)]
        quick: bool,
    },
    /// Compare against an equivalent family, another seed or along an isotopy.
    Compare(CompareArgs),
    /// Morse mode on the flat torus (built-in f, g unless a config is given).
    MorseTorus { config: Option<PathBuf> },
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("what").required(true).multiple(false).args(["stabilize", "fpd", "reseed", "isotopy"])))]
struct CompareArgs {
    /// Family config (not used with --isotopy).
    config: Option<PathBuf>,
    /// Compare with F + e^2 ("+") or F - e^2 ("-").
    #[arg(long, value_parser = ["+", "-"], allow_hyphen_values = true)]
    stabilize: Option<String>,
    /// Compare with a fiber twist (the config's own fpd, else a default one).
    #[arg(long)]
    fpd: bool,
    /// Compare the product for --seed against this seed.
    #[arg(long, value_name = "SEED")]
    reseed: Option<u64>,
    /// Path config joining two family configs.
    #[arg(long, value_name = "PATH")]
    isotopy: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Input(anyhow::Error),
    Run(anyhow::Error),
}

fn classify(e: anyhow::Error) -> Failure {
    match e.downcast_ref::<gftrees::Error>() {
        Some(g) if g.is_input_error() => Failure::Input(e),
        _ => Failure::Run(e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GFTREES_LOG", "warn")).format_timestamp(None).init();
    let cli = Cli::parse();
    let g = cli.global.clone();
    let res = gftrees::exec::with_jobs(g.jobs, || run(cli));
    match res {
        Ok(rep) => {
            print!("{}", rep.text());
            if let Some(path) = &g.json {
                if let Err(e) = rep.write(path) {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
            }
            if rep.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => match classify(e) {
            Failure::Input(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
            Failure::Run(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}

fn exec_for(jobs: usize) -> Exec {
    if jobs == 1 {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn load(path: &Path, g: &Global) -> Result<(RunConfig, u64)> {
    let mut cfg = RunConfig::load(path)?;
    if g.strict {
        cfg.tolerances.strict = true;
    }
    if let Some(s) = g.seed {
        cfg.seeds.rng_seed = s;
    }
    let seed = cfg.seeds.rng_seed;
    Ok((cfg, seed))
}

fn gf_run(path: &Path, g: &Global, ext_lines: bool) -> Result<(RunConfig, u64, GfRun)> {
    let (cfg, seed) = load(path, g)?;
    if cfg.mode != Mode::Gf {
        anyhow::bail!(gftrees::Error::Config(format!("{}: expected a family config (mode gf)", path.display())));
    }
    let run = GfRun::run(&cfg, seed, ext_lines, exec_for(g.jobs)).with_context(|| format!("running {}", path.display()))?;
    Ok((cfg, seed, run))
}

fn base(cmd: &str, cfg: &RunConfig, seed: u64, run: &GfRun) -> Report {
    let mut r = Report::new(cmd, json!(cfg), seed);
    r.rho = Some(json!(run.gf.rho));
    r.s = Some(json!(run.product.s));
    r.section("chords", json!(suite::chord_rows(&run.gf.chords)));
    r.section("setup", json!({
        "lambda": run.gf.lambda,
        "annulus_floor": run.gf.annulus_floor,
        "diagonal_hits": run.gf.diagonal_hits,
        "critical_points": run.gf.crits.len(),
    }));
    r
}

fn ring_json(run: &GfRun) -> Value {
    json!({
        "ranks": run.ring.ranks(),
        "classes": run.ring.h[2].classes,
        "mu": run.ring.table(),
        "mu_is_zero": run.ring.mu_is_zero(),
    })
}

fn run(cli: Cli) -> Result<Report> {
    let g = &cli.global;
    let exec = exec_for(g.jobs);
    let mut rep = match &cli.cmd {
        Cmd::Chords { config } => {
            let (cfg, seed) = load(config, g)?;
            let gf = gftrees::pipeline::Gf::setup(&cfg, exec).with_context(|| format!("setting up {}", config.display()))?;
            let mut r = Report::new("chords", json!(cfg), seed);
            r.rho = Some(json!(gf.rho));
            r.section("chords", json!(suite::chord_rows(&gf.chords)));
            r.check(Check::new("chords", !gf.chords.is_empty(), format!("{} chords", gf.chords.len())));
            r.check(suite::iota_check(&gf));
            r
        }
        Cmd::Differential { config } => {
            let (cfg, seed, run) = gf_run(config, g, true)?;
            let mut r = base("differential", &cfg, seed, &run);
            r.section("delta", json!(run.delta));
            r.section("delta_extended", json!(run.delta_ext));
            r.check(suite::line_agreement(&run));
            r.check(suite::confinement(&run)?);
            dump::maybe(g, &run)?;
            r
        }
        Cmd::Cohomology { config } => {
            let (cfg, seed, run) = gf_run(config, g, false)?;
            let mut r = base("cohomology", &cfg, seed, &run);
            r.section("cohomology", ring_json(&run));
            r.check(suite::algebra_check(&run, seed));
            r
        }
        Cmd::Product { config } => {
            let (cfg, seed, run) = gf_run(config, g, false)?;
            let mut r = base("product", &cfg, seed, &run);
            r.section("trees", json!(run.product.entries));
            r.section("m2", json!(run.complex.m2));
            r.check(suite::algebra_check(&run, seed));
            r.check(suite::confinement(&run)?);
            dump::maybe(g, &run)?;
            r
        }
        Cmd::Verify { config, quick } => {
            let (cfg, seed) = load(config, g)?;
            let out = suite::verify(&cfg, seed, !quick, exec).with_context(|| format!("verifying {}", config.display()))?;
            let mut r = base("verify", &cfg, seed, &out.run);
            r.section("delta", json!(out.run.delta));
            r.section("cohomology", ring_json(&out.run));
            for c in out.checks {
                r.check(c);
            }
            dump::maybe(g, &out.run)?;
            r
        }
        Cmd::Compare(args) => compare(args, g, exec)?,
        Cmd::MorseTorus { config } => {
            let mut cfg = match config {
                Some(p) => load(p, g)?.0,
                None => RunConfig::morse_torus_default(),
            };
            if let Some(s) = g.seed {
                cfg.seeds.rng_seed = s;
            }
            cfg.tolerances.strict |= g.strict;
            let seed = cfg.seeds.rng_seed;
            let run = MorseRun::run(&cfg, seed, exec)?;
            let mut r = Report::new("morse-torus", json!(cfg), seed);
            r.rho = Some(json!({ "delta_pert": run.spec.delta_pert }));
            r.s = Some(json!(run.product.s));
            r.section("critical_points", json!(run.crits));
            r.section("delta", json!(run.delta));
            r.section("trees", json!(run.product.entries));
            r.section("windings", json!(run.windings));
            r.section("ranks", json!(run.ring.h.iter().map(|h| &h.ranks).collect::<Vec<_>>()));
            r.section("mu", json!(run.ring.table()));
            for c in suite::morse_torus_checks(&run) {
                r.check(c);
            }
            r
        }
    };
    rep.finish();
    Ok(rep)
}

fn compare(args: &CompareArgs, g: &Global, exec: Exec) -> Result<Report> {
    if let Some(path) = &args.isotopy {
        let (pc, fp) = FamilyPath::load(path, exec).with_context(|| format!("loading path {}", path.display()))?;
        let seed = g.seed.unwrap_or(fp.start.cfg.seeds.rng_seed);
        let r0 = GfRun::from_setup(fp.start.clone(), seed, true)?;
        let r1 = GfRun::from_setup(fp.end.clone(), seed, true)?;
        let iso = isotopy_compare(&fp, &r0, &r1, exec)?;
        let mut r = Report::new("compare --isotopy", json!({ "path": pc, "start": fp.start.cfg, "end": fp.end.cfg }), seed);
        r.rho = Some(json!({ "start": r0.gf.rho, "end": r1.gf.rho, "epsilon": iso.epsilon }));
        r.s = Some(json!({ "start": r0.product.s, "end": r1.product.s }));
        r.section("start_chords", json!(suite::chord_rows(&r0.gf.chords)));
        r.section("end_chords", json!(suite::chord_rows(&r1.gf.chords)));
        r.section("isotopy", json!(iso));
        for m in &iso.maps {
            r.check(Check::new(format!("cochain[{}]", m.phi.field), m.cochain_defect.is_empty(), cochain_detail(m)));
        }
        r.check(Check::new("commutes", iso.verdict.passed(), verdict_detail(&iso.verdict)));
        r.check(Check::new("reversal", iso.reversal_is_identity, format!("induced Phi_reverse Phi on H = {:?}", iso.reversal.support())));
        let degen = fp.degenerate_slices();
        r.section("degenerate_slices", json!(degen));
        return Ok(r);
    }
    let config = args.config.as_ref().ok_or_else(|| gftrees::Error::Config("compare needs a family config".into()))?;
    let (cfg, seed, a) = gf_run(config, g, false)?;
    let mut r = base("compare", &cfg, seed, &a);
    r.section("cohomology", ring_json(&a));
    if let Some(sign) = &args.stabilize {
        let other = suite::stabilized(&cfg, sign.chars().next().expect("validated"))?;
        let b = GfRun::run(&other, seed, false, exec)?;
        let (m, v) = suite::compare_matched(&a, &b)?;
        r.section("other_chords", json!(suite::chord_rows(&b.gf.chords)));
        r.section("other_cohomology", ring_json(&b));
        r.section("matching", json!(m));
        r.check(Check::new(format!("stabilize[{sign}]"), v.passed(), verdict_detail(&v)));
    } else if args.fpd {
        let (plain, twisted) = suite::fpd_pair(&cfg)?;
        let a = GfRun::run(&plain, seed, false, exec)?;
        let b = GfRun::run(&twisted, seed, false, exec)?;
        let (m, v) = suite::compare_matched(&a, &b)?;
        r.section("twist", json!(twisted.family.as_ref().and_then(|f| f.fpd.clone())));
        r.section("other_chords", json!(suite::chord_rows(&b.gf.chords)));
        r.section("matching", json!(m));
        r.check(Check::new("fpd", v.passed(), verdict_detail(&v)));
    } else if let Some(s2) = args.reseed {
        let b = a.reseed(s2)?;
        let v = suite::compare_reseeded(&a, &b)?;
        r.section("other_s", json!(b.product.s));
        r.section("other_m2", json!(b.complex.m2));
        r.section("other_cohomology", ring_json(&b));
        r.check(Check::new(format!("reseed[{seed} vs {s2}]"), v.passed(), verdict_detail(&v)));
    }
    Ok(r)
}

fn verdict_detail(v: &gftrees::complex::Verdict) -> String {
    if v.passed() {
        "graded ranks and class-level mu2 agree".into()
    } else {
        v.defects.join("; ")
    }
}

fn cochain_detail(m: &gftrees::continuation::ContinuationCheck) -> String {
    let phi = &m.phi.matrix;
    if m.cochain_defect.is_empty() {
        format!("{}x{} Phi, support {:?}", phi.rows(), phi.cols(), phi.support())
    } else {
        format!("d1 Phi + Phi d0 nonzero at {:?}", m.cochain_defect)
    }
}
