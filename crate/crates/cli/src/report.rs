//! Deterministic JSON reports; the wall-clock stamp lives outside `report`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};

use gftrees::suite::Check;

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    /// Fully resolved configuration, tolerances included.
    pub config: Value,
    pub rho: Option<Value>,
    pub s: Option<Value>,
    pub results: Map<String, Value>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, config: Value, seed: u64) -> Report {
        Report {
            tool: "gftrees",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            seed,
            config,
            rho: None,
            s: None,
            results: Map::new(),
            checks: vec![],
            passed: true,
        }
    }

    pub fn section(&mut self, name: &str, v: Value) {
        self.results.insert(name.into(), v);
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
        self.finish();
    }

    pub fn finish(&mut self) {
        self.passed = self.checks.iter().all(|c| c.passed);
    }

    pub fn to_json(&self) -> Value {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        json!({ "report": self, "generated_at_unix": stamp })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// Aligned terminal summary.
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "gftrees {}  seed {}", self.command, self.seed);
        if let Some(Value::Array(rows)) = self.results.get("chords") {
            let _ = writeln!(s, "  {:<6} {:>14} {:>5} {:>8} {:>10}", "chord", "value", "ind", "|p|", "|p|(N+1)");
            for r in rows {
                let _ = writeln!(
                    s,
                    "  {:<6} {:>14.9} {:>5} {:>8} {:>10}",
                    r["id"].as_str().unwrap_or("?"),
                    r["value"].as_f64().unwrap_or(f64::NAN),
                    r["index"].as_i64().unwrap_or(-1),
                    r["grading"].as_i64().unwrap_or(-1),
                    r["grading_shifted"].as_i64().unwrap_or(-1)
                );
            }
        }
        if let Some(Value::Object(c)) = self.results.get("cohomology") {
            let _ = writeln!(s, "  ranks {}  mu2 zero: {}", c["ranks"], c["mu_is_zero"]);
        }
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let _ = writeln!(s, "  {} {:<w$}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(s, "{}", if self.passed { "all checks passed" } else { "some checks FAILED" });
        s
    }
}
