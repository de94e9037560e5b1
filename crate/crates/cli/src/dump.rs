//! CSV polylines for external plotting.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use gftrees::pipeline::GfRun;

use crate::Global;

pub fn maybe(g: &Global, run: &GfRun) -> Result<()> {
    match &g.dump_trees {
        Some(dir) => write(dir, run),
        None => Ok(()),
    }
}

fn row(out: &mut String, head: &str, i: usize, p: &[f64]) {
    let _ = write!(out, "{head},{i}");
    for v in p {
        let _ = write!(out, ",{v}");
    }
    out.push('\n');
}

pub fn write(dir: &Path, run: &GfRun) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut lines = String::from("field,from,to,line,point,coords...\n");
    let mut tables = vec![&run.delta];
    if let Some(e) = &run.delta_ext {
        tables.extend(e.iter());
    }
    for t in tables {
        for e in &t.entries {
            for (k, l) in e.lines.iter().enumerate() {
                for (i, p) in l.iter().enumerate() {
                    row(&mut lines, &format!("{},{},{},{k}", t.field, e.from, e.to), i, p);
                }
            }
        }
    }
    let mut trees = String::from("p1,p2,p0,tree,edge,point,coords...\n");
    for e in &run.product.entries {
        for (k, tr) in e.trees.iter().enumerate() {
            for (j, poly) in tr.edges.iter().enumerate() {
                for (i, p) in poly.iter().enumerate() {
                    row(&mut trees, &format!("{},{},{},{k},{}", e.p1, e.p2, e.p0, j + 1), i, p);
                }
            }
        }
    }
    std::fs::write(dir.join("lines.csv"), lines)?;
    std::fs::write(dir.join("trees.csv"), trees)?;
    Ok(())
}
