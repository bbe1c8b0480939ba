//! Plot-ready tables derived from a pipeline output directory.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use optauction::grid::UtilityGrid;
use optauction::orders::{law_of_gradient, stop_loss, xi_power_stop_loss};
use optauction::reduced::{classify_regions, region_map, ReducedSolution, RegionLabel};

use crate::artifacts::read_artifact;

pub const PLOT_KINDS: [&str; 4] = ["u_heatmap", "region_map", "plan_arrows", "stoploss_curves"];

pub fn region_csv(u: &UtilityGrid) -> Result<String> {
    let regions = region_map(u)?;
    let labels = classify_regions(u, 1e-6)?;
    let mut out = String::from("index,x1,x2,region,class\n");
    for idx in 0..u.grid.len() {
        let x = u.grid.node(idx);
        let class = match labels[idx] {
            RegionLabel::Zero => "zero",
            RegionLabel::Degenerate => "degenerate",
            RegionLabel::StrictlyConvex => "strictly_convex",
        };
        writeln!(out, "{idx},{},{},{},{class}", x[0], x[1], regions[idx].letter()).unwrap();
    }
    Ok(out)
}

fn heatmap_csv(u: &UtilityGrid) -> String {
    let n = u.grid.dim();
    let mut out: String = (1..=n).map(|i| format!("x{i},")).collect();
    out.push_str("u\n");
    for idx in 0..u.grid.len() {
        let x: String = u.grid.node(idx).iter().map(|v| format!("{v},")).collect();
        writeln!(out, "{x}{}", u.u[idx]).unwrap();
    }
    out
}

fn arrows_csv(sol: &ReducedSolution, plan_csv: &str) -> Result<String> {
    let grid = &sol.utility.grid;
    let n = grid.dim();
    let mut out: String = (1..=n).map(|i| format!("from{i},")).collect();
    out.extend((1..=n).map(|i| format!("to{i},")));
    out.push_str("mass\n");
    for (line_no, line) in plan_csv.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let parse = || -> Option<(usize, usize, f64)> {
            if f.len() != 3 {
                return None;
            }
            Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?))
        };
        let Some((i, j, m)) = parse() else { bail!("plan.csv line {}: malformed", line_no + 1) };
        if i >= grid.len() || j >= grid.len() {
            bail!("plan.csv line {}: node index out of range", line_no + 1);
        }
        let a: String = grid.node(i).iter().chain(grid.node(j).iter()).map(|v| format!("{v},")).collect();
        writeln!(out, "{a}{m:e}").unwrap();
    }
    Ok(out)
}

fn stoploss_csv(sol: &ReducedSolution) -> String {
    let p = &sol.problem;
    let laws: Vec<_> = (0..p.n).map(|i| law_of_gradient(&sol.utility, i, &p.rho)).collect();
    let mut out = String::from("alpha,curve,value\n");
    for j in 0..=200 {
        let a = j as f64 / 200.0;
        for (i, law) in laws.iter().enumerate() {
            writeln!(out, "{a},allocation{},{}", i + 1, stop_loss(law, a)).unwrap();
        }
        writeln!(out, "{a},bound,{}", xi_power_stop_loss(p.m, a)).unwrap();
    }
    out
}

/// Writes `plot_<kind>.csv` into `dir` from the artifacts already there.
pub fn emit_plot_data(dir: &Path, kind: &str) -> Result<PathBuf> {
    if !PLOT_KINDS.contains(&kind) {
        bail!("unknown plot kind {kind:?}; expected one of {}", PLOT_KINDS.join(", "));
    }
    let sol = read_artifact::<ReducedSolution>(&dir.join("solution.json"))?.payload;
    let text = match kind {
        "u_heatmap" => heatmap_csv(&sol.utility),
        "region_map" => region_csv(&sol.utility)?,
        "plan_arrows" => {
            let path = dir.join("plan.csv");
            let plan = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            arrows_csv(&sol, &plan)?
        }
        _ => stoploss_csv(&sol),
    };
    let path = dir.join(format!("plot_{kind}.csv"));
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
