//! CSV renderings of grid objects; plain `{}` float formatting, which is
//! the shortest round-tripping representation.

use std::fmt::Write;

use optauction::grid::{discrete_gradient, FlowField, Grid, GridMeasure, UtilityGrid};

fn coord_header(n: usize, prefix: &str) -> String {
    (1..=n).map(|i| format!(",{prefix}{i}")).collect()
}

fn coords(grid: &Grid, idx: usize) -> String {
    grid.node(idx).iter().map(|v| format!(",{v}")).collect()
}

pub fn utility_csv(u: &UtilityGrid) -> String {
    let n = u.grid.dim();
    let g = discrete_gradient(u);
    let mut out = format!("index{},u{}\n", coord_header(n, "x"), coord_header(n, "g"));
    for idx in 0..u.grid.len() {
        let gs: String = g.at(idx).iter().map(|v| format!(",{v}")).collect();
        writeln!(out, "{idx}{},{}{gs}", coords(&u.grid, idx), u.u[idx]).unwrap();
    }
    out
}

pub fn flow_csv(f: &FlowField) -> String {
    let n = f.grid.dim();
    let mut out = format!("index{}{}\n", coord_header(n, "x"), coord_header(n, "c"));
    for idx in 0..f.grid.len() {
        let cs: String = f.c.at(idx).iter().map(|v| format!(",{v}")).collect();
        writeln!(out, "{idx}{}{cs}", coords(&f.grid, idx)).unwrap();
    }
    out
}

pub fn measure_csv(m: &GridMeasure) -> String {
    let n = m.grid.dim();
    let mut out = format!("index{},mass\n", coord_header(n, "x"));
    for idx in 0..m.grid.len() {
        writeln!(out, "{idx}{},{}", coords(&m.grid, idx), m.density[idx]).unwrap();
    }
    for a in &m.atoms {
        let pos: String = a.pos.iter().map(|v| format!(",{v}")).collect();
        writeln!(out, "atom{pos},{}", a.mass).unwrap();
    }
    out
}
