//! Plain-text sparse dump: a short header, one `v` line per variable, one `r`
//! line per row and one `a` line per nonzero.
//!
//! ```text
//! optauction-lp 1
//! sense max
//! v 0 0 1 1
//! r 0 le 1
//! a 0 0 1
//! ```

use std::fmt::Write as _;

use super::{Constraint, LinearProgram, RowSense, Sense, Variable};
use crate::error::LpError;

const MAGIC: &str = "optauction-lp 1";

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64, LpError> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| LpError::Parse { line, msg: format!("bad number {s:?}") }),
    }
}

fn parse_idx(s: &str, line: usize) -> Result<usize, LpError> {
    s.parse().map_err(|_| LpError::Parse { line, msg: format!("bad index {s:?}") })
}

pub fn write_text(lp: &LinearProgram) -> String {
    let mut out = String::with_capacity(32 * (lp.vars.len() + lp.rows.len() + lp.num_nonzeros()));
    out.push_str(MAGIC);
    out.push('\n');
    let sense = match lp.sense {
        Sense::Minimize => "min",
        Sense::Maximize => "max",
    };
    let _ = writeln!(out, "sense {sense}");
    for (j, v) in lp.vars.iter().enumerate() {
        let _ = writeln!(out, "v {j} {} {} {}", fmt_f64(v.lower), fmt_f64(v.upper), fmt_f64(v.cost));
    }
    for (i, r) in lp.rows.iter().enumerate() {
        let s = match r.sense {
            RowSense::Le => "le",
            RowSense::Eq => "eq",
            RowSense::Ge => "ge",
        };
        let _ = writeln!(out, "r {i} {s} {}", fmt_f64(r.rhs));
    }
    for (i, r) in lp.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            let _ = writeln!(out, "a {i} {j} {}", fmt_f64(a));
        }
    }
    out
}

pub fn read_text(text: &str) -> Result<LinearProgram, LpError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(LpError::Parse { line: 1, msg: "missing header".into() }),
    }
    let mut lp = LinearProgram::new(Sense::Minimize);
    for (n, line) in lines {
        let line_no = n + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| LpError::Parse { line: line_no, msg: msg.into() };
        match f.as_slice() {
            ["sense", "min"] => lp.sense = Sense::Minimize,
            ["sense", "max"] => lp.sense = Sense::Maximize,
            ["v", j, lo, hi, c] => {
                if parse_idx(j, line_no)? != lp.vars.len() {
                    return Err(bad("variables must be listed in order"));
                }
                lp.vars.push(Variable {
                    lower: parse_f64(lo, line_no)?,
                    upper: parse_f64(hi, line_no)?,
                    cost: parse_f64(c, line_no)?,
                });
            }
            ["r", i, s, rhs] => {
                if parse_idx(i, line_no)? != lp.rows.len() {
                    return Err(bad("rows must be listed in order"));
                }
                let sense = match *s {
                    "le" => RowSense::Le,
                    "eq" => RowSense::Eq,
                    "ge" => RowSense::Ge,
                    _ => return Err(bad("row sense must be le, eq or ge")),
                };
                lp.rows.push(Constraint::new(Vec::new(), sense, parse_f64(rhs, line_no)?));
            }
            ["a", i, j, a] => {
                let i = parse_idx(i, line_no)?;
                let row = lp.rows.get_mut(i).ok_or_else(|| bad("nonzero references an undeclared row"))?;
                row.coeffs.push((parse_idx(j, line_no)?, parse_f64(a, line_no)?));
            }
            _ => return Err(bad("unrecognized line")),
        }
    }
    lp.validate()?;
    Ok(lp)
}
