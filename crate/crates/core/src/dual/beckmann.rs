use serde::{Deserialize, Serialize};

use crate::density::DistributionSpec;
use crate::error::{Error, Result};
use crate::grid::{FlowField, GridMeasure, VectorField};
use crate::lp::{LinearProgram, LpConfig, LpStatus, RowSense, Sense};
use crate::pwl::ConvexPwl;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeckmannSolution {
    pub flow: FlowField,
    /// `Σ_x Σ_i φ*_i(c_i(x)) ω_x`.
    pub value: f64,
}

/// Evaluate at the nearest point of the domain; absorbs solver round-off.
pub(crate) fn eval_clamped(f: &ConvexPwl, t: f64) -> f64 {
    let (lo, hi) = f.domain();
    f.eval(t.clamp(lo, hi))
}

fn check_inputs(pi: &GridMeasure, fns: &[ConvexPwl], rho: &DistributionSpec) -> Result<()> {
    let n = pi.grid.dim();
    if fns.len() != n || rho.dim() != n {
        return Err(Error::InvalidArgument(format!("need {n} per-axis functions and a {n}-dimensional density")));
    }
    for f in fns {
        f.validate()?;
    }
    let mass = pi.total_mass();
    if mass.abs() > 1e-9 * (1.0 + pi.total_variation()) {
        return Err(Error::Unbalanced { mass });
    }
    Ok(())
}

/// `min Σ φ*_i(c_i) ω` over fields `c` with `div(c·ρ) = −π` in the grid's
/// discrete sense. `phi_conj[i]` is the cost of the `i`-th flow component.
pub fn beckmann_value(
    pi: &GridMeasure,
    phi_conj: &[ConvexPwl],
    rho: &DistributionSpec,
    cfg: &LpConfig,
) -> Result<BeckmannSolution> {
    check_inputs(pi, phi_conj, rho)?;
    let grid = &pi.grid;
    let n = grid.dim();
    let omega = rho.node_weights(grid);
    let target = pi.to_nodal();
    let mut lp = LinearProgram::new(Sense::Minimize);
    let rows: Vec<usize> = target.iter().map(|&p| lp.add_row(Vec::new(), RowSense::Eq, p)).collect();
    let mut cvars = Vec::with_capacity(grid.len() * n);
    for x in 0..grid.len() {
        for (i, f) in phi_conj.iter().enumerate() {
            let (lo, hi) = f.domain();
            let c = lp.add_var(lo, hi, 0.0);
            cvars.push(c);
            if omega[x] == 0.0 {
                continue;
            }
            for (j, s) in grid.stencil(x, i) {
                lp.rows[rows[j]].coeffs.push((c, omega[x] * s));
            }
            let t = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, omega[x]);
            for (a, b) in f.affine_pieces() {
                lp.add_row(vec![(t, 1.0), (c, -a)], RowSense::Ge, b);
            }
        }
    }
    // Nodes touched by no stencil keep an empty row; drop them if balanced.
    for (j, &r) in rows.iter().enumerate() {
        if lp.rows[r].coeffs.is_empty() {
            if target[j].abs() > 1e-12 {
                return Err(Error::BeckmannInfeasible(format!("node {j} carries mass {} but no flow reaches it", target[j])));
            }
            lp.rows[r].coeffs.push((cvars[0], 0.0));
        }
    }
    let sol = crate::lp::solve(&lp, cfg)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            let y = sol.farkas.as_deref().unwrap_or(&[]);
            let worst = rows
                .iter()
                .enumerate()
                .max_by(|a, b| y.get(*a.1).map(|v| v.abs()).unwrap_or(0.0).total_cmp(&y.get(*b.1).map(|v| v.abs()).unwrap_or(0.0)))
                .map(|(j, _)| j)
                .unwrap_or(0);
            return Err(Error::BeckmannInfeasible(format!(
                "flow bounds cannot carry the mass; the certificate concentrates on node {worst} at {:?} (mass {})",
                grid.node(worst),
                target[worst]
            )));
        }
        LpStatus::Stalled => return Err(Error::Stalled { stage: "beckmann".into() }),
        other => return Err(Error::UnexpectedStatus { stage: "beckmann".into(), status: format!("{other:?}") }),
    }
    let c = VectorField { dim: n, data: cvars.iter().map(|&j| sol.primal[j]).collect() };
    // Re-evaluate the cost exactly rather than trusting the epigraph slack.
    let value = (0..grid.len())
        .map(|x| omega[x] * c.at(x).iter().zip(phi_conj).map(|(&ci, f)| eval_clamped(f, ci)).sum::<f64>())
        .sum();
    Ok(BeckmannSolution { flow: FlowField { grid: grid.clone(), c, singular_mass: None }, value })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegendreSolution {
    pub u: Vec<f64>,
    /// `Σ u π − Σ_x Σ_i φ_i(D_i u(x)) ω_x`.
    pub value: f64,
}

/// `sup_u Σ u π − Σ φ_i(D_i u) ω` over nodal `u` with `u(0) = 0`; the
/// Legendre side of [`beckmann_value`] for `φ_i = (φ*_i)*`.
pub fn legendre_value(pi: &GridMeasure, phi: &[ConvexPwl], rho: &DistributionSpec, cfg: &LpConfig) -> Result<LegendreSolution> {
    check_inputs(pi, phi, rho)?;
    let grid = &pi.grid;
    let omega = rho.node_weights(grid);
    let target = pi.to_nodal();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let u: Vec<usize> = (0..grid.len())
        .map(|x| if x == 0 { lp.add_var(0.0, 0.0, target[x]) } else { lp.add_var(f64::NEG_INFINITY, f64::INFINITY, target[x]) })
        .collect();
    for x in 0..grid.len() {
        for (i, f) in phi.iter().enumerate() {
            let grad: Vec<(usize, f64)> = grid.stencil(x, i).iter().map(|&(j, s)| (u[j], s)).collect();
            let (lo, hi) = f.domain();
            if lo.is_finite() {
                lp.add_row(grad.clone(), RowSense::Ge, lo);
            }
            if hi.is_finite() {
                lp.add_row(grad.clone(), RowSense::Le, hi);
            }
            if omega[x] == 0.0 {
                continue;
            }
            let s = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, -omega[x]);
            for (a, b) in f.affine_pieces() {
                let mut coeffs = vec![(s, 1.0)];
                coeffs.extend(grad.iter().map(|&(j, v)| (j, -a * v)));
                lp.add_row(coeffs, RowSense::Ge, b);
            }
        }
    }
    let sol = crate::lp::solve(&lp, cfg)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::UnexpectedStatus { stage: "legendre".into(), status: format!("{:?}", sol.status) });
    }
    let values: Vec<f64> = u.iter().map(|&j| sol.primal[j]).collect();
    let grad = crate::grid::gradient_of(grid, &values);
    let penalty: f64 = (0..grid.len())
        .map(|x| omega[x] * grad.at(x).iter().zip(phi).map(|(&g, f)| eval_clamped(f, g)).sum::<f64>())
        .sum();
    let value = values.iter().zip(&target).map(|(a, b)| a * b).sum::<f64>() - penalty;
    Ok(LegendreSolution { u: values, value })
}
