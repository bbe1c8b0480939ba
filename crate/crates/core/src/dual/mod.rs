//! The transport side of the reduced problem: transform measure, the weak
//! transport dual, Beckmann flows and dual certificates.

mod beckmann;
mod certify;

pub use beckmann::{beckmann_value, legendre_value, BeckmannSolution, LegendreSolution};
pub use certify::{certify_reduced_solution, restrict_unit, DualCertificate};

use serde::{Deserialize, Serialize};

use crate::density::DistributionSpec;
use crate::error::{Error, Result};
use crate::grid::{discrete_divergence, FlowField, Grid, GridMeasure, UtilityGrid, VectorField};
use crate::lp::{LinearProgram, LpConfig, LpStatus, RowSense, Sense};
use crate::plan::{l1, TransportPlan};

/// Largest number of plan entries (γ plus κ) in the weak dual LP.
pub const PLAN_BUDGET: usize = 3_000_000;

/// Transform measure for one bidder, `δ₀ − ρ − div(xρ)`, discretized with
/// the grid's own adjoint so that `Σ u·μ = u(0) + Σ (⟨x, Du⟩ − u) ω`.
/// The divergence term puts mass `⟨x,ν⟩ρ` on the faces `x_i = 1`.
pub fn unit_transform_measure(rho: &DistributionSpec, grid: &Grid) -> Result<GridMeasure> {
    rho.validate()?;
    if rho.dim() != grid.dim() {
        return Err(Error::InvalidArgument("density and grid dimensions differ".into()));
    }
    let omega = rho.node_weights(grid);
    let field = FlowField { grid: grid.clone(), c: VectorField::from_fn(grid, |x| x.to_vec()), singular_mass: None };
    let div = discrete_divergence(&field, rho);
    let mut density: Vec<f64> = omega.iter().zip(&div.density).map(|(w, d)| -w - d).collect();
    density[0] += 1.0;
    let mu = GridMeasure::new(grid.clone(), density, Vec::new());
    let mass = mu.total_mass();
    if mass.abs() > 1e-8 {
        return Err(Error::Unbalanced { mass });
    }
    Ok(mu)
}

/// `m` times [`unit_transform_measure`].
pub fn transform_measure(rho: &DistributionSpec, m: usize, grid: &Grid) -> Result<GridMeasure> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one bidder".into()));
    }
    Ok(unit_transform_measure(rho, grid)?.scaled(m as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakDualSolution {
    /// `γ`: from the dominating measure to `μ₋`.
    pub plan: TransportPlan,
    /// `κ`: submartingale coupling of `μ₊` into the first marginal of `γ`.
    pub coupling: TransportPlan,
    pub value: f64,
    /// LP dual potential on the first marginal: convex, increasing,
    /// 1-Lipschitz in ℓ¹ up to solver tolerance.
    pub potential: Vec<f64>,
}

/// `min Σ‖x−y‖₁ γ(x,y)` over `γ ≥ 0` with `Pr₂γ = μ₋` and `μ₊ ⪯ Pr₁γ`
/// in the increasing convex order, the latter witnessed by a coupling `κ`
/// whose conditional barycenters dominate their sources.
pub fn solve_weak_dual(mu: &GridMeasure, cfg: &LpConfig) -> Result<WeakDualSolution> {
    let total = mu.total_mass();
    if total.abs() > 1e-8 * (1.0 + mu.total_variation()) {
        return Err(Error::Unbalanced { mass: total });
    }
    let grid = &mu.grid;
    let nodal = mu.to_nodal();
    let nodes: Vec<Vec<f64>> = grid.nodes().collect();
    let n = grid.dim();
    let sources: Vec<usize> = (0..grid.len()).filter(|&x| nodal[x] > 0.0).collect();
    let sinks: Vec<usize> = (0..grid.len()).filter(|&x| nodal[x] < 0.0).collect();
    if sources.is_empty() && sinks.is_empty() {
        let empty = TransportPlan::from_entries(grid.clone(), Vec::new(), 0.0);
        return Ok(WeakDualSolution { plan: empty.clone(), coupling: empty, value: 0.0, potential: vec![0.0; grid.len()] });
    }
    let entries = grid.len() * (sources.len() + sinks.len());
    if entries > PLAN_BUDGET {
        return Err(Error::ProblemSize(format!("weak dual needs {entries} plan variables, above {PLAN_BUDGET}")));
    }
    let mut lp = LinearProgram::new(Sense::Minimize);
    // Rows: κ source marginals, then Pr₁γ linking rows, then sink rows, then barycenters.
    let source_rows: Vec<usize> =
        sources.iter().map(|&x| lp.add_row(Vec::new(), RowSense::Eq, nodal[x])).collect();
    let link_rows: Vec<usize> = (0..grid.len()).map(|_| lp.add_row(Vec::new(), RowSense::Eq, 0.0)).collect();
    let sink_rows: Vec<usize> = sinks.iter().map(|&z| lp.add_row(Vec::new(), RowSense::Eq, -nodal[z])).collect();
    let bary_rows: Vec<usize> = (0..sources.len() * n).map(|_| lp.add_row(Vec::new(), RowSense::Ge, 0.0)).collect();
    let mut kappa = Vec::new();
    for (si, &x) in sources.iter().enumerate() {
        for y in 0..grid.len() {
            let j = lp.add_var(0.0, f64::INFINITY, 0.0);
            kappa.push((x, y, j));
            lp.rows[source_rows[si]].coeffs.push((j, 1.0));
            lp.rows[link_rows[y]].coeffs.push((j, 1.0));
            for i in 0..n {
                let d = nodes[y][i] - nodes[x][i];
                if d != 0.0 {
                    lp.rows[bary_rows[si * n + i]].coeffs.push((j, d));
                }
            }
        }
    }
    let mut gamma = Vec::new();
    for (zi, &z) in sinks.iter().enumerate() {
        for y in 0..grid.len() {
            let j = lp.add_var(0.0, f64::INFINITY, l1(&nodes[y], &nodes[z]));
            gamma.push((y, z, j));
            lp.rows[link_rows[y]].coeffs.push((j, -1.0));
            lp.rows[sink_rows[zi]].coeffs.push((j, 1.0));
        }
    }
    let sol = crate::lp::solve(&lp, cfg)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Stalled => return Err(Error::Stalled { stage: "weak dual".into() }),
        other => {
            return Err(Error::UnexpectedStatus { stage: "weak dual (balanced input cannot be infeasible)".into(), status: format!("{other:?}") })
        }
    }
    let drop = 1e-13;
    let plan = TransportPlan::from_entries(grid.clone(), gamma.iter().map(|&(y, z, j)| (y, z, sol.primal[j])), drop);
    let coupling = TransportPlan::from_entries(grid.clone(), kappa.iter().map(|&(x, y, j)| (x, y, sol.primal[j])), drop);
    // The linking rows price the dominating marginal; negate to get the
    // potential that γ transports downhill.
    let potential = link_rows.iter().map(|&r| -sol.row_duals[r]).collect();
    Ok(WeakDualSolution { plan, coupling, value: sol.objective, potential })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlacknessReport {
    pub tol: f64,
    pub total_mass: f64,
    /// Plan mass on pairs with `|u(x) − u(y) − ‖x−y‖₁| > tol`.
    pub violating_mass: f64,
    pub violating_fraction: f64,
    pub worst: f64,
}

/// How much of `γ` sits on pairs where `u` does not rise at unit ℓ¹ rate.
pub fn complementary_slackness_report(u: &UtilityGrid, plan: &TransportPlan, tol: f64) -> Result<SlacknessReport> {
    if u.grid != plan.grid {
        return Err(Error::InvalidArgument("utility and plan live on different grids".into()));
    }
    let (mut total, mut bad, mut worst) = (0.0, 0.0, 0.0f64);
    for &(x, y, mass) in &plan.entries {
        let gap = (u.u[x] - u.u[y] - l1(&u.grid.node(x), &u.grid.node(y))).abs();
        total += mass;
        worst = worst.max(gap);
        if gap > tol {
            bad += mass;
        }
    }
    let fraction = if total > 0.0 { bad / total } else { 0.0 };
    Ok(SlacknessReport { tol, total_mass: total, violating_mass: bad, violating_fraction: fraction, worst })
}
