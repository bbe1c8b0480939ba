use serde::{Deserialize, Serialize};

use super::beckmann::eval_clamped;
use super::unit_transform_measure;
use crate::density::DistributionSpec;
use crate::error::{Error, Result};
use crate::grid::{divergence_weighted, FlowField, Grid, GridMeasure, UtilityGrid, VectorField};
use crate::lp::LpConfig;
use crate::myerson::{integral_phi_xi_power, iron, DEFAULT_IRON_RESOLUTION};
use crate::orders::{dominance_witness_nd, CouplingMode, DominanceOutcome};
use crate::pwl::ConvexPwl;
use crate::reduced::{cone_sup, ObjectiveKind, ReducedSolution};

/// Above this many nodes the `π ⪰ μ` coupling LP is skipped.
pub const DOMINANCE_CHECK_NODES: usize = 300;
/// Separation values up to this are treated as solver noise.
pub const SEPARATION_TOL: f64 = 1e-7;

/// Upper bound `m·(Σ φ*(c) ω + Σ ∫φ_i(t^{m−1}) + s)` on the revenue of
/// every feasible grid mechanism, where `s ≥ 0` is the largest value of
/// `Σ (⟨x − c, g⟩ − u) ω` over convex increasing `u` with `g ∈ [0,1]^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub m: usize,
    /// Convex nondecreasing, `φ_i(0) = 0`, finite on `[0,1]`.
    pub phi: Vec<ConvexPwl>,
    pub flow: FlowField,
    /// `−div(c·ρ)` on the grid.
    pub pi: GridMeasure,
    pub beckmann_part: f64,
    pub phi_part: f64,
    pub separation: f64,
    pub dual_value: f64,
    pub primal_value: f64,
    pub gap_vs_primal: f64,
    /// Separation within [`SEPARATION_TOL`]: `c` alone certifies the bound.
    pub valid: bool,
    /// Maximizer of the separation problem when it is not.
    pub separating: Option<UtilityGrid>,
    /// Whether `π` dominates the one-bidder transform measure, when checked.
    pub pi_dominates_mu: Option<bool>,
    /// One item: `sup |c − V̄|` over the nodes.
    pub vbar_deviation: Option<f64>,
}

impl DualCertificate {
    /// Evaluate a candidate `(φ, c)` against grid mechanisms with `m` bidders.
    pub fn evaluate(
        grid: &Grid,
        rho: &DistributionSpec,
        m: usize,
        phi: Vec<ConvexPwl>,
        c: VectorField,
        primal_value: f64,
        cfg: &LpConfig,
    ) -> Result<Self> {
        let n = grid.dim();
        if phi.len() != n || c.dim != n || c.len() != grid.len() {
            return Err(Error::InvalidArgument("certificate shape does not match the grid".into()));
        }
        for f in &phi {
            f.validate()?;
            let (lo, hi) = f.domain();
            if lo > 0.0 || hi < 1.0 || f.eval(0.0).abs() > 1e-12 || f.right_derivative(0.0) < -1e-12 {
                return Err(Error::InvalidArgument("φ must be finite on [0,1], nondecreasing, with φ(0) = 0".into()));
            }
        }
        let omega = rho.node_weights(grid);
        let conj: Vec<ConvexPwl> = phi.iter().map(|f| restrict_unit(f).conjugate()).collect();
        let beckmann_part: f64 = (0..grid.len())
            .map(|x| omega[x] * c.at(x).iter().zip(&conj).map(|(&ci, f)| eval_clamped(f, ci)).sum::<f64>())
            .sum();
        let phi_part: f64 = phi.iter().map(|f| integral_phi_xi_power(&restrict_unit(f), m)).sum();
        let nodes: Vec<Vec<f64>> = grid.nodes().collect();
        let gcoef: Vec<f64> =
            (0..grid.len()).flat_map(|x| (0..n).map(move |i| (x, i))).map(|(x, i)| omega[x] * (nodes[x][i] - c.at(x)[i])).collect();
        let (sep_raw, maximizer) = cone_sup(grid, &gcoef, &omega, cfg)?;
        let separation = sep_raw.max(0.0);
        let valid = separation <= SEPARATION_TOL;
        let dual_value = m as f64 * (beckmann_part + phi_part + separation);
        let pi = GridMeasure::new(grid.clone(), divergence_weighted(grid, &c, &omega).iter().map(|v| -v).collect(), Vec::new());
        let pi_dominates_mu = if grid.len() <= DOMINANCE_CHECK_NODES {
            let mu = unit_transform_measure(rho, grid)?;
            Some(dominates(&pi, &mu, cfg)?)
        } else {
            None
        };
        let vbar_deviation = match (n, rho.marginal(0)) {
            (1, Some(_)) => {
                let ironed = iron(rho, DEFAULT_IRON_RESOLUTION)?;
                Some((0..grid.len()).map(|x| (c.at(x)[0] - ironed.vbar(nodes[x][0])).abs()).fold(0.0, f64::max))
            }
            _ => None,
        };
        Ok(Self {
            m,
            phi,
            flow: FlowField { grid: grid.clone(), c, singular_mass: None },
            pi,
            beckmann_part,
            phi_part,
            separation,
            dual_value,
            primal_value,
            gap_vs_primal: dual_value - primal_value,
            valid,
            separating: (!valid).then_some(maximizer),
            pi_dominates_mu,
            vbar_deviation,
        })
    }
}

/// The same function with `+∞` outside `[0,1]`.
pub fn restrict_unit(f: &ConvexPwl) -> ConvexPwl {
    let mut knots: Vec<f64> = f.knots.iter().cloned().filter(|&t| t > 0.0 && t < 1.0).collect();
    knots.insert(0, 0.0);
    knots.push(1.0);
    let values = knots.iter().map(|&t| f.eval(t)).collect();
    ConvexPwl { knots, values, left: None, right: None }
}

/// `a ⪰ b` for balanced signed measures: `b₊ + a₋ ⪯ a₊ + b₋`.
fn dominates(a: &GridMeasure, b: &GridMeasure, cfg: &LpConfig) -> Result<bool> {
    let (ap, an) = a.jordan_decomposition();
    let (bp, bn) = b.jordan_decomposition();
    let lower = bp.add(&an)?;
    let upper = ap.add(&bn)?;
    // Cancel common mass node by node; it couples to itself for free.
    let common: Vec<f64> = lower.density.iter().zip(&upper.density).map(|(l, u)| l.min(*u)).collect();
    let lower = GridMeasure::new(a.grid.clone(), lower.density.iter().zip(&common).map(|(l, c)| l - c).collect(), Vec::new());
    let upper = GridMeasure::new(a.grid.clone(), upper.density.iter().zip(&common).map(|(u, c)| u - c).collect(), Vec::new());
    if lower.total_mass() <= 1e-14 {
        return Ok(true);
    }
    let scale = 1.0 / upper.total_mass();
    let outcome = dominance_witness_nd(&lower.scaled(scale), &upper.scaled(scale), CouplingMode::Submartingale, cfg)?;
    Ok(matches!(outcome, DominanceOutcome::Witness(_)))
}

/// Build `φ_i` from the multipliers of the stop-loss budgets and `c` from
/// the multipliers that price the allocation variables, then evaluate.
pub fn certify_reduced_solution(sol: &ReducedSolution) -> Result<DualCertificate> {
    let p = &sol.problem;
    if p.kind != ObjectiveKind::Auction {
        return Err(Error::Unsupported("certificates are built for the auction objective only".into()));
    }
    let grid = &sol.utility.grid;
    let n = p.n;
    let lay = &sol.layout;
    let duals = &sol.lp_solution;
    let na = lay.alphas.len();
    let omega = p.rho.node_weights(grid);
    let mut phi = Vec::with_capacity(n);
    for i in 0..n {
        let theta: Vec<f64> = (0..na).map(|a| duals.row_duals[lay.dom_rows[i * na + a]].max(0.0)).collect();
        let mut knots = vec![0.0];
        knots.extend(lay.alphas.iter().cloned().filter(|&a| a > 0.0));
        knots.push(1.0);
        let values = knots.iter().map(|&t| lay.alphas.iter().zip(&theta).map(|(&a, &th)| th * (t - a).max(0.0)).sum()).collect();
        phi.push(ConvexPwl::new(knots, values, None, None)?);
    }
    let mut c = VectorField::zeros(n, grid.len());
    for x in 0..grid.len() {
        if omega[x] <= 0.0 {
            continue;
        }
        for i in 0..n {
            let eta: f64 = (0..na).map(|a| (-duals.row_duals[lay.s_rows[(x * n + i) * na + a]]).max(0.0)).sum();
            let beta = duals.col_duals[lay.g[x * n + i]].max(0.0);
            c.at_mut(x)[i] = (eta + beta) / omega[x];
        }
    }
    DualCertificate::evaluate(grid, &p.rho, p.m, phi, c, sol.value, &p.lp)
}
