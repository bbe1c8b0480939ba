//! Grid discretization of the reduced auction problem
//! `max m ∫(⟨x,∇u⟩ − u)ρ` over convex increasing `u` with `u(0) = 0` and
//! `u_{x_i} ⪯_icx ξ^{m−1}`, and of the quadratic-cost monopolist.

mod regions;

pub use regions::{classify_regions, region_map, Region, RegionLabel};

use serde::{Deserialize, Serialize};

use crate::density::DistributionSpec;
use crate::error::{Error, Result};
use crate::grid::{Grid, UtilityGrid, VectorField};
use crate::lp::{Constraint, LinearProgram, LpConfig, LpSession, LpSolution, LpStatus, RowSense, Sense};
use crate::orders::{xi_power_stop_loss, Distribution1D};

/// Largest number of stop-loss auxiliaries accepted in one LP.
pub const AUX_BUDGET: usize = 4_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityEncoding {
    /// `u(y) ≥ u(x) + ⟨g(x), y − x⟩` for every ordered node pair.
    ExactPairwise,
    /// Neighbour supporting planes plus nonnegative second differences
    /// along the axes and both diagonals; a relaxation.
    AxisStencil,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Allocation box `g ∈ [0,1]^n`.
    Auction,
    /// Types on `[a, a+1]^n`, cost `½|g|²` replaced by its maximum over
    /// `pieces` tangents per axis, `g ∈ [0, a+1]^n`.
    QuadraticMonopolist { offset: f64, pieces: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalProblem {
    pub n: usize,
    pub m: usize,
    pub rho: DistributionSpec,
    pub k: usize,
    pub kind: ObjectiveKind,
    pub encoding: ConvexityEncoding,
    /// Size of the uniform part of the α-grid.
    pub alpha_points: usize,
    pub lp: LpConfig,
}

impl PrimalProblem {
    pub fn auction(n: usize, m: usize, rho: DistributionSpec, k: usize) -> Self {
        Self {
            n,
            m,
            rho,
            k,
            kind: ObjectiveKind::Auction,
            encoding: ConvexityEncoding::ExactPairwise,
            alpha_points: 33,
            lp: LpConfig::default(),
        }
    }

    /// Quadratic-cost monopolist on `[a, a+1]²` with uniform types.
    pub fn monopolist_quadratic(offset: f64, k: usize) -> Self {
        Self {
            kind: ObjectiveKind::QuadraticMonopolist { offset, pieces: 33 },
            ..Self::auction(2, 1, DistributionSpec::uniform(2), k)
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.k)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidArgument("need n ≥ 1 items and m ≥ 1 bidders".into()));
        }
        if self.rho.dim() != self.n {
            return Err(Error::InvalidArgument(format!("density has dimension {}, expected {}", self.rho.dim(), self.n)));
        }
        self.rho.validate()?;
        if let ObjectiveKind::QuadraticMonopolist { offset, pieces } = self.kind {
            if self.m != 1 || !(offset >= 0.0) || pieces < 2 {
                return Err(Error::InvalidArgument("monopolist needs m = 1, offset ≥ 0 and ≥ 2 tangents".into()));
            }
        }
        Ok(())
    }

    fn offset(&self) -> f64 {
        match self.kind {
            ObjectiveKind::Auction => 0.0,
            ObjectiveKind::QuadraticMonopolist { offset, .. } => offset,
        }
    }

    fn g_upper(&self) -> f64 {
        1.0 + self.offset()
    }

    /// Stop-loss levels: `alpha_points` uniform values plus the support of
    /// the `k`-point discretization of `ξ^{m−1}`, always containing 0.
    pub fn alpha_grid(&self) -> Vec<f64> {
        if self.m == 1 {
            return Vec::new();
        }
        let a = self.alpha_points.max(2);
        let mut alphas: Vec<f64> = (0..a).map(|j| j as f64 / (a - 1) as f64).collect();
        alphas.extend_from_slice(Distribution1D::xi_power(self.m, self.k).support());
        alphas.push(0.0);
        // α = 1 is implied by g ≤ 1.
        alphas.retain(|&v| v < 1.0);
        alphas.sort_by(f64::total_cmp);
        alphas.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        alphas
    }
}

/// Where each group of variables and rows lives in the LP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpLayout {
    pub n: usize,
    pub nodes: usize,
    pub u: Vec<usize>,
    /// `g[x·n + i]`.
    pub g: Vec<usize>,
    /// Epigraph variables of the monopolist cost, `q[x·n + i]`.
    pub q: Vec<usize>,
    pub alphas: Vec<f64>,
    /// `s[(x·n + i)·A + a]` and the row `s ≥ g − α` defining it.
    pub s: Vec<usize>,
    pub s_rows: Vec<usize>,
    /// Stop-loss budget rows, `dom_rows[i·A + a]`.
    pub dom_rows: Vec<usize>,
    /// Ordered pairs `(x, y)` with a supporting-plane row.
    pub pairs: Vec<(usize, usize)>,
}

fn supporting_row(grid: &Grid, nodes: &[Vec<f64>], layout: &LpLayout, x: usize, y: usize) -> Constraint {
    let n = grid.dim();
    let mut coeffs = vec![(layout.u[y], 1.0), (layout.u[x], -1.0)];
    for i in 0..n {
        let step = nodes[y][i] - nodes[x][i];
        if step != 0.0 {
            coeffs.push((layout.g[x * n + i], -step));
        }
    }
    Constraint::new(coeffs, RowSense::Ge, 0.0)
}

/// Neighbour offsets: ±e_i, and for n = 2 the four diagonal steps.
fn neighbor_steps(n: usize) -> Vec<Vec<i64>> {
    let mut steps = Vec::new();
    for i in 0..n {
        for s in [-1i64, 1] {
            let mut v = vec![0; n];
            v[i] = s;
            steps.push(v);
        }
    }
    if n == 2 {
        for (a, b) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            steps.push(vec![a, b]);
        }
    }
    steps
}

fn shift(grid: &Grid, x: usize, step: &[i64]) -> Option<usize> {
    let mut mi = grid.multi_index(x);
    for (c, &s) in mi.iter_mut().zip(step) {
        let v = *c as i64 + s;
        if v < 0 || v >= grid.k() as i64 {
            return None;
        }
        *c = v as usize;
    }
    Some(grid.flat_index(&mi))
}

/// Initial pair set for lazy generation: neighbours and both directions to
/// the origin.
fn seed_pairs(grid: &Grid) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let steps = neighbor_steps(grid.dim());
    for x in 0..grid.len() {
        for s in &steps {
            if let Some(y) = shift(grid, x, s) {
                pairs.push((x, y));
            }
        }
        if x != 0 {
            pairs.push((x, 0));
            pairs.push((0, x));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Tangents of `½t²` at `pieces` equispaced points of `[0, hi]`.
fn quadratic_tangents(hi: f64, pieces: usize) -> Vec<(f64, f64)> {
    (0..pieces)
        .map(|j| {
            let t = hi * j as f64 / (pieces - 1) as f64;
            (t, -0.5 * t * t)
        })
        .collect()
}

fn check_aux(p: &PrimalProblem, grid: &Grid) -> Result<usize> {
    let levels = p.alpha_grid().len();
    let aux = grid.len() * p.n * levels;
    if aux > AUX_BUDGET {
        return Err(Error::ProblemSize(format!(
            "{} nodes × {} axes × {levels} stop-loss levels = {aux} auxiliaries exceeds {AUX_BUDGET}",
            grid.len(),
            p.n
        )));
    }
    Ok(aux)
}

fn assemble(p: &PrimalProblem, pairs: Vec<(usize, usize)>) -> Result<(LinearProgram, LpLayout)> {
    p.validate()?;
    let grid = p.grid()?;
    let n = p.n;
    let nodes: Vec<Vec<f64>> = grid.nodes().collect();
    let omega = p.rho.node_weights(&grid);
    let alphas = p.alpha_grid();
    let aux = check_aux(p, &grid)?;
    let a = p.offset();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let mut layout = LpLayout {
        n,
        nodes: grid.len(),
        u: Vec::with_capacity(grid.len()),
        g: Vec::with_capacity(grid.len() * n),
        q: Vec::new(),
        alphas: alphas.clone(),
        s: Vec::with_capacity(aux),
        s_rows: Vec::with_capacity(aux),
        dom_rows: Vec::new(),
        pairs: Vec::new(),
    };
    for x in 0..grid.len() {
        let fixed = x == 0;
        layout.u.push(lp.add_var(0.0, if fixed { 0.0 } else { f64::INFINITY }, -omega[x]));
    }
    for x in 0..grid.len() {
        for i in 0..n {
            layout.g.push(lp.add_var(0.0, p.g_upper(), omega[x] * (nodes[x][i] + a)));
        }
    }
    if let ObjectiveKind::QuadraticMonopolist { pieces, .. } = p.kind {
        let tangents = quadratic_tangents(p.g_upper(), pieces);
        for x in 0..grid.len() {
            for i in 0..n {
                let q = lp.add_var(0.0, f64::INFINITY, -omega[x]);
                layout.q.push(q);
                for &(slope, icpt) in &tangents {
                    // q ≥ slope·g + icpt
                    lp.add_row(vec![(q, 1.0), (layout.g[x * n + i], -slope)], RowSense::Ge, icpt);
                }
            }
        }
    }
    match p.encoding {
        ConvexityEncoding::ExactPairwise => {
            for &(x, y) in &pairs {
                lp.rows.push(supporting_row(&grid, &nodes, &layout, x, y));
            }
            layout.pairs = pairs;
        }
        ConvexityEncoding::AxisStencil => {
            let mut stencil_pairs = Vec::new();
            for x in 0..grid.len() {
                for s in neighbor_steps(n) {
                    if let Some(y) = shift(&grid, x, &s) {
                        stencil_pairs.push((x, y));
                    }
                }
            }
            for &(x, y) in &stencil_pairs {
                lp.rows.push(supporting_row(&grid, &nodes, &layout, x, y));
            }
            layout.pairs = stencil_pairs;
            let half: Vec<Vec<i64>> = neighbor_steps(n).into_iter().filter(|s| s.iter().find(|&&v| v != 0) == Some(&1)).collect();
            for x in 0..grid.len() {
                for s in &half {
                    let back: Vec<i64> = s.iter().map(|v| -v).collect();
                    if let (Some(f), Some(b)) = (shift(&grid, x, s), shift(&grid, x, &back)) {
                        lp.add_row(vec![(layout.u[f], 1.0), (layout.u[b], 1.0), (layout.u[x], -2.0)], RowSense::Ge, 0.0);
                    }
                }
            }
        }
    }
    if !alphas.is_empty() {
        let na = alphas.len();
        for x in 0..grid.len() {
            for i in 0..n {
                for &alpha in &alphas {
                    let s = lp.add_var(0.0, f64::INFINITY, 0.0);
                    layout.s.push(s);
                    // s − g ≥ −α
                    layout.s_rows.push(lp.add_row(vec![(s, 1.0), (layout.g[x * n + i], -1.0)], RowSense::Ge, -alpha));
                }
            }
        }
        for i in 0..n {
            for (ai, &alpha) in alphas.iter().enumerate() {
                let coeffs = (0..grid.len()).map(|x| (layout.s[(x * n + i) * na + ai], omega[x])).collect();
                layout.dom_rows.push(lp.add_row(coeffs, RowSense::Le, xi_power_stop_loss(p.m, alpha)));
            }
        }
    }
    Ok((lp, layout))
}

/// Largest number of supporting-plane rows built explicitly.
pub const PAIR_BUDGET: usize = 2_000_000;

/// The full LP, with every ordered pair under the exact encoding.
pub fn build_lp(p: &PrimalProblem) -> Result<(LinearProgram, LpLayout)> {
    p.validate()?;
    let grid = p.grid()?;
    let pairs = grid.len() * (grid.len() - 1);
    if pairs > PAIR_BUDGET {
        return Err(Error::ProblemSize(format!(
            "{} nodes need {pairs} supporting-plane rows, above {PAIR_BUDGET}; use the stencil encoding or solve_reduced",
            grid.len()
        )));
    }
    check_aux(p, &grid)?;
    let all = (0..grid.len()).flat_map(|x| (0..grid.len()).filter(move |&y| y != x).map(move |y| (x, y))).collect();
    assemble(p, all)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedSolution {
    pub problem: PrimalProblem,
    pub utility: UtilityGrid,
    /// `m · Σ (⟨x,g⟩ − u − φ(g)) ρw`.
    pub value: f64,
    pub layout: LpLayout,
    pub lp_solution: LpSolution,
    /// Rounds of pair generation (1 when the full LP was solved).
    pub rounds: usize,
    /// Largest supporting-plane violation over all ordered pairs.
    pub convexity_residual: f64,
    /// `min_x ⟨x,g⟩ − u − φ(g)` over the nodes.
    pub ae_lip_min: f64,
    /// True for the axis-stencil relaxation.
    pub relaxed: bool,
}

/// Worst supporting-plane violation per source node: `(y, violation)`.
fn worst_pairs(grid: &Grid, nodes: &[Vec<f64>], u: &[f64], g: &VectorField) -> Vec<(usize, f64)> {
    use rayon::prelude::*;
    (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let gx = g.at(x);
            let base: f64 = u[x] - gx.iter().zip(&nodes[x]).map(|(a, b)| a * b).sum::<f64>();
            let mut best = (x, 0.0);
            for (y, ny) in nodes.iter().enumerate() {
                let v = base + gx.iter().zip(ny).map(|(a, b)| a * b).sum::<f64>() - u[y];
                if v > best.1 {
                    best = (y, v);
                }
            }
            best
        })
        .collect()
}

const CUT_TOL: f64 = 1e-9;
/// Problems up to this many ordered pairs are solved in one shot.
const FULL_PAIR_LIMIT: usize = 20_000;

struct CutRun {
    sol: LpSolution,
    u: Vec<f64>,
    g: VectorField,
    layout: LpLayout,
    rounds: usize,
}

/// Solve, adding violated supporting-plane rows until none remain when
/// `lazy` is set.
fn run_with_cuts(grid: &Grid, lp: LinearProgram, mut layout: LpLayout, lazy: bool, cfg: &LpConfig, stage: &str) -> Result<CutRun> {
    let nodes: Vec<Vec<f64>> = grid.nodes().collect();
    let n = grid.dim();
    let mut session = LpSession::new(lp, cfg.clone())?;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let sol = session.solve()?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Stalled => return Err(Error::Stalled { stage: stage.into() }),
            other => return Err(Error::UnexpectedStatus { stage: stage.into(), status: format!("{other:?}") }),
        }
        let u: Vec<f64> = layout.u.iter().map(|&j| sol.primal[j]).collect();
        let g = VectorField { dim: n, data: layout.g.iter().map(|&j| sol.primal[j]).collect() };
        let cuts: Vec<(usize, usize)> = if lazy {
            worst_pairs(grid, &nodes, &u, &g)
                .into_iter()
                .enumerate()
                .filter(|(_, (_, v))| *v > CUT_TOL)
                .map(|(x, (y, _))| (x, y))
                .collect()
        } else {
            Vec::new()
        };
        if cuts.is_empty() {
            return Ok(CutRun { sol, u, g, layout, rounds });
        }
        let rows = cuts.iter().map(|&(x, y)| supporting_row(grid, &nodes, &layout, x, y)).collect();
        session.add_rows(rows)?;
        layout.pairs.extend(cuts);
    }
}

fn initial_model(p: &PrimalProblem, grid: &Grid) -> Result<(LinearProgram, LpLayout, bool)> {
    let lazy = p.encoding == ConvexityEncoding::ExactPairwise && grid.len() * (grid.len() - 1) > FULL_PAIR_LIMIT;
    let (lp, layout) = if lazy {
        assemble(p, seed_pairs(grid))?
    } else {
        match p.encoding {
            ConvexityEncoding::ExactPairwise => build_lp(p)?,
            ConvexityEncoding::AxisStencil => assemble(p, Vec::new())?,
        }
    };
    Ok((lp, layout, lazy))
}

/// `sup Σ ⟨gcoef_x, g_x⟩ − ucoef_x u_x` over convex increasing nodal
/// utilities with `u(0) = 0`, `g ∈ [0,1]^n` (exact pairwise encoding).
pub(crate) fn cone_sup(grid: &Grid, gcoef: &[f64], ucoef: &[f64], cfg: &LpConfig) -> Result<(f64, UtilityGrid)> {
    let mut p = PrimalProblem::auction(grid.dim(), 1, DistributionSpec::uniform(grid.dim()), grid.k());
    p.lp = cfg.clone();
    let (mut lp, layout, lazy) = initial_model(&p, grid)?;
    for (x, &j) in layout.u.iter().enumerate() {
        lp.vars[j].cost = -ucoef[x];
    }
    for (idx, &j) in layout.g.iter().enumerate() {
        lp.vars[j].cost = gcoef[idx];
    }
    let run = run_with_cuts(grid, lp, layout, lazy, cfg, "separation")?;
    Ok((run.sol.objective, UtilityGrid { grid: grid.clone(), u: run.u, g: Some(run.g) }))
}

pub fn solve_reduced(p: &PrimalProblem) -> Result<ReducedSolution> {
    p.validate()?;
    let grid = p.grid()?;
    check_aux(p, &grid)?;
    let nodes: Vec<Vec<f64>> = grid.nodes().collect();
    let (lp, layout, lazy) = initial_model(p, &grid)?;
    let CutRun { sol, u, g, layout, rounds } = run_with_cuts(&grid, lp, layout, lazy, &p.lp, "reduced primal")?;
    let omega = p.rho.node_weights(&grid);
    let a = p.offset();
    let phi: Vec<f64> = (0..grid.len())
        .map(|x| layout.q.get(x * p.n..(x + 1) * p.n).map_or(0.0, |q| q.iter().map(|&j| sol.primal[j]).sum()))
        .collect();
    let surplus: Vec<f64> = (0..grid.len())
        .map(|x| g.at(x).iter().zip(&nodes[x]).map(|(gi, xi)| gi * (xi + a)).sum::<f64>() - u[x] - phi[x])
        .collect();
    let value = p.m as f64 * surplus.iter().zip(&omega).map(|(s, w)| s * w).sum::<f64>();
    let unscaled = sol.objective;
    if (value / p.m as f64 - unscaled).abs() > 1e-8 * (1.0 + unscaled.abs()) {
        return Err(Error::Invariant(format!("objective recomputation {value} disagrees with LP {unscaled}")));
    }
    let ae_lip_min = surplus.iter().cloned().fold(f64::INFINITY, f64::min);
    if ae_lip_min < -1e-6 {
        return Err(Error::Invariant(format!("pointwise surplus bound violated: {ae_lip_min}")));
    }
    let convexity_residual = worst_pairs(&grid, &nodes, &u, &g).iter().map(|w| w.1).fold(0.0, f64::max);
    let utility = UtilityGrid { grid, u, g: Some(g) };
    Ok(ReducedSolution {
        problem: p.clone(),
        utility,
        value,
        layout,
        lp_solution: sol,
        rounds,
        convexity_residual,
        ae_lip_min,
        relaxed: p.encoding == ConvexityEncoding::AxisStencil,
    })
}

#[cfg(test)]
mod tests;

/// Per axis, `max_α SL_{g_i}(α) − SL_{ξ^{m−1}}(α)` over a fine α-grid
/// together with the support of the gradient law (positive = violation).
pub fn dominance_residuals(u: &UtilityGrid, rho: &DistributionSpec, m: usize) -> Vec<f64> {
    use crate::orders::{law_of_gradient, stop_loss};
    (0..u.grid.dim())
        .map(|axis| {
            let law = law_of_gradient(u, axis, rho);
            let mut alphas: Vec<f64> = (0..=2000).map(|j| j as f64 / 2000.0).collect();
            alphas.extend_from_slice(law.support());
            alphas
                .iter()
                .map(|&a| stop_loss(&law, a) - xi_power_stop_loss(m, a))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}
