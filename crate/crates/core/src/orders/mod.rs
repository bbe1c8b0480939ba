//! Dominance orders: the increasing convex order on the line (checked
//! exactly through stop-loss transforms) and its multivariate counterpart,
//! decided by searching for a (sub)martingale coupling.

use serde::{Deserialize, Serialize};

use crate::density::DistributionSpec;
use crate::error::{Error, Result};
use crate::grid::{discrete_gradient, Grid, GridMeasure, UtilityGrid};
use crate::lp::{self, LinearProgram, LpConfig, LpStatus, RowSense, Sense};
use crate::plan::{l1, TransportPlan};

/// Finite law on the line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution1D {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl Distribution1D {
    /// Sorts, merges coincident points and drops zero masses. Weights must be
    /// nonnegative and sum to 1 within 1e-10.
    pub fn new(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = points.into_iter().collect();
        if pts.iter().any(|(x, p)| !x.is_finite() || !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("law needs finite points and nonnegative weights".into()));
        }
        let total: f64 = pts.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support = Vec::with_capacity(pts.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pts.len());
        for (x, p) in pts {
            if p == 0.0 {
                continue;
            }
            match support.last() {
                Some(&last) if x == last => *probs.last_mut().unwrap() += p,
                _ => {
                    support.push(x);
                    probs.push(p);
                }
            }
        }
        Ok(Self { support, probs })
    }

    pub fn dirac(x: f64) -> Self {
        Self { support: vec![x], probs: vec![1.0] }
    }

    /// Law of `ξ^{m−1}` for `ξ` uniform, discretized by the trapezoid rule on
    /// `points` equispaced values of `ξ`.
    pub fn xi_power(m: usize, points: usize) -> Self {
        assert!(m >= 1 && points >= 2);
        let h = 1.0 / (points - 1) as f64;
        Self::new((0..points).map(|j| {
            let w = if j == 0 || j == points - 1 { h / 2.0 } else { h };
            ((j as f64 * h).powi(m as i32 - 1), w)
        }))
        .expect("trapezoid weights sum to 1")
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }
}

/// `E(Z − α)₊`.
pub fn stop_loss(d: &Distribution1D, alpha: f64) -> f64 {
    d.support.iter().zip(&d.probs).map(|(x, p)| p * (x - alpha).max(0.0)).sum()
}

/// Stop-loss transform of the continuous law of `ξ^{m−1}`, `ξ` uniform:
/// `1/m − α + ((m−1)/m) α^{m/(m−1)}` on `[0,1]`.
pub fn xi_power_stop_loss(m: usize, alpha: f64) -> f64 {
    let mf = m as f64;
    if alpha <= 0.0 {
        return 1.0 / mf - alpha;
    }
    if m == 1 {
        return (1.0 - alpha).max(0.0);
    }
    if alpha >= 1.0 {
        return 0.0;
    }
    1.0 / mf - alpha + (mf - 1.0) / mf * alpha.powf(mf / (mf - 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcxCheck {
    pub dominated: bool,
    /// `max_α (SL_a(α) − SL_b(α))`, clipped at 0.
    pub max_violation: f64,
    pub worst_alpha: f64,
}

/// Whether `a ⪯_icx b`: `SL_a ≤ SL_b + tol` at every support point of
/// either law and at 0. Both transforms are piecewise linear with kinks only
/// at support points and coincide in slope beyond the largest one, so these
/// checks are exhaustive.
pub fn dominated_icx_1d(a: &Distribution1D, b: &Distribution1D, tol: f64) -> IcxCheck {
    let mut worst = (0.0, 0.0);
    for &alpha in a.support.iter().chain(&b.support).chain(std::iter::once(&0.0)) {
        let v = stop_loss(a, alpha) - stop_loss(b, alpha);
        if v > worst.0 {
            worst = (v, alpha);
        }
    }
    IcxCheck { dominated: worst.0 <= tol, max_violation: worst.0, worst_alpha: worst.1 }
}

/// Pushforward of the grid probability weights of `rho` under the `axis`
/// component of the subgradient of `u`.
pub fn law_of_gradient(u: &UtilityGrid, axis: usize, rho: &DistributionSpec) -> Distribution1D {
    let g = discrete_gradient(u);
    let w = rho.node_weights(&u.grid);
    // Round off solver noise so equal allocations collapse to one atom.
    let snap = |v: f64| (v * 1e12).round() / 1e12;
    Distribution1D::new((0..u.grid.len()).map(|i| (snap(g.at(i)[axis]), w[i]))).expect("weights are a probability")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// `E(Y | X) = X`.
    Martingale,
    /// `E(Y | X) ≥ X` componentwise.
    Submartingale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingWitness {
    pub plan: TransportPlan,
    pub mode: CouplingMode,
}

impl CouplingWitness {
    /// Largest violation of the marginal and barycenter conditions against
    /// the dominated measure `a` and the dominating measure `b`.
    pub fn max_violation(&self, a: &GridMeasure, b: &GridMeasure) -> f64 {
        let grid = &self.plan.grid;
        let (ra, rb) = (a.merge_node_atoms(), b.merge_node_atoms());
        let src = self.plan.source_marginal();
        let dst = self.plan.target_marginal();
        let mut worst: f64 = 0.0;
        for i in 0..grid.len() {
            worst = worst.max((src.density[i] - ra.density[i]).abs()).max((dst.density[i] - rb.density[i]).abs());
        }
        let mut bary = vec![vec![0.0; grid.dim()]; grid.len()];
        for &(i, j, m) in &self.plan.entries {
            let (x, y) = (grid.node(i), grid.node(j));
            for d in 0..grid.dim() {
                bary[i][d] += m * (y[d] - x[d]);
            }
        }
        for drift in bary.iter().flatten() {
            let v = match self.mode {
                CouplingMode::Martingale => drift.abs(),
                CouplingMode::Submartingale => -drift,
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Convex increasing function `F(z) = max_x (f_x + ⟨ζ_x, z − x⟩)` over
/// anchor nodes, separating two measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatingFunction {
    pub grid: Grid,
    pub anchors: Vec<usize>,
    pub values: Vec<f64>,
    pub slopes: Vec<Vec<f64>>,
    /// `∫F da − ∫F db > 0`.
    pub gap: f64,
}

impl SeparatingFunction {
    pub fn eval(&self, z: &[f64]) -> f64 {
        self.anchors
            .iter()
            .zip(&self.values)
            .zip(&self.slopes)
            .map(|((&i, f), s)| {
                let x = self.grid.node(i);
                f + s.iter().zip(z.iter().zip(&x)).map(|(s, (z, x))| s * (z - x)).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DominanceOutcome {
    Witness(CouplingWitness),
    Separated(SeparatingFunction),
}

fn support_masses(m: &GridMeasure) -> Result<Vec<(usize, f64)>> {
    let merged = m.merge_node_atoms();
    if !merged.atoms.is_empty() {
        return Err(Error::Unsupported("dominance checks need atoms on lattice points".into()));
    }
    if merged.density.iter().any(|&v| v < -1e-12) {
        return Err(Error::InvalidArgument("dominance checks need nonnegative measures".into()));
    }
    Ok(merged.density.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, &v)| (i, v)).collect())
}

/// Searches for a coupling of `a` (dominated) and `b` (dominating) whose
/// conditional barycenters satisfy `mode`. The cheapest coupling in `ℓ¹`
/// is returned, so equal inputs yield the diagonal plan. When none exists,
/// returns a convex increasing function with `∫F da > ∫F db` (convex only,
/// not necessarily increasing, in martingale mode).
pub fn dominance_witness_nd(
    a: &GridMeasure,
    b: &GridMeasure,
    mode: CouplingMode,
    cfg: &LpConfig,
) -> Result<DominanceOutcome> {
    if a.grid != b.grid {
        return Err(Error::InvalidArgument("measures live on different grids".into()));
    }
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if (ma - mb).abs() > 1e-8 * (1.0 + ma.abs()) {
        return Err(Error::InvalidArgument(format!("mass mismatch {ma} vs {mb}")));
    }
    let grid = &a.grid;
    let sa = support_masses(a)?;
    let sb = support_masses(b)?;
    // Rescale b so that both sides carry identical mass.
    let scale = if mb > 0.0 { ma / mb } else { 1.0 };
    let nodes: Vec<Vec<f64>> = grid.nodes().collect();

    let mut lp = LinearProgram::new(Sense::Minimize);
    let mut var = Vec::with_capacity(sa.len() * sb.len());
    for &(i, _) in &sa {
        for &(j, _) in &sb {
            var.push(lp.add_var(0.0, f64::INFINITY, l1(&nodes[i], &nodes[j])));
        }
    }
    let nb = sb.len();
    for (r, &(_, mass)) in sa.iter().enumerate() {
        lp.add_row((0..nb).map(|c| (var[r * nb + c], 1.0)).collect(), RowSense::Eq, mass);
    }
    for (c, &(_, mass)) in sb.iter().enumerate() {
        lp.add_row((0..sa.len()).map(|r| (var[r * nb + c], 1.0)).collect(), RowSense::Eq, mass * scale);
    }
    let sense = match mode {
        CouplingMode::Martingale => RowSense::Eq,
        CouplingMode::Submartingale => RowSense::Ge,
    };
    for (r, &(i, _)) in sa.iter().enumerate() {
        for d in 0..grid.dim() {
            let coeffs = sb
                .iter()
                .enumerate()
                .map(|(c, &(j, _))| (var[r * nb + c], nodes[j][d] - nodes[i][d]))
                .filter(|&(_, v)| v != 0.0)
                .collect();
            lp.add_row(coeffs, sense, 0.0);
        }
    }
    let sol = lp::solve(&lp, cfg)?;
    match sol.status {
        LpStatus::Optimal => {
            let entries = sa
                .iter()
                .enumerate()
                .flat_map(|(r, &(i, _))| sb.iter().enumerate().map(move |(c, &(j, _))| (r, c, i, j)))
                .map(|(r, c, i, j)| (i, j, sol.primal[var[r * nb + c]].max(0.0)));
            let plan = TransportPlan::from_entries(grid.clone(), entries, 0.0);
            Ok(DominanceOutcome::Witness(CouplingWitness { plan, mode }))
        }
        LpStatus::Infeasible => separate(grid, &sa, &sb, scale, mode, cfg).map(DominanceOutcome::Separated),
        LpStatus::Stalled => Err(Error::Stalled { stage: "dominance coupling".into() }),
        LpStatus::Unbounded => Err(Error::UnexpectedStatus { stage: "dominance coupling".into(), status: "unbounded".into() }),
    }
}

/// Normalized separation LP: maximize `∫F da − ∫F db` over convex
/// (increasing in submartingale mode) `F` with values in `[−1, 1]` on the
/// union of supports.
fn separate(
    grid: &Grid,
    sa: &[(usize, f64)],
    sb: &[(usize, f64)],
    scale: f64,
    mode: CouplingMode,
    cfg: &LpConfig,
) -> Result<SeparatingFunction> {
    let mut anchors: Vec<usize> = sa.iter().chain(sb).map(|p| p.0).collect();
    anchors.sort_unstable();
    anchors.dedup();
    let pos = |i: usize| anchors.binary_search(&i).unwrap();
    let nodes: Vec<Vec<f64>> = anchors.iter().map(|&i| grid.node(i)).collect();
    let n = grid.dim();
    let slope_lo = match mode {
        CouplingMode::Submartingale => 0.0,
        CouplingMode::Martingale => -4.0 / grid.h(),
    };
    let mut lp = LinearProgram::new(Sense::Maximize);
    let f: Vec<usize> = anchors.iter().map(|_| lp.add_var(-1.0, 1.0, 0.0)).collect();
    let z: Vec<usize> = (0..anchors.len() * n).map(|_| lp.add_var(slope_lo, 4.0 / grid.h(), 0.0)).collect();
    for &(i, m) in sa {
        lp.vars[f[pos(i)]].cost += m;
    }
    for &(j, m) in sb {
        lp.vars[f[pos(j)]].cost -= m * scale;
    }
    for x in 0..anchors.len() {
        for y in 0..anchors.len() {
            if x == y {
                continue;
            }
            // f_y ≥ f_x + ⟨ζ_x, y − x⟩
            let mut coeffs = vec![(f[y], 1.0), (f[x], -1.0)];
            for d in 0..n {
                let step = nodes[y][d] - nodes[x][d];
                if step != 0.0 {
                    coeffs.push((z[x * n + d], -step));
                }
            }
            lp.add_row(coeffs, RowSense::Ge, 0.0);
        }
    }
    let sol = lp::solve(&lp, cfg)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::UnexpectedStatus { stage: "dominance separation".into(), status: format!("{:?}", sol.status) });
    }
    Ok(SeparatingFunction {
        grid: grid.clone(),
        values: f.iter().map(|&v| sol.primal[v]).collect(),
        slopes: (0..anchors.len()).map(|x| (0..n).map(|d| sol.primal[z[x * n + d]]).collect()).collect(),
        anchors,
        gap: sol.objective,
    })
}
