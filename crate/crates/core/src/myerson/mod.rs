//! Exact single-item auctions: virtual valuations, ironing in quantile
//! space, the optimal reduced utility and its dual certificate.

use serde::{Deserialize, Serialize};

use crate::density::{Density1d, DistributionSpec};
use crate::error::{Error, Result};
use crate::grid::{FlowField, Grid, UtilityGrid, VectorField};
use crate::orders::xi_power_stop_loss;
use crate::pwl::ConvexPwl;
use crate::quadrature::Composite;

const BISECTION_TOL: f64 = 1e-10;

fn marginal(rho: &DistributionSpec) -> Result<Density1d> {
    if rho.dim() != 1 {
        return Err(Error::InvalidArgument(format!("single-item routines need n = 1, got n = {}", rho.dim())));
    }
    rho.validate()?;
    rho.marginal(0).ok_or_else(|| Error::Unsupported("density has no 1D marginal".into()))
}

/// `V(x) = x − (1 − 𝒫(x))/ρ(x)`.
pub fn virtual_valuation(d: &Density1d, x: f64) -> f64 {
    x - (1.0 - d.cdf(x)) / d.pdf(x)
}

/// Revenue curve in quantile space, `h(q) = 𝒫⁻¹(q)(1 − q)`; `h′ = −V`.
fn revenue_curve(d: &Density1d, q: f64) -> f64 {
    d.quantile(q) * (1.0 - q)
}

/// Bisection for the last point of `[lo, hi]` where `pred` is false,
/// assuming `pred` is monotone (false then true).
fn bisect(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// An ironed interval `[a, b]` (in types) on which `V̄` is constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bridge {
    pub a: f64,
    pub b: f64,
    pub value: f64,
}

/// Ironed virtual valuation `V̄ = −G′(𝒫)`, with `G` the least nonincreasing
/// concave majorant of the revenue curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IronedValuation {
    pub density: Density1d,
    /// Interior intervals where the envelope bridges over the revenue curve.
    pub bridges: Vec<Bridge>,
    /// Quantile of the revenue curve's maximum; `G` is constant before it.
    pub q_star: f64,
    pub g_max: f64,
    /// `sup{x : V̄(x) ≤ 0}`.
    pub x0: f64,
}

impl IronedValuation {
    /// `V̄` before clipping at zero: the bridge value or `V`.
    fn raw(&self, x: f64) -> f64 {
        match self.bridges.iter().find(|br| x > br.a && x < br.b) {
            Some(br) => br.value,
            None => virtual_valuation(&self.density, x),
        }
    }

    pub fn vbar(&self, x: f64) -> f64 {
        if self.density.cdf(x) <= self.q_star {
            return 0.0;
        }
        self.raw(x).max(0.0)
    }

    pub fn is_regular(&self) -> bool {
        self.bridges.is_empty()
    }

    /// The envelope `G(q)`.
    pub fn envelope(&self, q: f64) -> f64 {
        if q <= self.q_star {
            return self.g_max;
        }
        for br in &self.bridges {
            let (qa, qb) = (self.density.cdf(br.a), self.density.cdf(br.b));
            if q > qa && q < qb {
                let (ha, hb) = (revenue_curve(&self.density, qa), revenue_curve(&self.density, qb));
                return ha + (hb - ha) * (q - qa) / (qb - qa);
            }
        }
        revenue_curve(&self.density, q)
    }

    /// Maximal intervals where `V̄` is constant: `[0, x₀]` and the bridges
    /// above it.
    pub fn flat_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, self.x0)];
        out.extend(self.bridges.iter().filter(|br| br.b > self.x0 + BISECTION_TOL).map(|br| (br.a.max(self.x0), br.b)));
        out
    }

    /// ρ-mass of `{V̄ = 0}` beyond the no-sale region `[0, x₀]` together
    /// with its part inside: where the unclipped envelope slope vanishes.
    pub fn tie_mass(&self, samples: usize) -> f64 {
        let rule = Composite::new(4, samples);
        rule.integrate(0.0, 1.0, &self.breakpoints(), |x| {
            if self.density.cdf(x) > self.q_star && self.raw(x).abs() <= 1e-12 {
                self.density.pdf(x)
            } else {
                0.0
            }
        })
    }

    /// Points where `V̄` or the density may kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.density.breakpoints();
        b.push(self.x0);
        for br in &self.bridges {
            b.push(br.a);
            b.push(br.b);
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

/// Upper concave hull of `(q_j, h_j)` (indices of hull vertices).
fn upper_hull(q: &[f64], h: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(q.len());
    for j in 0..q.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // Drop b when it lies on or below the chord a → j.
            let cross = (q[b] - q[a]) * (h[j] - h[a]) - (h[b] - h[a]) * (q[j] - q[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    hull
}

/// Irons `ρ` from `resolution` equispaced quantile samples, with bridge
/// endpoints then refined to tangency.
pub fn iron(rho: &DistributionSpec, resolution: usize) -> Result<IronedValuation> {
    if resolution < 3 {
        return Err(Error::InvalidArgument("ironing needs at least 3 samples".into()));
    }
    let d = marginal(rho)?;
    let qs: Vec<f64> = (0..resolution).map(|j| j as f64 / (resolution - 1) as f64).collect();
    let hs: Vec<f64> = qs.iter().map(|&q| revenue_curve(&d, q)).collect();
    let hull = upper_hull(&qs, &hs);
    let top = hull.iter().cloned().max_by(|&a, &b| hs[a].total_cmp(&hs[b])).unwrap();
    let vv = |x: f64| virtual_valuation(&d, x);

    // Refine the maximum: V changes sign next to the top sample.
    let (lo, hi) = (d.quantile(qs[top.saturating_sub(1)]), d.quantile(qs[(top + 1).min(resolution - 1)]));
    let x_top = if vv(lo) <= 0.0 && vv(hi) > 0.0 { bisect(lo, hi, |x| vv(x) > 0.0) } else { d.quantile(qs[top]) };
    let q_star = d.cdf(x_top);
    let g_max = revenue_curve(&d, q_star).max(hs[top]);

    let mut bridges = Vec::new();
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 2 || a < top {
            continue;
        }
        let slope = (hs[b] - hs[a]) / (qs[b] - qs[a]);
        let dip = (a + 1..b).map(|j| hs[a] + slope * (qs[j] - qs[a]) - hs[j]).fold(0.0, f64::max);
        if dip <= 1e-12 {
            continue;
        }
        bridges.push(refine_bridge(&d, &qs, a, b));
    }
    let mut iv = IronedValuation { density: d, bridges, q_star, g_max, x0: 0.0 };
    iv.x0 = bisect(0.0, 1.0, |x| iv.vbar(x) > 0.0);
    Ok(iv)
}

/// Moves sampled bridge endpoints to the points where `V` equals minus the
/// chord slope, which is where the true envelope leaves the curve.
fn refine_bridge(d: &Density1d, qs: &[f64], a: usize, b: usize) -> Bridge {
    let n = qs.len();
    let vv = |x: f64| virtual_valuation(d, x);
    let h = |x: f64| x * (1.0 - d.cdf(x));
    let (mut xa, mut xb) = (d.quantile(qs[a]), d.quantile(qs[b]));
    let bracket_a = (d.quantile(qs[a.saturating_sub(1)]), d.quantile(qs[(a + 1).min(n - 1)]));
    let bracket_b = (d.quantile(qs[b.saturating_sub(1)]), d.quantile(qs[(b + 1).min(n - 1)]));
    for _ in 0..60 {
        let s = (h(xb) - h(xa)) / (d.cdf(xb) - d.cdf(xa));
        let target = -s;
        let solve = |(lo, hi): (f64, f64), cur: f64| {
            if (vv(lo) - target) * (vv(hi) - target) < 0.0 {
                bisect(lo, hi, |x| vv(x) > target)
            } else {
                cur
            }
        };
        let (na, nb) = (solve(bracket_a, xa), solve(bracket_b, xb));
        let moved = (na - xa).abs() + (nb - xb).abs();
        xa = na;
        xb = nb;
        if moved < 1e-13 {
            break;
        }
    }
    let value = -(h(xb) - h(xa)) / (d.cdf(xb) - d.cdf(xa));
    Bridge { a: xa, b: xb, value }
}

/// The optimal reduced allocation `u′` for `m` bidders: zero up to `x₀`,
/// `𝒫^{m−1}` where `V̄` increases and the ρ-conditional mean of `𝒫^{m−1}`
/// on each ironed interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation1d {
    pub ironed: IronedValuation,
    pub m: usize,
}

impl Allocation1d {
    pub fn derivative(&self, x: f64) -> f64 {
        let iv = &self.ironed;
        if x <= iv.x0 || iv.vbar(x) <= 0.0 {
            return 0.0;
        }
        let p = |t: f64| iv.density.cdf(t);
        let m = self.m as i32;
        for br in &iv.bridges {
            if x > br.a && x < br.b {
                let (pa, pb) = (p(br.a), p(br.b));
                return (pb.powi(m) - pa.powi(m)) / (self.m as f64 * (pb - pa));
            }
        }
        p(x).powi(m - 1)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.ironed.breakpoints()
    }

    /// `u(x) = ∫₀ˣ u′`.
    pub fn utility(&self, x: f64) -> f64 {
        let rule = Composite::new(10, 1);
        rule.integrate(0.0, x, &self.breakpoints(), |t| self.derivative(t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MyersonSolution {
    pub allocation: Allocation1d,
    pub x0: f64,
    /// `m ∫ (x u′ − u) ρ`.
    pub revenue: f64,
    /// `m ∫ u′ V̄ ρ`, equal to `revenue`.
    pub revenue_vbar: f64,
    pub tie_mass: f64,
}

pub const DEFAULT_IRON_RESOLUTION: usize = 4097;

/// Exact optimal single-item auction for `m` symmetric bidders.
pub fn solve_1item(rho: &DistributionSpec, m: usize) -> Result<MyersonSolution> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one bidder".into()));
    }
    let ironed = iron(rho, DEFAULT_IRON_RESOLUTION)?;
    let alloc = Allocation1d { ironed, m };
    let iv = &alloc.ironed;
    let d = &iv.density;
    let breaks = alloc.breakpoints();
    // u is accumulated panel by panel so the nested integral stays cheap.
    let rule = Composite::new(10, 1);
    let mut revenue = 0.0;
    let mut u_left = 0.0;
    let mut pts = breaks.clone();
    pts.sort_by(f64::total_cmp);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        revenue += rule.integrate(a, b, &[], |x| {
            let u = u_left + rule.integrate(a, x, &[], |t| alloc.derivative(t));
            (x * alloc.derivative(x) - u) * d.pdf(x)
        });
        u_left += rule.integrate(a, b, &[], |t| alloc.derivative(t));
    }
    let revenue_vbar = rule.integrate(0.0, 1.0, &breaks, |x| alloc.derivative(x) * iv.vbar(x) * d.pdf(x));
    let mf = m as f64;
    let (revenue, revenue_vbar) = (mf * revenue, mf * revenue_vbar);
    if (revenue - revenue_vbar).abs() > 1e-8 * (1.0 + revenue.abs()) {
        return Err(Error::Invariant(format!("revenue forms disagree: {revenue} vs {revenue_vbar}")));
    }
    let tie_mass = iv.tie_mass(256);
    Ok(MyersonSolution { x0: iv.x0, revenue, revenue_vbar, tie_mass, allocation: alloc })
}

pub fn optimal_revenue_1item(rho: &DistributionSpec, m: usize) -> Result<f64> {
    Ok(solve_1item(rho, m)?.revenue)
}

/// Optimal utility sampled on a `k`-point grid, with `g = u′`.
pub fn optimal_utility_1d(rho: &DistributionSpec, m: usize, k: usize) -> Result<UtilityGrid> {
    let sol = solve_1item(rho, m)?;
    let grid = Grid::new(1, k)?;
    let xs: Vec<f64> = (0..k).map(|i| grid.coord(i)).collect();
    let rule = Composite::new(10, 1);
    let breaks = sol.allocation.breakpoints();
    let mut u = Vec::with_capacity(k);
    let mut acc = 0.0;
    u.push(0.0);
    for w in xs.windows(2) {
        acc += rule.integrate(w[0], w[1], &breaks, |t| sol.allocation.derivative(t));
        u.push(acc);
    }
    let g = VectorField { dim: 1, data: xs.iter().map(|&x| sol.allocation.derivative(x)).collect() };
    Ok(UtilityGrid { grid, u, g: Some(g) })
}

/// Revenue of a second-price auction with reserve at the first zero of the
/// raw virtual valuation, ignoring ironing.
pub fn naive_threshold_revenue(rho: &DistributionSpec, m: usize) -> Result<f64> {
    let d = marginal(rho)?;
    let first = first_zero_of_v(&d);
    let rule = Composite::new(10, 64);
    let mut breaks = d.breakpoints();
    breaks.push(first);
    let v = rule.integrate(first, 1.0, &breaks, |x| {
        d.cdf(x).powi(m as i32 - 1) * virtual_valuation(&d, x) * d.pdf(x)
    });
    Ok(m as f64 * v)
}

fn first_zero_of_v(d: &Density1d) -> f64 {
    let n = 100_000;
    let mut prev = 0.0;
    for i in 1..=n {
        let x = i as f64 / n as f64;
        if virtual_valuation(d, x) > 0.0 {
            return bisect(prev, x, |t| virtual_valuation(d, t) > 0.0);
        }
        prev = x;
    }
    1.0
}

/// One-dimensional dual certificate: `φ` convex on `[0,1]` with
/// `V̄(x) ∈ ∂φ(u′(x))`, flow `c = V̄`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate1d {
    pub phi: ConvexPwl,
    pub flow: FlowField,
    /// `m (∫ φ*(V̄) ρ + ∫₀¹ φ(t^{m−1}) dt)`.
    pub dual_value: f64,
    pub primal: f64,
    pub gap: f64,
    /// `∫ φ*(V̄) ρ` and `∫₀¹ φ(t^{m−1}) dt` separately.
    pub conjugate_part: f64,
    pub phi_part: f64,
}

/// `∫₀¹ φ(t^{m−1}) dt` for `φ` finite on `[0,1]` with `φ(0) = 0`, exact via
/// stop-loss transforms of `ξ^{m−1}`.
pub fn integral_phi_xi_power(phi: &ConvexPwl, m: usize) -> f64 {
    let slopes = phi.slopes();
    let base = phi.eval(0.0);
    let mut total = base + slopes[0] * xi_power_stop_loss(m, phi.knots[0]);
    for j in 1..slopes.len() {
        total += (slopes[j] - slopes[j - 1]) * xi_power_stop_loss(m, phi.knots[j]);
    }
    total
}

pub fn dual_certificate_1d(rho: &DistributionSpec, m: usize, k: usize) -> Result<DualCertificate1d> {
    let sol = solve_1item(rho, m)?;
    let iv = &sol.allocation.ironed;
    let d = &iv.density;
    let grid = Grid::new(1, k)?;
    let p_m1 = |x: f64| d.cdf(x).powi(m as i32 - 1);

    let phi = if m == 1 {
        ConvexPwl::indicator(0.0, 1.0)
    } else {
        // Knots at 𝒫(x_j)^{m−1} for x_j = x₀ and the grid points above it,
        // slopes V̄ at the cell midpoints.
        let mut xs = vec![iv.x0];
        xs.extend((0..k).map(|i| grid.coord(i)).filter(|&x| x > iv.x0 + 1e-12));
        let mut knots = vec![0.0];
        let mut values = vec![0.0];
        let s0 = p_m1(iv.x0);
        if s0 > 0.0 {
            knots.push(s0);
            values.push(0.0);
        }
        let mut slope: f64 = 0.0;
        for w in xs.windows(2) {
            // V̄ is nondecreasing; the running max only absorbs rounding at
            // bridge ends.
            slope = slope.max(iv.vbar(0.5 * (w[0] + w[1])));
            let s_hi = p_m1(w[1]);
            let (last_s, last_v) = (*knots.last().unwrap(), *values.last().unwrap());
            if s_hi > last_s + 1e-13 {
                knots.push(s_hi);
                values.push(last_v + slope * (s_hi - last_s));
            }
        }
        ConvexPwl::new(knots, values, None, None)?
    };
    let phi_star = phi.conjugate();
    let mut breaks = iv.breakpoints();
    breaks.extend((0..k).map(|i| grid.coord(i)));
    breaks.extend((1..k).map(|i| 0.5 * (grid.coord(i - 1) + grid.coord(i))));
    let rule = Composite::new(4, 1);
    let conjugate_part = rule.integrate(0.0, 1.0, &breaks, |x| phi_star.eval(iv.vbar(x)) * d.pdf(x));
    let phi_part = integral_phi_xi_power(&phi, m);
    let dual_value = m as f64 * (conjugate_part + phi_part);
    let flow = FlowField {
        c: VectorField { dim: 1, data: (0..k).map(|i| iv.vbar(grid.coord(i))).collect() },
        grid,
        singular_mass: None,
    };
    Ok(DualCertificate1d { phi, flow, dual_value, primal: sol.revenue, gap: dual_value - sol.revenue, conjugate_part, phi_part })
}

#[cfg(test)]
mod tests;
