//! Unreduced mechanisms on profiles `(x₁,…,x_m)`: lifting reduced
//! solutions, the one-item second-price rule, and Monte Carlo checks.

mod monte_carlo;

pub use monte_carlo::{
    check_reduced_consistency, estimate_revenue, verify_ic_ir, ConsistencyReport, IcIrConfig, IcIrReport, RevenueEstimate,
};

use serde::{Deserialize, Serialize};

use crate::density::DistributionSpec;
use crate::error::{Error, Result};
use crate::grid::{discrete_gradient, UtilityGrid};
use crate::myerson::{iron, DEFAULT_IRON_RESOLUTION};

/// Allocation `P[i][j]` of item `i` to bidder `j` and transfers `T[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub allocation: Vec<Vec<f64>>,
    pub transfers: Vec<f64>,
}

impl Outcome {
    pub fn nothing(n: usize, m: usize) -> Self {
        Self { allocation: vec![vec![0.0; m]; n], transfers: vec![0.0; m] }
    }

    /// `⟨P_j, x_j⟩ − T_j`.
    pub fn utility(&self, profile: &[Vec<f64>], j: usize) -> f64 {
        self.allocation.iter().zip(&profile[j]).map(|(p, x)| p[j] * x).sum::<f64>() - self.transfers[j]
    }

    /// Largest `Σ_j P_{i,j} − 1` over items.
    pub fn overallocation(&self) -> f64 {
        self.allocation.iter().map(|p| p.iter().sum::<f64>() - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ArgmaxLift,
    SecondPrice1d,
    Custom,
}

/// A direct mechanism; evaluation is pure.
pub trait MechanismRule: Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn provenance(&self) -> Provenance;
    /// `profile[j]` is bidder `j`'s reported type.
    fn evaluate(&self, profile: &[Vec<f64>]) -> Outcome;
}

/// Gradients below this count as zero (no sale).
const ZERO_GRADIENT: f64 = 1e-9;
const THRESHOLD_STEPS: usize = 60;

/// Mechanism lifted from a reduced utility: item `i` goes to the bidder
/// with the largest `g_i(x_j)` among those with `g_i > 0`, ties split
/// equally; the winner pays the threshold value of `x_{j,i}` at which they
/// would still win. With one bidder the lift is `P = g`, `T = ⟨x,g⟩ − u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxLift {
    pub utility: UtilityGrid,
    pub m: usize,
}

pub fn lift_argmax(u: &UtilityGrid, m: usize) -> Result<ArgmaxLift> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one bidder".into()));
    }
    let g = discrete_gradient(u);
    Ok(ArgmaxLift { utility: UtilityGrid { grid: u.grid.clone(), u: u.u.clone(), g: Some(g) }, m })
}

impl ArgmaxLift {
    /// Interpolated `g_i` at `x`.
    pub fn gradient(&self, x: &[f64], i: usize) -> f64 {
        let g = self.utility.g.as_ref().expect("lift stores g");
        self.utility.grid.locate(x).iter().map(|&(idx, w)| w * g.at(idx)[i]).sum()
    }

    fn clamp(x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
    }
}

impl MechanismRule for ArgmaxLift {
    fn n(&self) -> usize {
        self.utility.grid.dim()
    }

    fn m(&self) -> usize {
        self.m
    }

    fn provenance(&self) -> Provenance {
        Provenance::ArgmaxLift
    }

    fn evaluate(&self, profile: &[Vec<f64>]) -> Outcome {
        let (n, m) = (self.n(), self.m);
        let types: Vec<Vec<f64>> = profile.iter().map(|x| Self::clamp(x)).collect();
        let mut out = Outcome::nothing(n, m);
        if m == 1 {
            let x = &types[0];
            let loc = self.utility.grid.locate(x);
            let mut pay = -loc.iter().map(|&(idx, w)| w * self.utility.u[idx]).sum::<f64>();
            for i in 0..n {
                let gi = self.gradient(x, i).clamp(0.0, 1.0);
                out.allocation[i][0] = gi;
                pay += gi * x[i];
            }
            out.transfers[0] = pay;
            return out;
        }
        for i in 0..n {
            let levels: Vec<f64> = types.iter().map(|x| self.gradient(x, i)).collect();
            let top = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if top <= ZERO_GRADIENT {
                continue;
            }
            let winners: Vec<usize> = (0..m).filter(|&j| levels[j] == top).collect();
            let share = 1.0 / winners.len() as f64;
            for &j in &winners {
                let rival = (0..m).filter(|&k| k != j).map(|k| levels[k]).fold(f64::NEG_INFINITY, f64::max);
                // g_i is nondecreasing in x_{j,i}: bisect for the lowest
                // winning report of coordinate i.
                let wins = |t: f64| {
                    let mut y = types[j].clone();
                    y[i] = t;
                    let v = self.gradient(&y, i);
                    v > ZERO_GRADIENT && v >= rival
                };
                let (mut lo, mut hi) = (0.0, types[j][i]);
                if wins(lo) {
                    hi = lo;
                }
                for _ in 0..THRESHOLD_STEPS {
                    if hi - lo <= 1e-15 {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if wins(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                out.allocation[i][j] = share;
                out.transfers[j] += share * hi;
            }
        }
        out
    }
}

/// One-item second price with reserve `x₀`: the highest type above `x₀`
/// wins and pays `max(x₀, highest rival)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondPrice {
    pub m: usize,
    pub reserve: f64,
}

pub fn second_price_1d(rho: &DistributionSpec, m: usize) -> Result<SecondPrice> {
    if rho.dim() != 1 || m == 0 {
        return Err(Error::InvalidArgument("second price needs one item and at least one bidder".into()));
    }
    let ironed = iron(rho, DEFAULT_IRON_RESOLUTION)?;
    if ironed.flat_intervals().len() > 1 {
        return Err(Error::Unsupported("ironed intervals above the reserve change the rule".into()));
    }
    Ok(SecondPrice { m, reserve: ironed.x0 })
}

impl MechanismRule for SecondPrice {
    fn n(&self) -> usize {
        1
    }

    fn m(&self) -> usize {
        self.m
    }

    fn provenance(&self) -> Provenance {
        Provenance::SecondPrice1d
    }

    fn evaluate(&self, profile: &[Vec<f64>]) -> Outcome {
        let x: Vec<f64> = profile.iter().map(|t| t[0]).collect();
        let mut out = Outcome::nothing(1, self.m);
        let top = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if top <= self.reserve {
            return out;
        }
        let winners: Vec<usize> = (0..self.m).filter(|&j| x[j] == top).collect();
        let share = 1.0 / winners.len() as f64;
        for &j in &winners {
            let rival = (0..self.m).filter(|&k| k != j).map(|k| x[k]).fold(self.reserve, f64::max);
            out.allocation[0][j] = share;
            out.transfers[j] = share * rival;
        }
        out
    }
}

/// Posted price per item for a single bidder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostedPrice {
    pub price: f64,
}

impl MechanismRule for PostedPrice {
    fn n(&self) -> usize {
        1
    }

    fn m(&self) -> usize {
        1
    }

    fn provenance(&self) -> Provenance {
        Provenance::Custom
    }

    fn evaluate(&self, profile: &[Vec<f64>]) -> Outcome {
        let mut out = Outcome::nothing(1, 1);
        if profile[0][0] > self.price {
            out.allocation[0][0] = 1.0;
            out.transfers[0] = self.price;
        }
        out
    }
}

/// Serializable description of a shipped mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismSpec {
    ArgmaxLift(ArgmaxLift),
    SecondPrice(SecondPrice),
    PostedPrice(PostedPrice),
    Zero { n: usize, m: usize },
}

struct Zero {
    n: usize,
    m: usize,
}

impl MechanismRule for Zero {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.m
    }

    fn provenance(&self) -> Provenance {
        Provenance::Custom
    }

    fn evaluate(&self, _: &[Vec<f64>]) -> Outcome {
        Outcome::nothing(self.n, self.m)
    }
}

impl MechanismSpec {
    pub fn build(&self) -> Box<dyn MechanismRule> {
        match self {
            MechanismSpec::ArgmaxLift(l) => Box::new(l.clone()),
            MechanismSpec::SecondPrice(s) => Box::new(s.clone()),
            MechanismSpec::PostedPrice(p) => Box::new(p.clone()),
            MechanismSpec::Zero { n, m } => Box::new(Zero { n: *n, m: *m }),
        }
    }
}

#[cfg(test)]
mod tests;
