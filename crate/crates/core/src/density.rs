//! Type distributions on `[0,1]^n`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// One-dimensional density on `[0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density1d {
    Uniform,
    /// Continuous piecewise-linear density through `(knots[i], values[i])`,
    /// rescaled to unit mass. Knots must start at 0 and end at 1.
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
}

impl Density1d {
    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let d = Density1d::PiecewiseLinear { knots, values };
        d.validate()?;
        Ok(d)
    }

    /// `ρ(t) ∝ a + b·t`.
    pub fn linear(a: f64, b: f64) -> Result<Self> {
        Self::piecewise_linear(vec![0.0, 1.0], vec![a, a + b])
    }

    /// Mixture of triangular bumps `(weight, lo, hi)` plus a uniform floor
    /// `eps`, tabulated on `points` equispaced knots (the triangle apexes and
    /// ends should fall on knots for the tabulation to be exact).
    pub fn triangle_mixture(bumps: &[(f64, f64, f64)], eps: f64, points: usize) -> Result<Self> {
        let knots: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
        let values = knots
            .iter()
            .map(|&t| {
                eps + bumps
                    .iter()
                    .map(|&(w, lo, hi)| {
                        let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
                        w * (1.0 - (t - mid).abs() / half).max(0.0) / half
                    })
                    .sum::<f64>()
            })
            .collect();
        Self::piecewise_linear(knots, values)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Density1d::Uniform => Ok(()),
            Density1d::PiecewiseLinear { knots, values } => {
                let bad = |m: &str| Err(Error::InvalidArgument(format!("piecewise-linear density: {m}")));
                if knots.len() < 2 || knots.len() != values.len() {
                    return bad("needs ≥ 2 knots and one value per knot");
                }
                if knots[0] != 0.0 || *knots.last().unwrap() != 1.0 {
                    return bad("knots must span [0,1]");
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("knots must be strictly increasing");
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("values must be finite and strictly positive");
                }
                Ok(())
            }
        }
    }

    fn mass(knots: &[f64], values: &[f64]) -> f64 {
        knots.windows(2).zip(values.windows(2)).map(|(k, v)| 0.5 * (k[1] - k[0]) * (v[0] + v[1])).sum()
    }

    fn piece(knots: &[f64], t: f64) -> usize {
        knots.partition_point(|&k| k <= t).clamp(1, knots.len() - 1) - 1
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match self {
            Density1d::Uniform => 1.0,
            Density1d::PiecewiseLinear { knots, values } => {
                let t = t.clamp(0.0, 1.0);
                let i = Self::piece(knots, t);
                let s = (t - knots[i]) / (knots[i + 1] - knots[i]);
                ((1.0 - s) * values[i] + s * values[i + 1]) / Self::mass(knots, values)
            }
        }
    }

    /// Right derivative of the density.
    pub fn pdf_slope(&self, t: f64) -> f64 {
        match self {
            Density1d::Uniform => 0.0,
            Density1d::PiecewiseLinear { knots, values } => {
                let i = Self::piece(knots, t.clamp(0.0, 1.0));
                (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]) / Self::mass(knots, values)
            }
        }
    }

    /// `𝒫(t) = ∫₀^t ρ`.
    pub fn cdf(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            Density1d::Uniform => t,
            Density1d::PiecewiseLinear { knots, values } => {
                let i = Self::piece(knots, t);
                let full = Self::mass(&knots[..=i], &values[..=i]);
                let h = knots[i + 1] - knots[i];
                let s = t - knots[i];
                let slope = (values[i + 1] - values[i]) / h;
                (full + values[i] * s + 0.5 * slope * s * s) / Self::mass(knots, values)
            }
        }
    }

    /// Inverse of [`cdf`](Self::cdf), exact per piece.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        match self {
            Density1d::Uniform => q,
            Density1d::PiecewiseLinear { knots, values } => {
                let total = Self::mass(knots, values);
                let target = q * total;
                let mut acc = 0.0;
                for i in 0..knots.len() - 1 {
                    let h = knots[i + 1] - knots[i];
                    let m = 0.5 * h * (values[i] + values[i + 1]);
                    if acc + m >= target || i == knots.len() - 2 {
                        // Solve a s + ½ b s² = r for s ∈ [0,h].
                        let (a, b, r) = (values[i], (values[i + 1] - values[i]) / h, (target - acc).max(0.0));
                        let s = if b.abs() < 1e-14 * a {
                            r / a
                        } else {
                            2.0 * r / (a + (a * a + 2.0 * b * r).max(0.0).sqrt())
                        };
                        return (knots[i] + s.clamp(0.0, h)).clamp(0.0, 1.0);
                    }
                    acc += m;
                }
                1.0
            }
        }
    }

    /// Breakpoints where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Density1d::Uniform => vec![0.0, 1.0],
            Density1d::PiecewiseLinear { knots, .. } => knots.clone(),
        }
    }
}

/// Joint type distribution on `[0,1]^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform { dim: usize },
    /// Independent coordinates.
    Product { factors: Vec<Density1d> },
    /// Nodal density values on a `k^dim` grid, interpolated multilinearly and
    /// rescaled to unit mass.
    Tabulated { dim: usize, k: usize, values: Vec<f64> },
}

impl DistributionSpec {
    pub fn uniform(dim: usize) -> Self {
        DistributionSpec::Uniform { dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::Uniform { dim } | DistributionSpec::Tabulated { dim, .. } => *dim,
            DistributionSpec::Product { factors } => factors.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::Uniform { dim } if *dim == 0 => {
                Err(Error::InvalidArgument("distribution dimension must be positive".into()))
            }
            DistributionSpec::Uniform { .. } => Ok(()),
            DistributionSpec::Product { factors } => {
                if factors.is_empty() {
                    return Err(Error::InvalidArgument("product distribution needs a factor".into()));
                }
                factors.iter().try_for_each(Density1d::validate)
            }
            DistributionSpec::Tabulated { dim, k, values } => {
                let grid = Grid::new(*dim, *k)?;
                if values.len() != grid.len() {
                    return Err(Error::InvalidArgument("tabulated density needs one value per node".into()));
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidArgument("tabulated density must be strictly positive".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_uniform(&self) -> bool {
        match self {
            DistributionSpec::Uniform { .. } => true,
            DistributionSpec::Product { factors } => factors.iter().all(|f| *f == Density1d::Uniform),
            DistributionSpec::Tabulated { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        match self {
            DistributionSpec::Uniform { .. } => 1.0,
            DistributionSpec::Product { factors } => factors.iter().zip(x).map(|(f, &t)| f.pdf(t)).product(),
            DistributionSpec::Tabulated { dim, k, values } => {
                let grid = Grid::new(*dim, *k).expect("validated");
                let mass: f64 = values.iter().zip(grid.weights()).map(|(v, w)| v * w).sum();
                grid.interpolate(values, x) / mass
            }
        }
    }

    /// Marginal of coordinate `axis`, available when it is a known 1D law.
    pub fn marginal(&self, axis: usize) -> Option<Density1d> {
        match self {
            DistributionSpec::Uniform { .. } => Some(Density1d::Uniform),
            DistributionSpec::Product { factors } => factors.get(axis).cloned(),
            DistributionSpec::Tabulated { dim: 1, k, values } => Some(Density1d::PiecewiseLinear {
                knots: (0..*k).map(|i| i as f64 / (*k - 1) as f64).collect(),
                values: values.clone(),
            }),
            DistributionSpec::Tabulated { .. } => None,
        }
    }

    pub fn cdf_1d(&self, axis: usize, t: f64) -> Option<f64> {
        self.marginal(axis).map(|d| d.cdf(t))
    }

    /// Discrete probability weights `ρ(x)·w_x / Σ ρ w` on the nodes of `grid`.
    pub fn node_weights(&self, grid: &Grid) -> Vec<f64> {
        let mut w: Vec<f64> = grid.nodes().zip(grid.weights()).map(|(x, w)| self.pdf(&x) * w).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        w
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            DistributionSpec::Uniform { dim } => (0..*dim).map(|_| rng.gen::<f64>()).collect(),
            DistributionSpec::Product { factors } => factors.iter().map(|f| f.quantile(rng.gen())).collect(),
            DistributionSpec::Tabulated { dim, k, values } => {
                let grid = Grid::new(*dim, *k).expect("validated");
                let top = values.iter().cloned().fold(0.0, f64::max);
                loop {
                    let x: Vec<f64> = (0..*dim).map(|_| rng.gen::<f64>()).collect();
                    if rng.gen::<f64>() * top <= grid.interpolate(values, &x) {
                        return x;
                    }
                }
            }
        }
    }
}
