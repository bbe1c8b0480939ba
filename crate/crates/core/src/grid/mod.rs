//! Regular grids over `[0,1]^n`, signed measures on them, and a discrete
//! gradient/divergence pair that is exactly adjoint under the product
//! trapezoid rule.

mod measure;

pub use measure::{Atom, GridMeasure};

use serde::{Deserialize, Serialize};

use crate::density::DistributionSpec;
use crate::error::{Error, Result};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

/// Regular lattice `{0, h, …, 1}^n`, `h = 1/(k−1)`, stored row-major with the
/// first axis slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridShape", into = "GridShape")]
pub struct Grid {
    dim: usize,
    k: usize,
    len: usize,
    weights: Vec<f64>,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct GridShape {
    dim: usize,
    k: usize,
}

impl TryFrom<GridShape> for Grid {
    type Error = Error;
    fn try_from(s: GridShape) -> Result<Self> {
        Grid::new(s.dim, s.k)
    }
}

impl From<Grid> for GridShape {
    fn from(g: Grid) -> Self {
        GridShape { dim: g.dim, k: g.k }
    }
}

/// Trapezoid weights on `k` equispaced points of `[0,1]`.
fn trapezoid_1d(k: usize) -> Vec<f64> {
    let h = 1.0 / (k - 1) as f64;
    (0..k).map(|i| if i == 0 || i == k - 1 { h / 2.0 } else { h }).collect()
}

impl Grid {
    pub fn new(dim: usize, k: usize) -> Result<Self> {
        Self::with_budget(dim, k, DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(dim: usize, k: usize, budget: usize) -> Result<Self> {
        if dim == 0 || k < 2 {
            return Err(Error::InvalidArgument(format!("grid needs n ≥ 1 and k ≥ 2, got n={dim}, k={k}")));
        }
        let len = (0..dim)
            .try_fold(1usize, |acc, _| acc.checked_mul(k))
            .filter(|&l| l <= budget)
            .ok_or(Error::NodeBudget { nodes: k.saturating_pow(dim as u32), budget })?;
        let w1 = trapezoid_1d(k);
        let mut weights = vec![1.0; len];
        for (idx, w) in weights.iter_mut().enumerate() {
            let mut rest = idx;
            for _ in 0..dim {
                *w *= w1[rest % k];
                rest /= k;
            }
        }
        Ok(Self { dim, k, len, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Mesh width `1/(k−1)`.
    pub fn h(&self) -> f64 {
        1.0 / (self.k - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / (self.k - 1) as f64
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.k.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        let mut rest = idx;
        for slot in out.iter_mut().rev() {
            *slot = rest % self.k;
            rest /= self.k;
        }
        out
    }

    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.k
    }

    pub fn flat_index(&self, mi: &[usize]) -> usize {
        mi.iter().fold(0, |acc, &i| acc * self.k + i)
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).into_iter().map(|i| self.coord(i)).collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len).map(|i| self.node(i))
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Neighbour one step along `axis` (`up` selects the direction).
    pub fn neighbor(&self, idx: usize, axis: usize, up: bool) -> Option<usize> {
        let i = self.axis_index(idx, axis);
        let s = self.stride(axis);
        match (up, i) {
            (true, i) if i + 1 < self.k => Some(idx + s),
            (false, i) if i > 0 => Some(idx - s),
            _ => None,
        }
    }

    /// Nodes and coefficients of the axis derivative at `idx`: one-sided on
    /// the two faces, central in the interior.
    pub fn stencil(&self, idx: usize, axis: usize) -> [(usize, f64); 2] {
        let inv_h = (self.k - 1) as f64;
        match (self.neighbor(idx, axis, false), self.neighbor(idx, axis, true)) {
            (None, Some(up)) => [(up, inv_h), (idx, -inv_h)],
            (Some(dn), None) => [(idx, inv_h), (dn, -inv_h)],
            (Some(dn), Some(up)) => [(up, 0.5 * inv_h), (dn, -0.5 * inv_h)],
            (None, None) => unreachable!("k ≥ 2"),
        }
    }

    /// Multilinear interpolation weights of `pos` (clamped into the cube).
    pub fn locate(&self, pos: &[f64]) -> Vec<(usize, f64)> {
        let mut base = vec![0usize; self.dim];
        let mut frac = vec![0.0; self.dim];
        for d in 0..self.dim {
            let t = pos[d].clamp(0.0, 1.0) * (self.k - 1) as f64;
            let i0 = (t.floor() as usize).min(self.k - 2);
            base[d] = i0;
            frac[d] = t - i0 as f64;
        }
        let mut out = Vec::with_capacity(1 << self.dim);
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut idx = 0;
            for d in 0..self.dim {
                let bit = (corner >> (self.dim - 1 - d)) & 1;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                idx = idx * self.k + base[d] + bit;
            }
            if w != 0.0 {
                out.push((idx, w));
            }
        }
        out
    }

    /// Flat index of the node at `pos`, if `pos` is (to 1e-12) a lattice point.
    pub fn node_at(&self, pos: &[f64]) -> Option<usize> {
        let mut mi = Vec::with_capacity(self.dim);
        for &p in pos {
            let t = p * (self.k - 1) as f64;
            let r = t.round();
            if (t - r).abs() > 1e-12 * (self.k as f64) || r < 0.0 || r > (self.k - 1) as f64 {
                return None;
            }
            mi.push(r as usize);
        }
        Some(self.flat_index(&mi))
    }

    pub fn interpolate(&self, values: &[f64], pos: &[f64]) -> f64 {
        self.locate(pos).into_iter().map(|(i, w)| w * values[i]).sum()
    }
}

/// Per-node vectors in `ℝ^n`, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl VectorField {
    pub fn zeros(dim: usize, len: usize) -> Self {
        Self { dim, data: vec![0.0; dim * len] }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(grid.dim() * grid.len());
        for x in grid.nodes() {
            let v = f(&x);
            assert_eq!(v.len(), grid.dim());
            data.extend(v);
        }
        Self { dim: grid.dim(), data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Convex utility on the grid with an optional subgradient field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityGrid {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub g: Option<VectorField>,
}

impl UtilityGrid {
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let u = grid.nodes().map(|x| f(&x)).collect();
        Self { grid: grid.clone(), u, g: None }
    }

    /// Largest violation of `u(0)=0`, `g ≥ 0` and the pairwise supporting
    /// hyperplane inequalities.
    pub fn max_violation(&self) -> f64 {
        let grad = discrete_gradient(self);
        let mut worst = self.u[0].abs();
        worst = grad.data.iter().fold(worst, |m, &v| m.max(-v));
        let nodes: Vec<Vec<f64>> = self.grid.nodes().collect();
        for (x, xs) in nodes.iter().enumerate() {
            let gx = grad.at(x);
            for (y, ys) in nodes.iter().enumerate() {
                let lin: f64 = gx.iter().zip(ys.iter().zip(xs)).map(|(g, (a, b))| g * (a - b)).sum();
                worst = worst.max(self.u[x] + lin - self.u[y]);
            }
        }
        worst
    }
}

/// Flow (virtual valuation) field `c` with an optional singular part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub grid: Grid,
    pub c: VectorField,
    pub singular_mass: Option<VectorField>,
}

/// Axis derivatives of nodal `values` with the grid stencil.
pub fn gradient_of(grid: &Grid, values: &[f64]) -> VectorField {
    let mut out = VectorField::zeros(grid.dim(), grid.len());
    for idx in 0..grid.len() {
        for axis in 0..grid.dim() {
            out.at_mut(idx)[axis] = grid.stencil(idx, axis).iter().map(|&(j, s)| s * values[j]).sum();
        }
    }
    out
}

/// The stored subgradient when present, otherwise the stencil gradient.
pub fn discrete_gradient(u: &UtilityGrid) -> VectorField {
    match &u.g {
        Some(g) => g.clone(),
        None => gradient_of(&u.grid, &u.u),
    }
}

/// Nodal masses `ν = −Dᵀ(ω c)` for per-node weights `ω`, so that
/// `Σ ⟨Dψ, c⟩ ω + Σ ψ ν = 0` for every nodal `ψ`.
pub fn divergence_weighted(grid: &Grid, c: &VectorField, omega: &[f64]) -> Vec<f64> {
    let mut nu = vec![0.0; grid.len()];
    for idx in 0..grid.len() {
        for axis in 0..grid.dim() {
            let a = omega[idx] * c.at(idx)[axis];
            if a == 0.0 {
                continue;
            }
            for (j, s) in grid.stencil(idx, axis) {
                nu[j] -= a * s;
            }
        }
    }
    nu
}

/// `div(c·ρ)` as a nodal measure, paired against the discrete probability
/// weights of `rho` on the grid.
pub fn discrete_divergence(c: &FlowField, rho: &DistributionSpec) -> GridMeasure {
    let omega = rho.node_weights(&c.grid);
    let density = divergence_weighted(&c.grid, &c.c, &omega);
    GridMeasure::new(c.grid.clone(), density, Vec::new())
}

/// `Σ f·density + Σ f(atom)·mass`, atoms read by multilinear interpolation.
pub fn integrate(f: &[f64], m: &GridMeasure) -> f64 {
    let nodal: f64 = f.iter().zip(&m.density).map(|(a, b)| a * b).sum();
    let atoms: f64 = m.atoms.iter().map(|a| a.mass * m.grid.interpolate(f, &a.pos)).sum();
    nodal + atoms
}
