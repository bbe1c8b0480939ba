use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{discrete_gradient, UtilityGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    /// `u` vanishes: no sale.
    Zero,
    /// `u > 0` with a singular Hessian.
    Degenerate,
    StrictlyConvex,
}

/// Classify nodes of a two-item utility by the determinant of the
/// second-difference Hessian (unscaled, i.e. `h²·∇²u`).
pub fn classify_regions(u: &UtilityGrid, tol: f64) -> Result<Vec<RegionLabel>> {
    let grid = &u.grid;
    if grid.dim() != 2 || grid.k() < 3 {
        return Err(Error::Unsupported("region classification needs a 2-D grid with k ≥ 3".into()));
    }
    let k = grid.k();
    let at = |i: usize, j: usize| u.u[grid.flat_index(&[i, j])];
    Ok((0..grid.len())
        .map(|idx| {
            if u.u[idx].abs() <= tol {
                return RegionLabel::Zero;
            }
            let mi = grid.multi_index(idx);
            let (i, j) = (mi[0].clamp(1, k - 2), mi[1].clamp(1, k - 2));
            let uxx = at(i + 1, j) - 2.0 * at(i, j) + at(i - 1, j);
            let uyy = at(i, j + 1) - 2.0 * at(i, j) + at(i, j - 1);
            let uxy = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1)) / 4.0;
            if uxx * uyy - uxy * uxy <= tol {
                RegionLabel::Degenerate
            } else {
                RegionLabel::StrictlyConvex
            }
        })
        .collect())
}

/// Allocation pattern of a two-item mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    /// Nothing sold.
    Z,
    /// Only item 1.
    A,
    /// Only item 2.
    B,
    /// Both items.
    W,
}

impl Region {
    pub fn from_allocation(g: &[f64]) -> Self {
        match (g[0] >= 0.5, g[1] >= 0.5) {
            (false, false) => Region::Z,
            (true, false) => Region::A,
            (false, true) => Region::B,
            (true, true) => Region::W,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Region::Z => 'Z',
            Region::A => 'A',
            Region::B => 'B',
            Region::W => 'W',
        }
    }
}

/// Round each node's allocation to the nearest vertex of `[0,1]²`.
pub fn region_map(u: &UtilityGrid) -> Result<Vec<Region>> {
    if u.grid.dim() != 2 {
        return Err(Error::Unsupported("region map needs two items".into()));
    }
    let g = discrete_gradient(u);
    Ok((0..u.grid.len()).map(|idx| Region::from_allocation(g.at(idx))).collect())
}
