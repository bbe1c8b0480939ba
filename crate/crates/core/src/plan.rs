use serde::{Deserialize, Serialize};

use crate::grid::{Grid, GridMeasure};

/// Sparse nonnegative mass between nodes of a grid (source node, target node).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub grid: Grid,
    /// `(source, target, mass)`, sorted by `(source, target)`.
    pub entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    /// Collects entries above `drop_below`, merging duplicates.
    pub fn from_entries(grid: Grid, entries: impl IntoIterator<Item = (usize, usize, f64)>, drop_below: f64) -> Self {
        let mut e: Vec<(usize, usize, f64)> = entries.into_iter().collect();
        e.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(e.len());
        for (i, j, m) in e {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += m,
                _ => merged.push((i, j, m)),
            }
        }
        merged.retain(|&(_, _, m)| m > drop_below);
        Self { grid, entries: merged }
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn source_marginal(&self) -> GridMeasure {
        let mut d = vec![0.0; self.grid.len()];
        for &(i, _, m) in &self.entries {
            d[i] += m;
        }
        GridMeasure::new(self.grid.clone(), d, Vec::new())
    }

    pub fn target_marginal(&self) -> GridMeasure {
        let mut d = vec![0.0; self.grid.len()];
        for &(_, j, m) in &self.entries {
            d[j] += m;
        }
        GridMeasure::new(self.grid.clone(), d, Vec::new())
    }

    /// `Σ cost(x, y)·mass`.
    pub fn cost(&self, mut cost: impl FnMut(&[f64], &[f64]) -> f64) -> f64 {
        self.entries.iter().map(|&(i, j, m)| m * cost(&self.grid.node(i), &self.grid.node(j))).sum()
    }

    /// Sparse triplets `x_index,y_index,mass` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_index,y_index,mass\n");
        for &(i, j, m) in &self.entries {
            out.push_str(&format!("{i},{j},{m:e}\n"));
        }
        out
    }
}

pub fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}
