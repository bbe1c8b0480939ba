use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub pos: Vec<f64>,
    pub mass: f64,
}

/// Signed measure: nodal masses plus point masses kept at their exact
/// location.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    pub grid: Grid,
    /// Mass (not density value) carried by each node.
    pub density: Vec<f64>,
    pub atoms: Vec<Atom>,
}

#[derive(Serialize, Deserialize)]
struct MeasureDoc {
    dim: usize,
    k: usize,
    density: Vec<f64>,
    atoms: Vec<Atom>,
}

impl Serialize for GridMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureDoc { dim: self.grid.dim(), k: self.grid.k(), density: self.density.clone(), atoms: self.atoms.clone() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = MeasureDoc::deserialize(d)?;
        let grid = Grid::new(doc.dim, doc.k).map_err(D::Error::custom)?;
        if doc.density.len() != grid.len() {
            return Err(D::Error::custom(format!("density has {} entries, grid has {}", doc.density.len(), grid.len())));
        }
        if doc.atoms.iter().any(|a| a.pos.len() != doc.dim) {
            return Err(D::Error::custom("atom position has the wrong dimension"));
        }
        Ok(GridMeasure { grid, density: doc.density, atoms: doc.atoms })
    }
}

impl GridMeasure {
    pub fn new(grid: Grid, density: Vec<f64>, atoms: Vec<Atom>) -> Self {
        assert_eq!(density.len(), grid.len(), "one mass per node");
        Self { grid, density, atoms }
    }

    pub fn zero(grid: &Grid) -> Self {
        Self::new(grid.clone(), vec![0.0; grid.len()], Vec::new())
    }

    pub fn dirac(grid: &Grid, pos: Vec<f64>, mass: f64) -> Self {
        Self::new(grid.clone(), vec![0.0; grid.len()], vec![Atom { pos, mass }])
    }

    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() + self.atoms.iter().map(|a| a.mass).sum::<f64>()
    }

    /// Total variation `‖μ‖`.
    pub fn total_variation(&self) -> f64 {
        let (p, n) = self.jordan_decomposition();
        p.total_mass() + n.total_mass()
    }

    /// Folds atoms sitting exactly on lattice points into the nodal masses.
    /// The measure is unchanged.
    pub fn merge_node_atoms(&self) -> Self {
        let mut density = self.density.clone();
        let mut atoms = Vec::new();
        for a in &self.atoms {
            match self.grid.node_at(&a.pos) {
                Some(i) => density[i] += a.mass,
                None => atoms.push(a.clone()),
            }
        }
        Self::new(self.grid.clone(), density, atoms)
    }

    /// Nodal masses with every atom spread multilinearly onto the corners of
    /// its cell (exact for atoms on lattice points).
    pub fn to_nodal(&self) -> Vec<f64> {
        let mut out = self.density.clone();
        for a in &self.atoms {
            for (i, w) in self.grid.locate(&a.pos) {
                out[i] += w * a.mass;
            }
        }
        out
    }

    /// `(μ₊, μ₋)` with disjoint supports after on-lattice atoms are merged.
    pub fn jordan_decomposition(&self) -> (GridMeasure, GridMeasure) {
        let merged = self.merge_node_atoms();
        let pos = merged.density.iter().map(|&v| v.max(0.0)).collect();
        let neg = merged.density.iter().map(|&v| (-v).max(0.0)).collect();
        let mut pa = Vec::new();
        let mut na = Vec::new();
        for a in merged.atoms {
            if a.mass > 0.0 {
                pa.push(a);
            } else if a.mass < 0.0 {
                na.push(Atom { pos: a.pos, mass: -a.mass });
            }
        }
        (Self::new(self.grid.clone(), pos, pa), Self::new(self.grid.clone(), neg, na))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(
            self.grid.clone(),
            self.density.iter().map(|v| v * s).collect(),
            self.atoms.iter().map(|a| Atom { pos: a.pos.clone(), mass: a.mass * s }).collect(),
        )
    }

    pub fn add(&self, other: &GridMeasure) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("measures live on different grids".into()));
        }
        let density = self.density.iter().zip(&other.density).map(|(a, b)| a + b).collect();
        let atoms = self.atoms.iter().chain(&other.atoms).cloned().collect();
        Ok(Self::new(self.grid.clone(), density, atoms))
    }

    pub fn sub(&self, other: &GridMeasure) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    pub fn is_balanced(&self, tol: f64) -> bool {
        self.total_mass().abs() <= tol
    }
}
