use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform lattice of interior nodes on an interval or a box.
///
/// Node `i` along an axis sits at `lo + (i + 1) * spacing`; the boundary
/// itself carries no unknowns. In two dimensions nodes are numbered with the
/// first axis running fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n: Vec<usize>,
    spacing: Vec<f64>,
}

/// Build a grid with the same bounds and resolution on every axis.
pub fn build_grid(lo: f64, hi: f64, n_interior: usize, dimension: usize) -> Result<SpatialGrid> {
    if !(1..=2).contains(&dimension) {
        return Err(Error::UnsupportedDimension(dimension));
    }
    SpatialGrid::new(&vec![lo; dimension], &vec![hi; dimension], &vec![n_interior; dimension])
}

impl SpatialGrid {
    pub fn new(lo: &[f64], hi: &[f64], n_interior: &[usize]) -> Result<Self> {
        let d = lo.len();
        if !(1..=2).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        if hi.len() != d || n_interior.len() != d {
            return Err(Error::InvalidGrid(format!(
                "axis counts differ: lo {}, hi {}, n {}",
                d,
                hi.len(),
                n_interior.len()
            )));
        }
        let mut spacing = Vec::with_capacity(d);
        for axis in 0..d {
            let (a, b) = (lo[axis], hi[axis]);
            if !a.is_finite() || !b.is_finite() || b <= a {
                return Err(Error::NonPositiveExtent { axis, lo: a, hi: b });
            }
            if n_interior[axis] == 0 {
                return Err(Error::InvalidGrid(format!("axis {axis} has no interior nodes")));
            }
            spacing.push((b - a) / (n_interior[axis] + 1) as f64);
        }
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            n: n_interior.to_vec(),
            spacing,
        })
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn n_interior(&self) -> &[usize] {
        &self.n
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Largest spacing over the axes.
    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Coordinate of node `index` along `axis`.
    pub fn axis_coordinate(&self, axis: usize, index: usize) -> f64 {
        self.lo[axis] + (index + 1) as f64 * self.spacing[axis]
    }

    /// Split a flat node index into per-axis indices.
    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        match self.dimension() {
            1 => [node, 0],
            _ => [node % self.n[0], node / self.n[0]],
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        match self.dimension() {
            1 => idx[0],
            _ => idx[0] + self.n[0] * idx[1],
        }
    }

    /// Physical coordinates of a node; unused axes are zero.
    pub fn node(&self, node: usize) -> [f64; 2] {
        let idx = self.multi_index(node);
        let mut p = [0.0; 2];
        for (axis, value) in p.iter_mut().enumerate().take(self.dimension()) {
            *value = self.axis_coordinate(axis, idx[axis]);
        }
        p
    }

    pub fn nodes(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }
}

/// Which norm plays the role of the `E` space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ENorm {
    /// Maximum absolute nodal value.
    #[default]
    Sup,
    /// Discrete `L^{2(2m+1)}` norm for a reaction of degree `2m+1`.
    Lp,
}

/// Grid function sampled at the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<SpatialGrid>,
    values: DVector<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<SpatialGrid>) -> Self {
        Self {
            grid: grid.clone(),
            values: DVector::zeros(grid.len()),
        }
    }

    pub fn constant(grid: &Arc<SpatialGrid>, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: DVector::from_element(grid.len(), value),
        }
    }

    pub fn from_fn(grid: &Arc<SpatialGrid>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let d = grid.dimension();
        let values = DVector::from_iterator(grid.len(), grid.nodes().map(|p| f(&p[..d])));
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Arc<SpatialGrid>, values: Vec<f64>) -> Result<Self> {
        Self::from_vector(grid, DVector::from_vec(values))
    }

    pub fn from_vector(grid: &Arc<SpatialGrid>, values: DVector<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DVector<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Fails with `InvalidField` when any entry is NaN or infinite.
    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidField)
        }
    }

    pub fn inner_h(&self, other: &Field) -> f64 {
        self.values.dot(&other.values) * self.grid.cell_volume()
    }

    pub fn norm_h(&self) -> f64 {
        (self.values.norm_squared() * self.grid.cell_volume()).sqrt()
    }

    pub fn norm_sup(&self) -> f64 {
        self.values.amax()
    }

    pub fn norm_lp(&self, p: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    /// `E`-norm; `degree` is the reaction degree `2m+1` used by the `Lp` mode.
    pub fn norm_e(&self, mode: ENorm, degree: usize) -> f64 {
        match mode {
            ENorm::Sup => self.norm_sup(),
            ENorm::Lp => self.norm_lp(2.0 * degree.max(1) as f64),
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: &self.values * a,
        }
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        Field {
            grid: self.grid.clone(),
            values: &self.values + &other.values * a,
        }
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        Field {
            grid: self.grid.clone(),
            values: &self.values + &rhs.values,
        }
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        Field {
            grid: self.grid.clone(),
            values: &self.values - &rhs.values,
        }
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scaled(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn three_nodes_on_zero_pi() {
        let g = build_grid(0.0, PI, 3, 1).unwrap();
        assert_eq!(g.spacing()[0], PI / 4.0);
        let xs: Vec<f64> = g.nodes().map(|p| p[0]).collect();
        assert_eq!(xs, vec![PI / 4.0, PI / 2.0, 3.0 * PI / 4.0]);
    }

    #[test]
    fn single_node_is_midpoint() {
        let g = build_grid(0.0, 1.0, 1, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.node(0)[0], 0.5);
    }

    #[test]
    fn square_lattice() {
        let g = build_grid(0.0, 1.0, 4, 2).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.spacing(), &[0.2, 0.2]);
        assert_eq!(g.node(5), [0.4, 0.4]);
        assert_eq!(g.flat_index(g.multi_index(13)), 13);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(build_grid(1.0, 1.0, 3, 1), Err(Error::NonPositiveExtent { .. })));
        assert!(matches!(build_grid(0.0, 1.0, 3, 3), Err(Error::UnsupportedDimension(3))));
        assert!(matches!(build_grid(0.0, 1.0, 0, 1), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn norms() {
        let g = Arc::new(build_grid(0.0, 1.0, 3, 1).unwrap());
        let f = Field::from_values(&g, vec![1.0, -2.0, 2.0]).unwrap();
        assert_eq!(f.norm_sup(), 2.0);
        assert!((f.norm_h() - (9.0_f64 * 0.25).sqrt()).abs() < 1e-15);
        assert!((f.norm_lp(2.0) - f.norm_h()).abs() < 1e-14);
        assert!(Field::from_values(&g, vec![1.0]).is_err());
    }
}
