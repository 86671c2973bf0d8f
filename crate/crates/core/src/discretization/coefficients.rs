use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::SpatialGrid;
use crate::error::{Error, Result};

/// Serializable analytic coefficient: polynomials in `t` and in each spatial
/// coordinate.
///
/// JSON forms: a bare number is a constant, an object is a product
/// `poly_t(t) * prod_a poly_xi[a](xi_a)` (coefficients in ascending powers,
/// missing factors are 1), and an array is the sum of its entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientForm {
    Constant(f64),
    Product(ProductForm),
    Sum(Vec<CoefficientForm>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductForm {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poly_t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poly_xi: Vec<Vec<f64>>,
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

impl CoefficientForm {
    pub fn eval(&self, t: f64, xi: &[f64]) -> f64 {
        match self {
            CoefficientForm::Constant(c) => *c,
            CoefficientForm::Product(p) => {
                let mut v = if p.poly_t.is_empty() { 1.0 } else { horner(&p.poly_t, t) };
                for (axis, poly) in p.poly_xi.iter().enumerate() {
                    let x = xi.get(axis).copied().unwrap_or(0.0);
                    v *= horner(poly, x);
                }
                v
            }
            CoefficientForm::Sum(terms) => terms.iter().map(|c| c.eval(t, xi)).sum(),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            CoefficientForm::Constant(_) => true,
            CoefficientForm::Product(p) => p.poly_t.iter().skip(1).all(|c| *c == 0.0),
            CoefficientForm::Sum(terms) => terms.iter().all(|c| c.is_time_independent()),
        }
    }

    pub fn is_space_independent(&self) -> bool {
        match self {
            CoefficientForm::Constant(_) => true,
            CoefficientForm::Product(p) => p.poly_xi.iter().all(|q| q.iter().skip(1).all(|c| *c == 0.0)),
            CoefficientForm::Sum(terms) => terms.iter().all(|c| c.is_space_independent()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CoefficientForm::Constant(c) => *c == 0.0,
            CoefficientForm::Product(p) => {
                (!p.poly_t.is_empty() && p.poly_t.iter().all(|c| *c == 0.0))
                    || p.poly_xi.iter().any(|q| q.iter().all(|c| *c == 0.0))
            }
            CoefficientForm::Sum(terms) => terms.iter().all(|c| c.is_zero()),
        }
    }
}

impl From<f64> for CoefficientForm {
    fn from(c: f64) -> Self {
        CoefficientForm::Constant(c)
    }
}

type CoefficientFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Coefficient function `(t, xi) -> value`: either an analytic form or an
/// arbitrary callback.
#[derive(Clone)]
pub enum Coefficient {
    Form(CoefficientForm),
    Callback {
        f: Arc<CoefficientFn>,
        time_independent: bool,
    },
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Coefficient::Form(CoefficientForm::Constant(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `poly_t(t)` with no spatial dependence.
    pub fn poly_t(coeffs: &[f64]) -> Self {
        Coefficient::Form(CoefficientForm::Product(ProductForm {
            poly_t: coeffs.to_vec(),
            poly_xi: Vec::new(),
        }))
    }

    pub fn callback(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Callback {
            f: Arc::new(f),
            time_independent: false,
        }
    }

    pub fn autonomous_callback(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Callback {
            f: Arc::new(f),
            time_independent: true,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, xi: &[f64]) -> f64 {
        match self {
            Coefficient::Form(form) => form.eval(t, xi),
            Coefficient::Callback { f, .. } => f(t, xi),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            Coefficient::Form(form) => form.is_time_independent(),
            Coefficient::Callback { time_independent, .. } => *time_independent,
        }
    }

    /// Callbacks are conservatively treated as space dependent.
    pub fn is_space_independent(&self) -> bool {
        match self {
            Coefficient::Form(form) => form.is_space_independent(),
            Coefficient::Callback { .. } => false,
        }
    }

    /// True only when the coefficient is known to vanish identically.
    pub fn is_zero(&self) -> bool {
        match self {
            Coefficient::Form(form) => form.is_zero(),
            Coefficient::Callback { .. } => false,
        }
    }

    pub fn form(&self) -> Option<&CoefficientForm> {
        match self {
            Coefficient::Form(form) => Some(form),
            Coefficient::Callback { .. } => None,
        }
    }
}

impl From<CoefficientForm> for Coefficient {
    fn from(form: CoefficientForm) -> Self {
        Coefficient::Form(form)
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Form(form) => write!(f, "{form:?}"),
            Coefficient::Callback { .. } => write!(f, "<callback>"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub enum BoundaryCondition {
    #[default]
    Dirichlet,
    Neumann,
    /// Conormal derivative plus `beta(t, xi) * u` vanishes on the boundary.
    Robin(Coefficient),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    Robin,
}

impl BoundaryCondition {
    pub fn kind(&self) -> BoundaryKind {
        match self {
            BoundaryCondition::Dirichlet => BoundaryKind::Dirichlet,
            BoundaryCondition::Neumann => BoundaryKind::Neumann,
            BoundaryCondition::Robin(_) => BoundaryKind::Robin,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            BoundaryCondition::Robin(c) => c.is_time_independent(),
            _ => true,
        }
    }
}

/// Coefficients of the second-order operator
/// `sum a_ij D_ij + sum a_i D_i + a_0`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub diffusion: Vec<Vec<Coefficient>>,
    pub drift: Vec<Coefficient>,
    pub potential: Coefficient,
    pub ellipticity_floor: f64,
}

impl CoefficientSet {
    /// `a * Laplacian` in `dimension` dimensions with no drift or potential.
    pub fn laplacian(dimension: usize, a: f64) -> Self {
        Self::isotropic(dimension, Coefficient::constant(a), (a / 2.0).min(1.0))
    }

    pub fn isotropic(dimension: usize, a: Coefficient, ellipticity_floor: f64) -> Self {
        let diffusion = (0..dimension)
            .map(|i| {
                (0..dimension)
                    .map(|j| if i == j { a.clone() } else { Coefficient::zero() })
                    .collect()
            })
            .collect();
        Self {
            diffusion,
            drift: vec![Coefficient::zero(); dimension],
            potential: Coefficient::zero(),
            ellipticity_floor,
        }
    }

    pub fn with_potential(mut self, a0: Coefficient) -> Self {
        self.potential = a0;
        self
    }

    pub fn with_drift(mut self, drift: Vec<Coefficient>) -> Self {
        self.drift = drift;
        self
    }

    pub fn dimension(&self) -> usize {
        self.diffusion.len()
    }

    pub fn is_time_independent(&self) -> bool {
        self.diffusion.iter().flatten().all(Coefficient::is_time_independent)
            && self.drift.iter().all(Coefficient::is_time_independent)
            && self.potential.is_time_independent()
    }

    pub fn has_drift(&self) -> bool {
        self.drift.iter().any(|c| !c.is_zero())
    }

    fn check_shape(&self, grid: &SpatialGrid) -> Result<()> {
        let d = grid.dimension();
        let ok = self.diffusion.len() == d
            && self.diffusion.iter().all(|row| row.len() == d)
            && self.drift.len() == d;
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: d,
                actual: self.diffusion.len(),
            })
        }
    }

    /// Symmetry and ellipticity at every grid node at time `t`.
    pub fn validate_at(&self, grid: &SpatialGrid, t: f64) -> Result<()> {
        self.check_shape(grid)?;
        if !(self.ellipticity_floor > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "ellipticity floor must be positive, got {}",
                self.ellipticity_floor
            )));
        }
        let d = grid.dimension();
        for (node, p) in grid.nodes().enumerate() {
            let xi = &p[..d];
            let min_eig = if d == 1 {
                self.diffusion[0][0].eval(t, xi)
            } else {
                let a = self.diffusion[0][0].eval(t, xi);
                let b = self.diffusion[0][1].eval(t, xi);
                let c = self.diffusion[1][0].eval(t, xi);
                let e = self.diffusion[1][1].eval(t, xi);
                let scale = a.abs().max(e.abs()).max(1.0);
                if (b - c).abs() > 1e-12 * scale {
                    return Err(Error::AsymmetricDiffusion { t, node });
                }
                let mean = 0.5 * (a + e);
                let rad = (0.25 * (a - e) * (a - e) + b * b).sqrt();
                mean - rad
            };
            if !(min_eig >= self.ellipticity_floor) {
                return Err(Error::EllipticityViolation {
                    t,
                    node,
                    min_eigenvalue: min_eig,
                    floor: self.ellipticity_floor,
                });
            }
        }
        Ok(())
    }
}
