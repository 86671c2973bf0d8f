//! Grids, coefficient sets and finite-difference assembly of the elliptic operator.

mod banded;
mod coefficients;
mod grid;
mod operator;

pub use banded::{BandMatrix, LinearFactor};
pub use coefficients::{
    BoundaryCondition, BoundaryKind, Coefficient, CoefficientForm, CoefficientSet, ProductForm,
};
pub use grid::{build_grid, ENorm, Field, SpatialGrid};
pub use operator::{
    apply_operator, assemble_operator, dissipativity_audit, AssembledOperator, DissipativityAudit,
    OperatorFamily, AUDIT_TIME_SAMPLES,
};
