use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::banded::BandMatrix;
use super::coefficients::{BoundaryCondition, BoundaryKind, CoefficientSet};
use super::grid::{Field, SpatialGrid};
use crate::error::{Error, Result};

/// Matrix realization of the elliptic operator at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledOperator {
    pub t: f64,
    pub matrix: BandMatrix,
    pub bc: BoundaryKind,
    /// Multiple of the identity already subtracted from `matrix`.
    pub shift_applied: f64,
}

impl AssembledOperator {
    pub fn dim(&self) -> usize {
        self.matrix.n()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    pub fn apply(&self, x: &Field) -> Result<Field> {
        apply_operator(self, x)
    }

    /// Same operator with an extra `shift * I` subtracted.
    pub fn shifted(&self, shift: f64) -> AssembledOperator {
        AssembledOperator {
            t: self.t,
            matrix: self.matrix.shifted_scaled(-shift, 1.0),
            bc: self.bc,
            shift_applied: self.shift_applied + shift,
        }
    }
}

/// Value of the eliminated boundary unknown as a multiple of its interior
/// neighbour. `coord` is the boundary point, `a_normal` the conormal diffusivity there.
fn ghost_factor(bc: &BoundaryCondition, h: f64, a_normal: f64, t: f64, coord: &[f64]) -> f64 {
    match bc {
        BoundaryCondition::Dirichlet => 0.0,
        BoundaryCondition::Neumann => 1.0,
        BoundaryCondition::Robin(beta) => 1.0 / (1.0 + h * beta.eval(t, coord) / a_normal),
    }
}

/// Per-axis ghost factors at the low and high ends, indexed by the
/// tangential node position (`[axis][side][tangential index]`).
fn ghost_table(
    coeffs: &CoefficientSet,
    grid: &SpatialGrid,
    bc: &BoundaryCondition,
    t: f64,
) -> Vec<[Vec<f64>; 2]> {
    let d = grid.dimension();
    (0..d)
        .map(|axis| {
            let other = 1 - axis.min(1);
            let n_tangent = if d == 1 { 1 } else { grid.n_interior()[other] };
            let side = |end: f64| -> Vec<f64> {
                (0..n_tangent)
                    .map(|k| {
                        let mut p = [0.0; 2];
                        p[axis] = end;
                        if d == 2 {
                            p[other] = grid.axis_coordinate(other, k);
                        }
                        let a = coeffs.diffusion[axis][axis].eval(t, &p[..d]);
                        ghost_factor(bc, grid.spacing()[axis], a, t, &p[..d])
                    })
                    .collect()
            };
            [side(grid.lo()[axis]), side(grid.hi()[axis])]
        })
        .collect()
}

/// Central finite-difference matrix of `sum a_ij D_ij + sum a_i D_i + a_0`
/// at time `t`, with boundary rows eliminated through ghost values.
pub fn assemble_operator(
    coeffs: &CoefficientSet,
    grid: &SpatialGrid,
    bc: &BoundaryCondition,
    t: f64,
) -> Result<AssembledOperator> {
    coeffs.validate_at(grid, t)?;
    let d = grid.dimension();
    let n = grid.len();
    let band = if d == 1 { 1 } else { grid.n_interior()[0] + 1 };
    let mut m = BandMatrix::zeros(n, band, band);
    let ghosts = ghost_table(coeffs, grid, bc, t);
    let dims = grid.n_interior();
    let h = grid.spacing();

    // Resolve a neighbour index along `axis`; returns the node it maps to and
    // the ghost factor (1 for genuine interior neighbours).
    let resolve = |idx: [usize; 2], axis: usize, step: isize| -> ([usize; 2], f64) {
        let tangential = if d == 1 { 0 } else { idx[1 - axis] };
        let j = idx[axis] as isize + step;
        if j < 0 {
            (idx, ghosts[axis][0][tangential])
        } else if j as usize >= dims[axis] {
            (idx, ghosts[axis][1][tangential])
        } else {
            let mut out = idx;
            out[axis] = j as usize;
            (out, 1.0)
        }
    };

    for row in 0..n {
        let p = grid.node(row);
        let xi = &p[..d];
        let idx = grid.multi_index(row);
        m.add(row, row, coeffs.potential.eval(t, xi));
        for axis in 0..d {
            let a = coeffs.diffusion[axis][axis].eval(t, xi);
            let b = coeffs.drift[axis].eval(t, xi);
            let hh = h[axis];
            m.add(row, row, -2.0 * a / (hh * hh));
            for (step, w) in [(-1isize, a / (hh * hh) - b / (2.0 * hh)), (1, a / (hh * hh) + b / (2.0 * hh))] {
                let (nb, f) = resolve(idx, axis, step);
                if f != 0.0 {
                    m.add(row, grid.flat_index(nb), f * w);
                }
            }
        }
        if d == 2 {
            let a_mixed = coeffs.diffusion[0][1].eval(t, xi) + coeffs.diffusion[1][0].eval(t, xi);
            if a_mixed != 0.0 {
                let w = a_mixed / (4.0 * h[0] * h[1]);
                for (sx, sy, sign) in [(1isize, 1isize, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                    // Cross-stencil points outside the domain are dropped for
                    // every boundary kind; reflecting them would break symmetry.
                    let x = idx[0] as isize + sx;
                    let y = idx[1] as isize + sy;
                    if x < 0 || y < 0 || x as usize >= dims[0] || y as usize >= dims[1] {
                        continue;
                    }
                    m.add(row, grid.flat_index([x as usize, y as usize]), sign * w);
                }
            }
        }
    }
    Ok(AssembledOperator {
        t,
        matrix: m,
        bc: bc.kind(),
        shift_applied: 0.0,
    })
}

pub fn apply_operator(op: &AssembledOperator, x: &Field) -> Result<Field> {
    if x.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            actual: x.len(),
        });
    }
    Field::from_vector(x.grid(), op.matrix.mul_vec(x.values()))
}

/// Outcome of the discrete dissipativity audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativityAudit {
    /// Largest `<A x, x> / <x, x>` found (exact when `exact` is set).
    pub max_rayleigh: f64,
    /// `max(0, max_rayleigh)`: the H-shift making the operator dissipative.
    pub shift_needed: f64,
    /// `max_i (a_ii + sum_{j != i} |a_ij|)`, the sup-norm logarithmic norm.
    pub sup_log_norm: f64,
    pub exact: bool,
}

impl DissipativityAudit {
    /// Shift making the operator dissipative in both the H and the sup norm.
    pub fn combined_shift(&self) -> f64 {
        self.shift_needed.max(self.sup_log_norm).max(0.0)
    }
}

/// Above this size the symmetric-part eigensolve is replaced by a
/// Gershgorin bound on the symmetric part.
const EXACT_AUDIT_LIMIT: usize = 600;

pub fn dissipativity_audit(op: &AssembledOperator, samples: usize) -> DissipativityAudit {
    let a = &op.matrix;
    let n = a.n();
    let scale = a.norm_inf().max(f64::MIN_POSITIVE);
    let tiny = 64.0 * f64::EPSILON * scale * (n as f64).sqrt().max(1.0);
    let clamp = |v: f64| if v.abs() <= tiny { 0.0 } else { v };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d155);
    let mut sampled = f64::NEG_INFINITY;
    for _ in 0..samples.max(1) {
        let x = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let nx = x.norm_squared();
        if nx > 0.0 {
            sampled = sampled.max(a.mul_vec(&x).dot(&x) / nx);
        }
    }

    let (bound, exact) = if n <= EXACT_AUDIT_LIMIT {
        let dense = a.to_dense();
        let sym = (&dense + dense.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        (eig.max(), true)
    } else {
        // Gershgorin bound on the symmetric part: an upper bound only.
        let mut g = f64::NEG_INFINITY;
        for i in 0..n {
            let lo = i.saturating_sub(a.lower_bandwidth().max(a.upper_bandwidth()));
            let hi = (i + a.lower_bandwidth().max(a.upper_bandwidth()) + 1).min(n);
            let mut row = a.get(i, i);
            for j in lo..hi {
                if j != i {
                    row += 0.5 * (a.get(i, j) + a.get(j, i)).abs();
                }
            }
            g = g.max(row);
        }
        (g, false)
    };
    let max_rayleigh = clamp(if exact { bound } else { bound.max(sampled) });
    DissipativityAudit {
        max_rayleigh,
        shift_needed: max_rayleigh.max(0.0),
        sup_log_norm: clamp(a.max_row_log_norm()),
        exact,
    }
}

/// Number of times at which a non-autonomous family is audited.
pub const AUDIT_TIME_SAMPLES: usize = 33;
const SHIFT_MARGIN: f64 = 1e-9;

/// The family `t -> A(t) - shift I` on a fixed grid and boundary condition.
///
/// The shift is the largest audit shift over a time lattice and is meant to
/// be folded into the reaction as an extra linear term.
#[derive(Debug)]
pub struct OperatorFamily {
    coeffs: CoefficientSet,
    grid: Arc<SpatialGrid>,
    bc: BoundaryCondition,
    shift: f64,
    autonomous: bool,
    frozen: Mutex<Option<Arc<AssembledOperator>>>,
}

impl Clone for OperatorFamily {
    fn clone(&self) -> Self {
        Self {
            coeffs: self.coeffs.clone(),
            grid: self.grid.clone(),
            bc: self.bc.clone(),
            shift: self.shift,
            autonomous: self.autonomous,
            frozen: Mutex::new(self.frozen.lock().unwrap().clone()),
        }
    }
}

impl OperatorFamily {
    /// Audit `A(t)` on `[s, t_end]` and subtract the shift needed to make
    /// every member dissipative in both norms.
    pub fn new(
        coeffs: CoefficientSet,
        grid: Arc<SpatialGrid>,
        bc: BoundaryCondition,
        s: f64,
        t_end: f64,
    ) -> Result<Self> {
        let mut family = Self::unshifted(coeffs, grid, bc);
        let times: Vec<f64> = if family.autonomous || t_end <= s {
            vec![s]
        } else {
            (0..AUDIT_TIME_SAMPLES)
                .map(|i| s + (t_end - s) * i as f64 / (AUDIT_TIME_SAMPLES - 1) as f64)
                .collect()
        };
        let mut shift: f64 = 0.0;
        for t in times {
            let op = assemble_operator(&family.coeffs, &family.grid, &family.bc, t)?;
            shift = shift.max(dissipativity_audit(&op, 8).combined_shift());
        }
        family.shift = shift * (1.0 + SHIFT_MARGIN);
        Ok(family)
    }

    /// Family with no shift and no audit.
    pub fn unshifted(coeffs: CoefficientSet, grid: Arc<SpatialGrid>, bc: BoundaryCondition) -> Self {
        let autonomous = coeffs.is_time_independent() && bc.is_time_independent();
        Self {
            coeffs,
            grid,
            bc,
            shift: 0.0,
            autonomous,
            frozen: Mutex::new(None),
        }
    }

    /// Replace the audited shift, e.g. with a larger user-supplied one.
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        *self.frozen.get_mut().unwrap() = None;
        self
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn boundary(&self) -> &BoundaryCondition {
        &self.bc
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    /// Shifted operator at time `t`; assembled once for autonomous families.
    pub fn at(&self, t: f64) -> Result<Arc<AssembledOperator>> {
        if self.autonomous {
            let mut frozen = self.frozen.lock().unwrap();
            if let Some(op) = frozen.as_ref() {
                return Ok(op.clone());
            }
            let op = Arc::new(self.assemble_shifted(t)?);
            *frozen = Some(op.clone());
            return Ok(op);
        }
        Ok(Arc::new(self.assemble_shifted(t)?))
    }

    fn assemble_shifted(&self, t: f64) -> Result<AssembledOperator> {
        let op = assemble_operator(&self.coeffs, &self.grid, &self.bc, t)?;
        Ok(if self.shift != 0.0 { op.shifted(self.shift) } else { op })
    }
}
