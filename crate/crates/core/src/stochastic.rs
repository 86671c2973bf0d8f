//! Additive-noise layer: cylindrical Wiener paths, stochastic convolution
//! (direct and factorized), the space-time regularity sum, pathwise SPDE
//! solves and Monte-Carlo transition estimates.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::deterministic::{
    field_norm, growth_envelope, lipschitz_envelope, mild_solve_with, EstimateAudit, ForcingPath, MildOptions,
    NormKind, Problem, SlackPolicy, TimeGrid, Trajectory,
};
use crate::discretization::{Coefficient, Field, OperatorFamily, SpatialGrid};
use crate::error::{Error, Result};
use crate::evolution::{PropagatorScheme, Stepper};
use crate::stats::mean_variance;
use crate::yosida::eval_reaction;

/// How `B(t)` acts on the noise basis.
#[derive(Clone)]
pub enum NoiseOperator {
    Zero,
    Identity,
    /// `B e_k = b_k e_k`
    Diagonal(Vec<f64>),
    /// `b_k = k^{-p}`
    PowerLaw { exponent: f64 },
    /// `b_k = |lambda_k|^{-gamma}`, `lambda_k` the discrete Dirichlet
    /// Laplacian eigenvalue of `e_k`. Positive `gamma` smooths the noise.
    Fractional { gamma: f64 },
    /// General bounded operator `(t, x) -> B(t) x`.
    Callback(Arc<dyn Fn(f64, &Field) -> Field + Send + Sync>),
}

impl fmt::Debug for NoiseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseOperator::Zero => write!(f, "Zero"),
            NoiseOperator::Identity => write!(f, "Identity"),
            NoiseOperator::Diagonal(b) => f.debug_tuple("Diagonal").field(b).finish(),
            NoiseOperator::PowerLaw { exponent } => write!(f, "PowerLaw({exponent})"),
            NoiseOperator::Fractional { gamma } => write!(f, "Fractional({gamma})"),
            NoiseOperator::Callback(_) => write!(f, "Callback(..)"),
        }
    }
}

/// Truncated cylindrical noise `B(t) dW`, `W = sum_{k <= K} beta_k e_k`,
/// on the discrete sine basis.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    grid: Arc<SpatialGrid>,
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    op: NoiseOperator,
    time_scale: Option<Coefficient>,
    weights: Option<Vec<f64>>,
    alpha: f64,
}

pub const DEFAULT_MODES: usize = 32;
pub const DEFAULT_ALPHA: f64 = 0.2;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// Discrete Dirichlet sine modes ordered by eigenvalue: nodal values
/// (H-orthonormal columns) and the eigenvalues of the unit Laplacian.
pub fn sine_basis(grid: &SpatialGrid, modes: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if modes == 0 || modes > grid.len() {
        return Err(Error::InvalidGrid(format!(
            "number of modes must be in 1..={}, got {modes}",
            grid.len()
        )));
    }
    let d = grid.dimension();
    let n = grid.n_interior();
    let mut pairs: Vec<(f64, [usize; 2])> = Vec::new();
    let n2 = if d == 2 { n[1] } else { 1 };
    for k1 in 1..=n[0] {
        for k2 in 1..=n2 {
            let k = [k1, k2];
            let key: f64 = (0..d)
                .map(|axis| {
                    let h = grid.spacing()[axis];
                    4.0 / (h * h) * (k[axis] as f64 * PI * h / (2.0 * grid.extent(axis))).sin().powi(2)
                })
                .sum();
            pairs.push((key, k));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    pairs.truncate(modes);
    let mut basis = DMatrix::zeros(grid.len(), modes);
    let mut eig = Vec::with_capacity(modes);
    for (col, (key, k)) in pairs.iter().enumerate() {
        eig.push(-key);
        for node in 0..grid.len() {
            let idx = grid.multi_index(node);
            let mut v = 1.0;
            for axis in 0..d {
                let l = grid.extent(axis);
                let x = (idx[axis] + 1) as f64 * grid.spacing()[axis];
                v *= (2.0 / l).sqrt() * (k[axis] as f64 * PI * x / l).sin();
            }
            basis[(node, col)] = v;
        }
    }
    Ok((basis, eig))
}

impl NoiseModel {
    pub fn new(grid: Arc<SpatialGrid>, modes: usize, op: NoiseOperator, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let (basis, eigenvalues) = sine_basis(&grid, modes)?;
        let weights = match &op {
            NoiseOperator::Zero => Some(vec![0.0; modes]),
            NoiseOperator::Identity => Some(vec![1.0; modes]),
            NoiseOperator::Diagonal(b) => {
                if b.len() != modes {
                    return Err(Error::DimensionMismatch {
                        expected: modes,
                        actual: b.len(),
                    });
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidField);
                }
                Some(b.clone())
            }
            NoiseOperator::PowerLaw { exponent } => Some((1..=modes).map(|k| (k as f64).powf(-exponent)).collect()),
            NoiseOperator::Fractional { gamma } => Some(eigenvalues.iter().map(|l| l.abs().powf(-gamma)).collect()),
            NoiseOperator::Callback(_) => None,
        };
        Ok(Self {
            grid,
            basis,
            eigenvalues,
            op,
            time_scale: None,
            weights,
            alpha,
        })
    }

    /// Multiply `B(t)` by a scalar time profile.
    pub fn with_time_scale(mut self, scale: Coefficient) -> Self {
        self.time_scale = Some(scale);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.basis.ncols()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_field(&self, k: usize) -> Field {
        Field::from_vector(&self.grid, self.basis.column(k).into_owned()).expect("basis matches grid")
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn operator(&self) -> &NoiseOperator {
        &self.op
    }

    /// Diagonal weights `b_k` (before the time profile), if `B` is diagonal.
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.op, NoiseOperator::Zero)
            || self.weights.as_ref().is_some_and(|w| w.iter().all(|b| *b == 0.0))
    }

    fn scale(&self, t: f64) -> f64 {
        self.time_scale.as_ref().map_or(1.0, |c| c.eval(t, &[0.0, 0.0]))
    }

    /// `B(t) sum_k c_k e_k`
    pub fn apply(&self, t: f64, coords: &[f64]) -> DVector<f64> {
        let scale = self.scale(t);
        match &self.weights {
            Some(w) => {
                let bc = DVector::from_iterator(coords.len(), coords.iter().zip(w).map(|(c, b)| c * b * scale));
                &self.basis * bc
            }
            None => {
                let x = &self.basis * DVector::from_column_slice(coords);
                let x = Field::from_vector(&self.grid, x).expect("basis matches grid");
                let NoiseOperator::Callback(b) = &self.op else {
                    unreachable!()
                };
                b(t, &x).into_values() * scale
            }
        }
    }

    /// `out += B(t) sum_k c_k e_k`; `scratch` holds `K` values.
    pub fn apply_add(&self, t: f64, coords: &[f64], out: &mut DVector<f64>, scratch: &mut DVector<f64>) {
        match &self.weights {
            Some(w) => {
                let scale = self.scale(t);
                for ((s, c), b) in scratch.iter_mut().zip(coords).zip(w) {
                    *s = c * b * scale;
                }
                out.gemv(1.0, &self.basis, scratch, 1.0);
            }
            None => *out += self.apply(t, coords),
        }
    }

    /// Columns `B(t) e_k`.
    pub fn applied_basis(&self, t: f64) -> DMatrix<f64> {
        let scale = self.scale(t);
        match &self.weights {
            Some(w) => {
                let mut m = self.basis.clone();
                for (k, b) in w.iter().enumerate() {
                    m.column_mut(k).scale_mut(b * scale);
                }
                m
            }
            None => {
                let mut m = DMatrix::zeros(self.basis.nrows(), self.modes());
                let mut coords = vec![0.0; self.modes()];
                for k in 0..self.modes() {
                    coords[k] = 1.0;
                    m.set_column(k, &self.apply(t, &coords));
                    coords[k] = 0.0;
                }
                m
            }
        }
    }
}

/// Brownian increments, one row per mode and one column per step.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub seed: u64,
    pub time_grid: TimeGrid,
    pub increments: DMatrix<f64>,
}

impl WienerPath {
    pub fn increment(&self, step: usize) -> Vec<f64> {
        self.increments.column(step).iter().copied().collect()
    }

    /// The same Brownian path on every `factor`-th node: increments are summed.
    pub fn coarsen(&self, factor: usize) -> Result<WienerPath> {
        let time_grid = self.time_grid.coarsen(factor)?;
        let steps = time_grid.n_steps();
        let mut increments = DMatrix::zeros(self.increments.nrows(), steps);
        for c in 0..steps {
            let mut target = increments.column_mut(c);
            for f in 0..factor {
                target += self.increments.column(c * factor + f);
            }
        }
        Ok(WienerPath {
            seed: self.seed,
            time_grid,
            increments,
        })
    }
}

/// Seed of path `index` under `master`: the first word of the ChaCha8 stream
/// `index` keyed by `master`, so each path depends only on `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

pub fn sample_wiener(model: &NoiseModel, time_grid: &TimeGrid, seed: u64) -> WienerPath {
    let modes = model.modes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut increments = DMatrix::zeros(modes, time_grid.n_steps());
    for step in 0..time_grid.n_steps() {
        let sd = time_grid.dt(step).sqrt();
        for k in 0..modes {
            let z: f64 = StandardNormal.sample(&mut rng);
            increments[(k, step)] = sd * z;
        }
    }
    WienerPath {
        seed,
        time_grid: time_grid.clone(),
        increments,
    }
}

/// Paths keyed by `(master_seed, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathEnsemble {
    pub master_seed: u64,
    pub n_paths: usize,
}

impl PathEnsemble {
    pub fn new(master_seed: u64, n_paths: usize) -> Self {
        Self { master_seed, n_paths }
    }

    pub fn seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64)
    }

    /// Runs `f(index, seed)` for every path on the current rayon pool and
    /// returns results in path order.
    pub fn map<T: Send>(&self, f: impl Fn(usize, u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        (0..self.n_paths).into_par_iter().map(|i| f(i, self.seed(i))).collect()
    }
}

fn check_path(model: &NoiseModel, path: &WienerPath, stepper: &Stepper) -> Result<()> {
    if path.increments.nrows() != model.modes() || path.time_grid.nodes() != stepper.times() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn noise_increments(model: &NoiseModel, path: &WienerPath) -> Vec<DVector<f64>> {
    let nodes = path.time_grid.nodes();
    (0..path.time_grid.n_steps())
        .map(|j| model.apply(nodes[j], path.increments.column(j).as_slice()))
        .collect()
}

fn meta_for(scheme: &PropagatorScheme) -> crate::deterministic::SolveMeta {
    crate::deterministic::SolveMeta {
        scheme: scheme.kind,
        ..Default::default()
    }
}

fn states_to_trajectory(path: &WienerPath, grid: &Arc<SpatialGrid>, states: Vec<DVector<f64>>, scheme: &PropagatorScheme) -> Trajectory {
    Trajectory {
        time_grid: path.time_grid.clone(),
        states: states
            .into_iter()
            .map(|v| Field::from_vector(grid, v).expect("dimensions preserved"))
            .collect(),
        meta: meta_for(scheme),
    }
}

/// `Z(t_{i+1}) = U(t_{i+1}, t_i) [Z(t_i) + B(t_i) dW_i]`
pub fn convolve_direct(family: &OperatorFamily, model: &NoiseModel, path: &WienerPath, scheme: &PropagatorScheme) -> Result<Trajectory> {
    let stepper = Stepper::for_grid(family, scheme, &path.time_grid)?;
    let states = convolve_direct_with(&stepper, model, path)?;
    Ok(states_to_trajectory(path, family.grid(), states, scheme))
}

pub(crate) fn convolve_direct_with(stepper: &Stepper, model: &NoiseModel, path: &WienerPath) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(stepper.steps() + 1);
    convolve_direct_visit(stepper, model, path, |z| out.push(z.clone()))?;
    Ok(out)
}

/// Final value `Z(T)` of the direct recursion without storing the trajectory.
pub fn convolve_direct_final(stepper: &Stepper, model: &NoiseModel, path: &WienerPath) -> Result<DVector<f64>> {
    convolve_direct_visit(stepper, model, path, |_| ())
}

fn convolve_direct_visit(
    stepper: &Stepper,
    model: &NoiseModel,
    path: &WienerPath,
    mut visit: impl FnMut(&DVector<f64>),
) -> Result<DVector<f64>> {
    check_path(model, path, stepper)?;
    let mut z = DVector::zeros(stepper.dim());
    visit(&z);
    if model.is_zero() {
        for _ in 0..stepper.steps() {
            visit(&z);
        }
        return Ok(z);
    }
    let nodes = path.time_grid.nodes();
    let mut scratch = DVector::zeros(model.modes());
    for i in 0..stepper.steps() {
        model.apply_add(nodes[i], path.increments.column(i).as_slice(), &mut z, &mut scratch);
        stepper.step(i, &mut z);
        visit(&z);
    }
    Ok(z)
}

/// `sin(pi alpha) / pi`
pub fn factorization_prefactor(alpha: f64) -> f64 {
    (PI * alpha).sin() / PI
}

/// `Z(t) = sin(pi a)/pi int U(t, sigma) (t - sigma)^{a-1} Y(sigma) d sigma`,
/// `Y(sigma) = int U(sigma, r) (sigma - r)^{-a} B(r) dW(r)`, with both
/// singular weights integrated exactly over each step.
pub fn convolve_factorized(
    family: &OperatorFamily,
    model: &NoiseModel,
    path: &WienerPath,
    scheme: &PropagatorScheme,
) -> Result<Trajectory> {
    let stepper = Stepper::for_grid(family, scheme, &path.time_grid)?;
    let states = convolve_factorized_with(&stepper, model, path, model.alpha())?;
    Ok(states_to_trajectory(path, family.grid(), states, scheme))
}

pub(crate) fn convolve_factorized_with(
    stepper: &Stepper,
    model: &NoiseModel,
    path: &WienerPath,
    alpha: f64,
) -> Result<Vec<DVector<f64>>> {
    check_alpha(alpha)?;
    check_path(model, path, stepper)?;
    let n = stepper.steps();
    let dim = stepper.dim();
    if model.is_zero() {
        return Ok(vec![DVector::zeros(dim); n + 1]);
    }
    let t = path.time_grid.nodes();
    let bdw = noise_increments(model, path);

    // Y(t_l) = sum_{j<l} c_{lj} U(t_l, t_{j+1}) B dW_j, c_{lj} the mean of (t_l - r)^{-a} on step j
    let mean_inner = |l: usize, j: usize| -> f64 {
        let a = (t[l] - t[j]).powf(1.0 - alpha);
        let b = (t[l] - t[j + 1]).max(0.0).powf(1.0 - alpha);
        (a - b) / ((1.0 - alpha) * (t[j + 1] - t[j]))
    };
    let y: Vec<DVector<f64>> = (0..=n)
        .into_par_iter()
        .map(|l| {
            let mut acc = DVector::zeros(dim);
            for j in 0..l {
                acc.axpy(mean_inner(l, j), &bdw[j], 1.0);
                stepper.step(j, &mut acc);
            }
            acc
        })
        .collect();

    // Z(t_i) = pref sum_{l<i} d_{il} U(t_i, t_{l+1}) Y(t_{l+1}), d_{il} = int_{t_l}^{t_{l+1}} (t_i - s)^{a-1} ds
    let pref = factorization_prefactor(alpha);
    let outer = |i: usize, l: usize| -> f64 {
        let a = (t[i] - t[l]).powf(alpha);
        let b = (t[i] - t[l + 1]).max(0.0).powf(alpha);
        (a - b) / alpha
    };
    let z = (0..=n)
        .into_par_iter()
        .map(|i| {
            let mut acc = DVector::zeros(dim);
            for l in 0..i {
                acc.axpy(pref * outer(i, l), &y[l + 1], 1.0);
                stepper.step(l, &mut acc);
            }
            acc
        })
        .collect();
    Ok(z)
}

/// `max_i |a_i - b_i|_H / max_i |b_i|_H`
pub fn relative_sup_distance_h(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let num = a.sup_distance_h(b)?;
    let den = b.states.iter().map(Field::norm_h).fold(0.0, f64::max);
    Ok(if den > 0.0 { num / den } else { num })
}

/// Discrete space-time regularity sum
/// `sup_xi sum_{k <= K} int_s^t (t - r)^{-2a} [U(t, r) B(r) e_k]^2(xi) dr`
/// with a divergence diagnosis from its mode tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChsEstimate {
    pub alpha: f64,
    pub value: f64,
    pub diverging: bool,
    /// `log2` of the ratio of the tail over `(K/2, K]` to the tail over `(K/4, K/2]`;
    /// the terms behave like `K^p`, so the sum diverges iff `p >= 0`.
    pub growth_exponent: f64,
    pub modes: usize,
}

pub const CHS_FIRST_STEP: f64 = 1e-7;
pub const CHS_GRADING: f64 = 1.08;

/// Grid on `[s, t]` graded geometrically toward the singular end `t`.
pub fn chs_time_grid(s: f64, t: f64) -> Result<TimeGrid> {
    TimeGrid::graded_toward_end(s, t, CHS_FIRST_STEP * (t - s), CHS_GRADING, (t - s) / 16.0)
}

/// `V_j = U(t, r_j) B(r_j) E` at every node of the grid (`r_N = t`).
fn regularity_profiles(family: &OperatorFamily, model: &NoiseModel, time_grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
    let stepper = Stepper::for_grid(family, &PropagatorScheme::implicit_euler(time_grid.max_dt()), time_grid)?;
    let n = stepper.steps();
    let dim = stepper.dim();
    let nodes = time_grid.nodes();
    // mt = U(t, r_j)^T, built backwards from the identity
    let mut mt = DMatrix::<f64>::identity(dim, dim);
    let mut out = vec![DMatrix::zeros(0, 0); n + 1];
    out[n] = model.applied_basis(nodes[n]);
    let mut col = DVector::zeros(dim);
    for j in (0..n).rev() {
        for c in 0..dim {
            col.copy_from(&mt.column(c));
            stepper.step_transpose(j, &mut col);
            mt.set_column(c, &col);
        }
        out[j] = mt.tr_mul(&model.applied_basis(nodes[j]));
    }
    Ok(out)
}

fn chs_from_profiles(profiles: &[DMatrix<f64>], time_grid: &TimeGrid, alpha: f64) -> Result<ChsEstimate> {
    check_alpha(alpha)?;
    let nodes = time_grid.nodes();
    let t = time_grid.end();
    let (dim, modes) = profiles[0].shape();
    let e = 1.0 - 2.0 * alpha;
    let mut acc = DMatrix::<f64>::zeros(dim, modes);
    for j in 0..time_grid.n_steps() {
        let ua = t - nodes[j];
        let ub = (t - nodes[j + 1]).max(0.0);
        let w = (ua.powf(e) - ub.powf(e)) / e;
        let (p, q) = (&profiles[j], &profiles[j + 1]);
        for (a, (x, y)) in acc.iter_mut().zip(p.iter().zip(q.iter())) {
            *a += 0.5 * w * (x * x + y * y);
        }
    }
    let sup_rows = |lo: usize, hi: usize| -> f64 {
        (0..dim)
            .map(|r| (lo..hi).map(|k| acc[(r, k)]).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let value = sup_rows(0, modes);
    let (q, h) = (modes / 4, modes / 2);
    let lower = sup_rows(q, h);
    let upper = sup_rows(h, modes);
    let growth_exponent = if lower > 0.0 && upper > 0.0 {
        (upper / lower).log2()
    } else if upper > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    Ok(ChsEstimate {
        alpha,
        value,
        diverging: growth_exponent >= 0.0,
        growth_exponent,
        modes,
    })
}

fn check_chs_inputs(model: &NoiseModel, s: f64, t: f64, time_grid: &TimeGrid) -> Result<()> {
    if !(t > s) {
        return Err(Error::NegativeInterval { s, t });
    }
    if time_grid.s() != s || time_grid.end() != t {
        return Err(Error::GridMismatch);
    }
    if model.modes() < 4 {
        return Err(Error::RegularityPreconditionFailed(
            "the tail diagnosis needs at least 4 noise modes".into(),
        ));
    }
    Ok(())
}

pub fn chs_estimate(
    family: &OperatorFamily,
    model: &NoiseModel,
    s: f64,
    t: f64,
    alpha: f64,
    time_grid: &TimeGrid,
) -> Result<ChsEstimate> {
    check_alpha(alpha)?;
    Ok(chs_sweep(family, model, s, t, &[alpha], time_grid)?.remove(0))
}

/// `chs_estimate` at several exponents sharing one set of propagated profiles.
pub fn chs_sweep(
    family: &OperatorFamily,
    model: &NoiseModel,
    s: f64,
    t: f64,
    alphas: &[f64],
    time_grid: &TimeGrid,
) -> Result<Vec<ChsEstimate>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    check_chs_inputs(model, s, t, time_grid)?;
    let profiles = regularity_profiles(family, model, time_grid)?;
    alphas.iter().map(|&a| chs_from_profiles(&profiles, time_grid, a)).collect()
}

/// One pathwise solve `X = Y + Z`.
#[derive(Debug, Clone)]
pub struct SpdeSample {
    pub seed: u64,
    pub z: Trajectory,
    pub y: Trajectory,
    pub x: Trajectory,
}

/// Pathwise solver with the propagator and regularity check done once.
#[derive(Debug)]
pub struct SpdeSolver {
    problem: Problem,
    model: NoiseModel,
    time_grid: TimeGrid,
    scheme: PropagatorScheme,
    opts: MildOptions,
    stepper: Stepper,
    regularity: Option<ChsEstimate>,
}

impl SpdeSolver {
    pub fn new(
        problem: Problem,
        model: NoiseModel,
        time_grid: TimeGrid,
        scheme: PropagatorScheme,
        opts: MildOptions,
    ) -> Result<Self> {
        if !Arc::ptr_eq(problem.grid(), model.grid()) && **problem.grid() != **model.grid() {
            return Err(Error::GridMismatch);
        }
        let regularity = if model.is_zero() {
            None
        } else {
            let (s, t) = (time_grid.s(), time_grid.end());
            let chs = chs_estimate(problem.family(), &model, s, t, model.alpha(), &chs_time_grid(s, t)?)?;
            if chs.diverging {
                return Err(Error::RegularityPreconditionFailed(format!(
                    "space-time regularity sum diverges at alpha = {} (tail exponent {:.3})",
                    chs.alpha, chs.growth_exponent
                )));
            }
            Some(chs)
        };
        let stepper = problem.stepper(&scheme, &time_grid)?;
        Ok(Self {
            problem,
            model,
            time_grid,
            scheme,
            opts,
            stepper,
            regularity,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }

    pub fn regularity(&self) -> Option<&ChsEstimate> {
        self.regularity.as_ref()
    }

    pub fn sample_path(&self, seed: u64) -> WienerPath {
        sample_wiener(&self.model, &self.time_grid, seed)
    }

    pub fn convolution(&self, path: &WienerPath) -> Result<Trajectory> {
        let states = convolve_direct_with(&self.stepper, &self.model, path)?;
        Ok(states_to_trajectory(path, self.problem.grid(), states, &self.scheme))
    }

    /// Solve with a precomputed convolution `z` of the path.
    pub fn solve_with_convolution(&self, x: &Field, z: &Trajectory, seed: u64) -> Result<SpdeSample> {
        let f = ForcingPath::new(z.time_grid.clone(), z.states.clone())?;
        let reaction = self.problem.reaction();
        for (t, zv) in self.time_grid.nodes().iter().zip(&z.states) {
            if !eval_reaction(reaction, *t, zv).is_finite() {
                return Err(Error::RegularityPreconditionFailed(format!(
                    "reaction of the stochastic convolution is not finite at t = {t}"
                )));
            }
        }
        let y = mild_solve_with(&self.problem, &self.stepper, x, &f, &self.time_grid, &self.scheme, &self.opts)?;
        let x_traj = y.add_path(&f)?;
        Ok(SpdeSample {
            seed,
            z: z.clone(),
            y,
            x: x_traj,
        })
    }

    pub fn solve(&self, x: &Field, path: &WienerPath) -> Result<SpdeSample> {
        let z = self.convolution(path)?;
        self.solve_with_convolution(x, &z, path.seed)
    }

    /// Pathwise growth audits (H and sup) for one sample.
    pub fn growth_audits(&self, sample: &SpdeSample, slack: &SlackPolicy) -> Result<Vec<EstimateAudit>> {
        let f = ForcingPath::new(sample.z.time_grid.clone(), sample.z.states.clone())?;
        let times = self.time_grid.nodes();
        let mut out = Vec::new();
        for (norm, tag) in [(NormKind::H, "h"), (NormKind::E, "e")] {
            let mut env = growth_envelope(&self.problem, &sample.x.states[0], &f, norm);
            for (e, z) in env.iter_mut().zip(&sample.z.states) {
                *e += field_norm(z, norm);
            }
            let lhs: Vec<f64> = sample.x.states.iter().map(|s| field_norm(s, norm)).collect();
            out.push(EstimateAudit::new(format!("growth_{tag}"), times, &lhs, &env, slack));
        }
        Ok(out)
    }

    /// Pathwise Lipschitz audits between two samples on a common path.
    pub fn lipschitz_audits(&self, a: &SpdeSample, b: &SpdeSample, slack: &SlackPolicy) -> Result<Vec<EstimateAudit>> {
        if a.seed != b.seed {
            return Err(Error::GridMismatch);
        }
        let times = self.time_grid.nodes();
        let mut out = Vec::new();
        for (norm, tag) in [(NormKind::H, "h"), (NormKind::E, "e")] {
            let env = lipschitz_envelope(&self.problem, &a.x.states[0], &b.x.states[0], &self.time_grid, norm);
            let lhs: Vec<f64> = a
                .x
                .states
                .iter()
                .zip(&b.x.states)
                .map(|(u, v)| field_norm(&(u - v), norm))
                .collect();
            out.push(EstimateAudit::new(format!("lipschitz_{tag}"), times, &lhs, &env, slack));
        }
        Ok(out)
    }
}

pub fn spde_solve(
    problem: &Problem,
    model: &NoiseModel,
    x: &Field,
    time_grid: &TimeGrid,
    scheme: &PropagatorScheme,
    opts: &MildOptions,
    path: &WienerPath,
) -> Result<Trajectory> {
    let solver = SpdeSolver::new(problem.clone(), model.clone(), time_grid.clone(), *scheme, opts.clone())?;
    Ok(solver.solve(x, path)?.x)
}

/// Consecutive-solve distances of a generalized solve and their envelopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyCertificate {
    /// `sup_t |X_{x_{n+1}}(t) - X_{x_n}(t)|_H`
    pub distances: Vec<f64>,
    /// `e^{zeta (T - s)} |x_{n+1} - x_n|_H`
    pub envelopes: Vec<f64>,
}

/// Solves along `x_n -> x` on one path; fails unless every consecutive
/// distance stays inside its Lipschitz envelope and the data approach `x`.
pub fn generalized_solve(
    solver: &SpdeSolver,
    x: &Field,
    approximating_sequence: &[Field],
    path: &WienerPath,
    slack: &SlackPolicy,
) -> Result<(Trajectory, CauchyCertificate)> {
    if approximating_sequence.is_empty() {
        return Err(Error::SequenceNotCauchy("empty approximating sequence".into()));
    }
    let gaps: Vec<f64> = approximating_sequence.iter().map(|xn| (xn - x).norm_h()).collect();
    if gaps.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)) {
        return Err(Error::SequenceNotCauchy(format!("distances to the limit are not decreasing: {gaps:?}")));
    }
    let z = solver.convolution(path)?;
    let zeta = solver.problem.zeta_working();
    let span = solver.time_grid.end() - solver.time_grid.s();
    let mut prev: Option<Trajectory> = None;
    let mut cert = CauchyCertificate {
        distances: Vec::new(),
        envelopes: Vec::new(),
    };
    for (i, xn) in approximating_sequence.iter().enumerate() {
        let sample = solver.solve_with_convolution(xn, &z, path.seed)?;
        if let Some(p) = &prev {
            let d = sample.x.sup_distance_h(p)?;
            let env = (zeta * span).exp() * (xn - &approximating_sequence[i - 1]).norm_h();
            if d > env + slack.allowance(env) {
                return Err(Error::SequenceNotCauchy(format!(
                    "solve {i}: distance {d:e} exceeds envelope {env:e}"
                )));
            }
            cert.distances.push(d);
            cert.envelopes.push(env);
        }
        prev = Some(sample.x);
    }
    Ok((prev.unwrap(), cert))
}

/// Test functional for transition estimates.
#[derive(Debug, Clone)]
pub enum Functional {
    Constant(f64),
    /// `<u, e>_H`
    Inner(Field),
    /// `tanh(<u, e>_H)`: bounded by 1, Lipschitz with constant `|e|_H`.
    BoundedInner(Field),
}

impl Functional {
    pub fn eval(&self, u: &Field) -> f64 {
        match self {
            Functional::Constant(c) => *c,
            Functional::Inner(e) => u.inner_h(e),
            Functional::BoundedInner(e) => u.inner_h(e).tanh(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

pub fn summarize(values: &[f64]) -> TransitionEstimate {
    let (mean, var) = mean_variance(values);
    TransitionEstimate {
        estimate: mean,
        std_error: (var / values.len() as f64).sqrt(),
        n_paths: values.len(),
    }
}

/// `P_{s,t} phi(x) = E phi(X_{s,x}(t))` at the final grid time.
pub fn transition_estimate(
    solver: &SpdeSolver,
    x: &Field,
    phi: &Functional,
    ensemble: &PathEnsemble,
) -> Result<TransitionEstimate> {
    let values = ensemble.map(|_, seed| {
        let sample = solver.solve(x, &solver.sample_path(seed))?;
        Ok(phi.eval(sample.x.final_state()))
    })?;
    Ok(summarize(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deterministic::{mild_solve, SolveMode};
    use crate::discretization::{build_grid, BoundaryCondition, CoefficientSet};
    use crate::evolution::propagate;
    use crate::yosida::ReactionPolynomial;

    fn setup(n: usize, modes: usize, op: NoiseOperator) -> (OperatorFamily, NoiseModel) {
        let g = Arc::new(build_grid(0.0, PI, n, 1).unwrap());
        let fam =
            OperatorFamily::new(CoefficientSet::laplacian(1, 1.0), g.clone(), BoundaryCondition::Dirichlet, 0.0, 1.0)
                .unwrap();
        (fam, NoiseModel::new(g, modes, op, 0.2).unwrap())
    }

    #[test]
    fn sine_basis_is_orthonormal_eigenbasis() {
        for g in [build_grid(0.0, PI, 20, 1).unwrap(), SpatialGrid::new(&[0.0, 0.0], &[1.0, 2.0], &[6, 7]).unwrap()] {
            let g = Arc::new(g);
            let (e, lam) = sine_basis(&g, 12).unwrap();
            let gram = e.tr_mul(&e) * g.cell_volume();
            assert!((gram - DMatrix::identity(12, 12)).amax() < 1e-10);
            let fam =
                OperatorFamily::new(CoefficientSet::laplacian(g.dimension(), 1.0), g.clone(), BoundaryCondition::Dirichlet, 0.0, 1.0)
                    .unwrap();
            let a = fam.at(0.0).unwrap().to_dense();
            for k in 0..12 {
                let v = e.column(k);
                assert!((&a * v - v * lam[k]).amax() < 1e-8 * lam[k].abs());
            }
            assert!(lam.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        }
    }

    #[test]
    fn alpha_range_is_enforced() {
        let g = Arc::new(build_grid(0.0, PI, 8, 1).unwrap());
        for a in [0.0, 0.5, 0.7, -0.1] {
            assert!(matches!(
                NoiseModel::new(g.clone(), 4, NoiseOperator::Identity, a),
                Err(Error::AlphaOutOfRange(_))
            ));
        }
        assert!((factorization_prefactor(0.5) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn wiener_paths_are_reproducible_and_centered() {
        let (_, model) = setup(8, 4, NoiseOperator::Identity);
        let tg = TimeGrid::uniform(0.0, 1.0, 16).unwrap();
        assert_eq!(sample_wiener(&model, &tg, 7), sample_wiener(&model, &tg, 7));
        assert_ne!(sample_wiener(&model, &tg, 7), sample_wiener(&model, &tg, 8));
        let paths = 10_000;
        let ens = PathEnsemble::new(3, paths);
        let draws: Vec<WienerPath> = ens.map(|_, s| Ok(sample_wiener(&model, &tg, s))).unwrap();
        let dt = tg.dt(0);
        for step in [0, 15] {
            for k in 0..4 {
                let xs: Vec<f64> = draws.iter().map(|p| p.increments[(k, step)]).collect();
                let (m, v) = mean_variance(&xs);
                assert!(m.abs() <= 4.0 * (dt / paths as f64).sqrt());
                assert!((v / dt - 1.0).abs() < 0.06);
            }
            let a: Vec<f64> = draws.iter().map(|p| p.increments[(0, step)]).collect();
            let b: Vec<f64> = draws.iter().map(|p| p.increments[(1, step)]).collect();
            let c = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / paths as f64 / dt;
            assert!(c.abs() <= 4.0 / (paths as f64).sqrt());
        }
    }

    #[test]
    fn ensemble_order_is_thread_independent() {
        let ens = PathEnsemble::new(11, 64);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| ens.map(|i, s| Ok((i, s)))).unwrap();
        let b = four.install(|| ens.map(|i, s| Ok((i, s)))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_gives_zero_convolution() {
        let (fam, model) = setup(8, 4, NoiseOperator::Zero);
        let tg = TimeGrid::uniform(0.0, 1.0, 32).unwrap();
        let path = sample_wiener(&model, &tg, 1);
        let s = PropagatorScheme::implicit_euler(tg.max_dt());
        for z in [convolve_direct(&fam, &model, &path, &s).unwrap(), convolve_factorized(&fam, &model, &path, &s).unwrap()] {
            assert!(z.states.iter().all(|v| v.norm_sup() == 0.0));
        }
    }

    #[test]
    fn direct_convolution_matches_quadratic_sum() {
        let (fam, model) = setup(10, 6, NoiseOperator::PowerLaw { exponent: 0.5 });
        let tg = TimeGrid::uniform(0.0, 0.5, 20).unwrap();
        let path = sample_wiener(&model, &tg, 5);
        let s = PropagatorScheme::implicit_euler(tg.max_dt());
        let z = convolve_direct(&fam, &model, &path, &s).unwrap();
        // oracle: sum_{j<i} U(t_i, t_j) B dW_j, with U(t_i, t_j) applied from scratch
        let t = tg.nodes();
        for i in [1, 7, 20] {
            let mut acc = Field::zeros(fam.grid());
            for j in 0..i {
                let bdw = Field::from_vector(fam.grid(), model.apply(t[j], path.increments.column(j).as_slice())).unwrap();
                acc = &acc + &propagate(&fam, &s, t[j], t[i], &bdw).unwrap();
            }
            assert!((&acc - &z.states[i]).norm_sup() < 1e-12);
        }
    }

    #[test]
    fn factorized_weights_reproduce_identity() {
        // with U = I, the discrete double weights sum to the Beta identity as dt -> 0
        let alpha = 0.2;
        let n = 512;
        let t: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let j = 100;
        let mut total = 0.0;
        for l in j..n {
            let inner = ((t[l + 1] - t[j]).powf(1.0 - alpha) - (t[l + 1] - t[j + 1]).powf(1.0 - alpha))
                / ((1.0 - alpha) * (t[j + 1] - t[j]));
            let outer = ((t[n] - t[l]).powf(alpha) - (t[n] - t[l + 1]).powf(alpha)) / alpha;
            total += factorization_prefactor(alpha) * inner * outer;
        }
        assert!((total - 1.0).abs() < 0.05, "{total}");
    }

    #[test]
    fn factorized_agrees_with_direct_and_improves() {
        let (fam, model) = setup(16, 8, NoiseOperator::Identity);
        let mut errs = Vec::new();
        // the same Brownian path sampled on both grids
        let fine = TimeGrid::uniform(0.0, 1.0, 256).unwrap();
        let fine_path = sample_wiener(&model, &fine, 9);
        for steps in [64, 256] {
            let path = fine_path.coarsen(256 / steps).unwrap();
            let tg = path.time_grid.clone();
            let s = PropagatorScheme::implicit_euler(tg.max_dt());
            let d = convolve_direct(&fam, &model, &path, &s).unwrap();
            let f = convolve_factorized(&fam, &model, &path, &s).unwrap();
            errs.push(relative_sup_distance_h(&f, &d).unwrap());
        }
        assert!(errs[1] < errs[0], "{errs:?}");
        assert!(errs[1] < 0.1, "{errs:?}");
    }

    #[test]
    fn regularity_threshold_in_one_dimension() {
        let (fam, model) = setup(255, 32, NoiseOperator::Identity);
        let tg = chs_time_grid(0.0, 1.0).unwrap();
        let r = chs_sweep(&fam, &model, 0.0, 1.0, &[0.15, 0.2, 0.23, 0.27, 0.3], &tg).unwrap();
        let flags: Vec<bool> = r.iter().map(|c| c.diverging).collect();
        assert_eq!(flags, vec![false, false, false, true, true], "{r:?}");
        assert!((r[4].growth_exponent - 0.2).abs() <= 0.1, "{r:?}");
        let smooth = NoiseModel::new(model.grid().clone(), 32, NoiseOperator::PowerLaw { exponent: 1.0 }, 0.3).unwrap();
        let c = chs_estimate(&fam, &smooth, 0.0, 1.0, 0.3, &tg).unwrap();
        assert!(!c.diverging, "{c:?}");
    }

    #[test]
    fn regularity_sum_matches_closed_form() {
        // diagonal case: sum_k b_k^2 e_k(xi)^2 int_0^1 u^{-2a} e^{2 lambda_k u} du
        let (fam, model) = setup(31, 8, NoiseOperator::Identity);
        let tg = chs_time_grid(0.0, 1.0).unwrap();
        let alpha = 0.2;
        let c = chs_estimate(&fam, &model, 0.0, 1.0, alpha, &tg).unwrap();
        let fine = 200_000;
        let mut best: f64 = 0.0;
        let e = model.basis();
        let ints: Vec<f64> = model
            .eigenvalues()
            .iter()
            .map(|&l| {
                // substitution u = v^{1/(1-2a)} removes the singularity
                let p = 1.0 / (1.0 - 2.0 * alpha);
                (0..fine)
                    .map(|i| {
                        let v = (i as f64 + 0.5) / fine as f64;
                        p * (2.0 * l * v.powf(p)).exp() / fine as f64
                    })
                    .sum()
            })
            .collect();
        for r in 0..e.nrows() {
            best = best.max((0..8).map(|k| e[(r, k)].powi(2) * ints[k]).sum());
        }
        // implicit Euler on the graded grid decays slightly slower than the exponential
        assert!((c.value / best - 1.0).abs() < 0.05, "{} vs {best}", c.value);
    }

    fn ci_problem(n: usize, poly: ReactionPolynomial) -> Problem {
        let g = Arc::new(build_grid(0.0, PI, n, 1).unwrap());
        Problem::new(CoefficientSet::laplacian(1, 1.0), g, BoundaryCondition::Dirichlet, poly, 0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_noise_solve_is_deterministic_solve() {
        let p = ci_problem(16, ReactionPolynomial::from_constants(&[0.0, 1.0, 0.0, 1.0]).unwrap());
        let model = NoiseModel::new(p.grid().clone(), 8, NoiseOperator::Zero, 0.2).unwrap();
        let tg = TimeGrid::uniform(0.0, 1.0, 100).unwrap();
        let scheme = PropagatorScheme::implicit_euler(0.01);
        let opts = MildOptions {
            mode: SolveMode::SemiImplicit,
            ..MildOptions::default()
        };
        let x = Field::from_fn(p.grid(), |q| 0.5 * q[0].sin());
        let path = sample_wiener(&model, &tg, 1);
        let a = spde_solve(&p, &model, &x, &tg, &scheme, &opts, &path).unwrap();
        let b = mild_solve(&p, &x, &ForcingPath::zero(&tg, p.grid()), &tg, &scheme, &opts).unwrap();
        assert!(a.sup_distance_e(&b).unwrap() == 0.0);
    }

    #[test]
    fn zero_reaction_solve_is_propagation_plus_noise() {
        let p = ci_problem(16, ReactionPolynomial::zero());
        let model = NoiseModel::new(p.grid().clone(), 8, NoiseOperator::Identity, 0.2).unwrap();
        let tg = TimeGrid::uniform(0.0, 1.0, 100).unwrap();
        let scheme = PropagatorScheme::implicit_euler(0.01);
        let solver = SpdeSolver::new(p.clone(), model.clone(), tg.clone(), scheme, MildOptions::default()).unwrap();
        let x = Field::from_fn(p.grid(), |q| q[0].sin());
        let path = solver.sample_path(4);
        let sample = solver.solve(&x, &path).unwrap();
        let z = convolve_direct(p.family(), &model, &path, &scheme).unwrap();
        let ux = propagate(p.family(), &scheme, 0.0, 1.0, &x).unwrap();
        assert!((sample.x.final_state() - &(&ux + z.final_state())).norm_sup() < 1e-10);
    }

    #[test]
    fn divergent_noise_is_rejected() {
        let p = ci_problem(127, ReactionPolynomial::zero());
        let model = NoiseModel::new(p.grid().clone(), 32, NoiseOperator::Identity, 0.3).unwrap();
        let tg = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        let r = SpdeSolver::new(p, model, tg, PropagatorScheme::implicit_euler(0.1), MildOptions::default());
        assert!(matches!(r, Err(Error::RegularityPreconditionFailed(_))));
    }

    #[test]
    fn pathwise_envelopes_and_generalized_limit() {
        let p = ci_problem(16, ReactionPolynomial::from_constants(&[0.0, 1.0, 0.0, 1.0]).unwrap());
        let model = NoiseModel::new(p.grid().clone(), 8, NoiseOperator::Identity, 0.2).unwrap();
        let tg = TimeGrid::uniform(0.0, 1.0, 200).unwrap();
        let scheme = PropagatorScheme::implicit_euler(tg.max_dt());
        let opts = MildOptions {
            mode: SolveMode::SemiImplicit,
            ..MildOptions::default()
        };
        let solver = SpdeSolver::new(p.clone(), model, tg.clone(), scheme, opts).unwrap();
        let slack = SlackPolicy::for_grids(&tg, p.grid());
        let x = Field::from_fn(p.grid(), |q| 0.5 * q[0].sin());
        let z0 = Field::from_fn(p.grid(), |q| 0.5 * q[0].sin() - 0.3 * (3.0 * q[0]).sin());
        for seed in 0..5 {
            let path = solver.sample_path(seed);
            let a = solver.solve(&x, &path).unwrap();
            let b = solver.solve(&z0, &path).unwrap();
            for audit in solver.growth_audits(&a, &slack).unwrap().iter().chain(&solver.lipschitz_audits(&a, &b, &slack).unwrap()) {
                assert!(audit.passed(), "{} {}", audit.name, audit.worst_relative_margin());
            }
        }
        let e1 = Field::from_fn(p.grid(), |q| (2.0 / PI).sqrt() * q[0].sin());
        let seq: Vec<Field> = (1..6).map(|n| x.axpy(1.0 / n as f64, &e1)).collect();
        let path = solver.sample_path(3);
        let (_, cert) = generalized_solve(&solver, &x, &seq, &path, &slack).unwrap();
        assert_eq!(cert.distances.len(), 4);
        let same = vec![x.clone(); 3];
        let (t, cert) = generalized_solve(&solver, &x, &same, &path, &slack).unwrap();
        assert!(cert.distances.iter().all(|d| *d == 0.0));
        assert!(t.sup_distance_e(&solver.solve(&x, &path).unwrap().x).unwrap() == 0.0);
        let bad = vec![x.clone(), x.axpy(1.0, &e1)];
        assert!(matches!(generalized_solve(&solver, &x, &bad, &path, &slack), Err(Error::SequenceNotCauchy(_))));
    }

    #[test]
    fn transition_examples() {
        let p = ci_problem(16, ReactionPolynomial::zero());
        let model = NoiseModel::new(p.grid().clone(), 8, NoiseOperator::Identity, 0.2).unwrap();
        let tg = TimeGrid::uniform(0.0, 0.5, 50).unwrap();
        let scheme = PropagatorScheme::implicit_euler(tg.max_dt());
        let solver = SpdeSolver::new(p.clone(), model.clone(), tg, scheme, MildOptions::default()).unwrap();
        let x = Field::from_fn(p.grid(), |q| q[0].sin());
        let ens = PathEnsemble::new(17, 400);
        let one = transition_estimate(&solver, &x, &Functional::Constant(1.0), &ens).unwrap();
        assert_eq!((one.estimate, one.std_error), (1.0, 0.0));
        let e1 = model.basis_field(0);
        let lin = transition_estimate(&solver, &x, &Functional::Inner(e1.clone()), &ens).unwrap();
        let exact = propagate(p.family(), &scheme, 0.0, 0.5, &x).unwrap().inner_h(&e1);
        assert!((lin.estimate - exact).abs() <= 4.0 * lin.std_error, "{lin:?} {exact}");
        let bounded = transition_estimate(&solver, &x, &Functional::BoundedInner(e1), &ens).unwrap();
        assert!(bounded.estimate.abs() <= 1.0 + 4.0 * bounded.std_error);
    }
}
