//! Discrete evolution operators `U(t, s)` for `u' = A(t) u`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deterministic::TimeGrid;
use crate::discretization::{BandMatrix, Field, LinearFactor, OperatorFamily, SpatialGrid};
use crate::error::{Error, Result};
use crate::yosida::linear_yosida;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// `(I - dt A(t_{i+1}))^{-1}`; contractive step by step.
    #[default]
    ImplicitEuler,
    /// `(I - dt/2 A)^{-1} (I + dt/2 A)` with `A` at the midpoint.
    CrankNicolson,
    /// `exp(dt A_n(t_{i+1}))` with the bounded approximant `A_n`.
    YosidaProduct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorScheme {
    pub kind: SchemeKind,
    pub dt: f64,
    /// Index `n` of `A_n`; only read by `YosidaProduct`.
    pub yosida_index: f64,
}

impl PropagatorScheme {
    pub fn new(kind: SchemeKind, dt: f64, yosida_index: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidTimeGrid(format!("time step must be positive, got {dt}")));
        }
        if kind == SchemeKind::YosidaProduct && !(yosida_index > 0.0) {
            return Err(Error::SingularResolvent(yosida_index));
        }
        Ok(Self {
            kind,
            dt,
            yosida_index,
        })
    }

    pub fn implicit_euler(dt: f64) -> Self {
        Self::new(SchemeKind::ImplicitEuler, dt, 0.0).expect("positive dt")
    }

    pub fn crank_nicolson(dt: f64) -> Self {
        Self::new(SchemeKind::CrankNicolson, dt, 0.0).expect("positive dt")
    }

    pub fn yosida_product(dt: f64, n: f64) -> Self {
        Self::new(SchemeKind::YosidaProduct, dt, n).expect("positive dt and index")
    }
}

/// One step `U(t_{i+1}, t_i)`.
#[derive(Debug, Clone)]
pub enum StepOp {
    Implicit(LinearFactor),
    CrankNicolson { explicit: BandMatrix, implicit: LinearFactor },
    Dense(DMatrix<f64>),
}

impl StepOp {
    pub fn apply(&self, x: &mut DVector<f64>) {
        match self {
            StepOp::Implicit(f) => f.solve_in_place(x),
            StepOp::CrankNicolson { explicit, implicit } => {
                *x = explicit.mul_vec(x);
                implicit.solve_in_place(x);
            }
            StepOp::Dense(m) => *x = m * &*x,
        }
    }

    /// Apply the transposed step.
    pub fn apply_transpose(&self, x: &mut DVector<f64>) {
        match self {
            StepOp::Implicit(f) => f.solve_transpose_in_place(x),
            StepOp::CrankNicolson { explicit, implicit } => {
                implicit.solve_transpose_in_place(x);
                *x = explicit.transpose_mul_vec(x);
            }
            StepOp::Dense(m) => *x = m.tr_mul(x),
        }
    }
}

fn build_step(family: &OperatorFamily, scheme: &PropagatorScheme, t0: f64, t1: f64) -> Result<StepOp> {
    let dt = t1 - t0;
    match scheme.kind {
        SchemeKind::ImplicitEuler => {
            let a = family.at(t1)?;
            let m = a.matrix.shifted_scaled(1.0, -dt);
            LinearFactor::new(&m).map(StepOp::Implicit).ok_or(Error::SingularStep(t1))
        }
        SchemeKind::CrankNicolson => {
            let a = family.at(t0 + 0.5 * dt)?;
            let implicit = LinearFactor::new(&a.matrix.shifted_scaled(1.0, -0.5 * dt)).ok_or(Error::SingularStep(t1))?;
            Ok(StepOp::CrankNicolson {
                explicit: a.matrix.shifted_scaled(1.0, 0.5 * dt),
                implicit,
            })
        }
        SchemeKind::YosidaProduct => {
            let a = family.at(t1)?;
            let an = linear_yosida(&a, scheme.yosida_index)?;
            let e = (an.matrix * dt).exp();
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularStep(t1));
            }
            Ok(StepOp::Dense(e))
        }
    }
}

/// Step operators for every interval of a time grid, prepared once.
///
/// Operators are cached per `(evaluation time, dt)`; for autonomous
/// families every interval of equal length shares one operator.
#[derive(Debug, Clone)]
pub struct Stepper {
    times: Vec<f64>,
    ops: Vec<Arc<StepOp>>,
    dim: usize,
}

impl Stepper {
    pub fn new(family: &OperatorFamily, scheme: &PropagatorScheme, times: &[f64]) -> Result<Self> {
        let mut cache: HashMap<(u64, u64), Arc<StepOp>> = HashMap::new();
        let mut ops = Vec::with_capacity(times.len().saturating_sub(1));
        for w in times.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            if !(t1 > t0) {
                return Err(Error::InvalidTimeGrid("time nodes must be strictly increasing".into()));
            }
            let dt = t1 - t0;
            let key_t = if family.is_autonomous() { 0 } else { t1.to_bits() ^ t0.to_bits().rotate_left(17) };
            let key = (key_t, dt.to_bits());
            let op = match cache.get(&key) {
                Some(op) => op.clone(),
                None => {
                    let op = Arc::new(build_step(family, scheme, t0, t1)?);
                    cache.insert(key, op.clone());
                    op
                }
            };
            ops.push(op);
        }
        Ok(Self {
            times: times.to_vec(),
            ops,
            dim: family.grid().len(),
        })
    }

    pub fn for_grid(family: &OperatorFamily, scheme: &PropagatorScheme, grid: &TimeGrid) -> Result<Self> {
        Self::new(family, scheme, grid.nodes())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.ops.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `x <- U(t_{i+1}, t_i) x`
    #[inline]
    pub fn step(&self, i: usize, x: &mut DVector<f64>) {
        self.ops[i].apply(x)
    }

    /// `x <- U(t_{i+1}, t_i)^T x`
    #[inline]
    pub fn step_transpose(&self, i: usize, x: &mut DVector<f64>) {
        self.ops[i].apply_transpose(x)
    }

    /// `x <- U(t_to, t_from) x` for node indices `from <= to`.
    pub fn propagate_range(&self, from: usize, to: usize, x: &mut DVector<f64>) {
        for i in from..to {
            self.step(i, x);
        }
    }
}

/// Time nodes from `s` to `t` in steps of `dt`, with a shortened last step.
pub fn step_nodes(s: f64, t: f64, dt: f64) -> Vec<f64> {
    let mut nodes = vec![s];
    if t <= s {
        return nodes;
    }
    let n = ((t - s) / dt - 1e-9).ceil().max(1.0) as usize;
    for i in 1..n {
        nodes.push(s + i as f64 * dt);
    }
    nodes.push(t);
    nodes
}

pub fn propagate(family: &OperatorFamily, scheme: &PropagatorScheme, s: f64, t: f64, x: &Field) -> Result<Field> {
    if t < s {
        return Err(Error::NegativeInterval { s, t });
    }
    if x.len() != family.grid().len() {
        return Err(Error::DimensionMismatch {
            expected: family.grid().len(),
            actual: x.len(),
        });
    }
    if t == s {
        return Ok(x.clone());
    }
    let stepper = Stepper::new(family, scheme, &step_nodes(s, t, scheme.dt))?;
    let mut v = x.values().clone();
    stepper.propagate_range(0, stepper.steps(), &mut v);
    Field::from_vector(x.grid(), v)
}

/// Matrix of the discrete `U(t, s)`; column `j` is `k(., y_j, t, s) * cell_volume`.
#[derive(Debug, Clone)]
pub struct EvolutionKernel {
    pub s: f64,
    pub t: f64,
    pub grid: Arc<SpatialGrid>,
    pub matrix: DMatrix<f64>,
}

impl EvolutionKernel {
    pub fn apply(&self, x: &Field) -> Result<Field> {
        if x.len() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.ncols(),
                actual: x.len(),
            });
        }
        Field::from_vector(x.grid(), &self.matrix * x.values())
    }
}

pub fn evolution_matrix(family: &OperatorFamily, scheme: &PropagatorScheme, s: f64, t: f64) -> Result<EvolutionKernel> {
    if t < s {
        return Err(Error::NegativeInterval { s, t });
    }
    let n = family.grid().len();
    let mut matrix = DMatrix::identity(n, n);
    if t > s {
        let stepper = Stepper::new(family, scheme, &step_nodes(s, t, scheme.dt))?;
        for j in 0..n {
            let mut col = matrix.column(j).into_owned();
            stepper.propagate_range(0, stepper.steps(), &mut col);
            matrix.set_column(j, &col);
        }
    }
    Ok(EvolutionKernel {
        s,
        t,
        grid: family.grid().clone(),
        matrix,
    })
}

/// Gaussian envelope `M tau^{-d/2} exp(-|xi - y|^2 / (m tau))` fitted to a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelFit {
    pub m_fit: f64,
    pub big_m_fit: f64,
    pub satisfied: bool,
    /// Largest ratio of an entry to the inflated envelope.
    pub worst_ratio: f64,
}

pub const KERNEL_THRESHOLD: f64 = 1e-14;
/// Inflation applied to both the amplitude and the width of the fitted envelope.
pub const KERNEL_INFLATION: f64 = 1.1;

/// Weighted least-squares line through the per-distance maxima of `log |k|` against
/// `-r^2 / tau`, then an entrywise check against the envelope inflated by 10%.
pub fn kernel_bound_fit(kernel: &EvolutionKernel) -> Result<KernelFit> {
    let tau = kernel.t - kernel.s;
    if !(tau > 0.0) {
        return Err(Error::NegativeInterval { s: kernel.s, t: kernel.t });
    }
    let grid = &kernel.grid;
    let d = grid.dimension() as i32;
    let vol = grid.cell_volume();
    let h = grid.spacing().to_vec();
    let n = grid.len();
    let offset = |i: usize, j: usize| -> (usize, usize, f64) {
        let a = grid.multi_index(i);
        let b = grid.multi_index(j);
        let dx = a[0].abs_diff(b[0]);
        let dy = a[1].abs_diff(b[1]);
        let r2 = (dx as f64 * h[0]).powi(2) + if d == 2 { (dy as f64 * h[1]).powi(2) } else { 0.0 };
        (dx, dy, r2)
    };

    let mut maxima: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for j in 0..n {
        for i in 0..n {
            let k = kernel.matrix[(i, j)].abs() / vol;
            if k > KERNEL_THRESHOLD {
                let (dx, dy, r2) = offset(i, j);
                let e = maxima.entry((dx, dy)).or_insert((r2, 0.0));
                e.1 = e.1.max(k);
            }
        }
    }
    if maxima.is_empty() {
        return Err(Error::DegenerateKernel);
    }
    let mut pts: Vec<(f64, f64)> = maxima.values().map(|&(r2, k)| (-r2 / tau, k.ln())).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // weights proportional to the entry size so the fit tracks the peak region
    let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = pts.iter().map(|p| (p.1 - ymax).exp()).collect();
    let sw: f64 = w.iter().sum();
    let mx = pts.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = pts.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    // log k = c + (1/m) * (-r^2/tau)
    let inv_m = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - inv_m * mx;
    let m_fit = if inv_m > 0.0 { 1.0 / inv_m } else { f64::INFINITY };
    let big_m_fit = intercept.exp() * tau.powf(d as f64 / 2.0);

    let amp = KERNEL_INFLATION * big_m_fit * tau.powf(-(d as f64) / 2.0);
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let k = kernel.matrix[(i, j)].abs() / vol;
            if k > KERNEL_THRESHOLD {
                let (_, _, r2) = offset(i, j);
                let env = amp * (-r2 / (KERNEL_INFLATION * m_fit * tau)).exp();
                worst = worst.max(k / env);
            }
        }
    }
    Ok(KernelFit {
        m_fit,
        big_m_fit,
        satisfied: worst <= 1.0,
        worst_ratio: worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionAudit {
    pub sup_gain_h: f64,
    pub sup_gain_e: f64,
    /// Exact induced sup norm: largest absolute row sum.
    pub induced_e: f64,
}

/// Largest observed `|U x| / |x|` over random `x` in the H and sup norms.
pub fn contraction_audit(kernel: &EvolutionKernel, trials: usize) -> ContractionAudit {
    let n = kernel.matrix.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0_47_ac7);
    let (mut gh, mut ge) = (0.0f64, 0.0f64);
    for trial in 0..trials.max(1) {
        let x = if trial % 2 == 0 {
            DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
        } else {
            DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
        };
        let y = &kernel.matrix * &x;
        if x.norm() > 0.0 {
            gh = gh.max(y.norm() / x.norm());
            ge = ge.max(y.amax() / x.amax());
        }
    }
    let induced_e = kernel
        .matrix
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    ContractionAudit {
        sup_gain_h: gh,
        sup_gain_e: ge,
        induced_e,
    }
}
