//! Deterministic perturbed problem `y' = A(t) y + F(t, y + f)`: Picard
//! construction, Yosida cascade, semi-implicit cross-check and envelope audits.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::discretization::{BoundaryCondition, CoefficientSet, Field, OperatorFamily, SpatialGrid};
use crate::error::{Error, Result};
use crate::evolution::{PropagatorScheme, SchemeKind, Stepper};
use crate::report::{Cell, CsvTable};
use crate::stats::loglog_slope;
use crate::yosida::{solve_monotone, yosida_values, Nemytskii, ReactionPolynomial, ZetaInfo};

/// Strictly increasing time nodes `s = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    uniform: bool,
}

impl TimeGrid {
    pub fn uniform(s: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(s.is_finite() && t_end.is_finite()) || !(t_end > s) {
            return Err(Error::NegativeInterval { s, t: t_end });
        }
        if n_steps == 0 {
            return Err(Error::InvalidTimeGrid("at least one step is required".into()));
        }
        let dt = (t_end - s) / n_steps as f64;
        let mut nodes: Vec<f64> = (0..n_steps).map(|i| s + i as f64 * dt).collect();
        nodes.push(t_end);
        Ok(Self { nodes, uniform: true })
    }

    /// Uniform grid with step as close as possible to `dt`.
    pub fn with_step(s: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidTimeGrid(format!("time step must be positive, got {dt}")));
        }
        let n = ((t_end - s) / dt).round().max(1.0) as usize;
        Self::uniform(s, t_end, n)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidTimeGrid("need at least two nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidTimeGrid("nodes must be finite and strictly increasing".into()));
        }
        Ok(Self { nodes, uniform: false })
    }

    /// Steps shrinking geometrically toward `t_end`: the last step has length
    /// `last_step` and each earlier one is `ratio` times longer, capped at `max_step`.
    pub fn graded_toward_end(s: f64, t_end: f64, last_step: f64, ratio: f64, max_step: f64) -> Result<Self> {
        if !(t_end > s) {
            return Err(Error::NegativeInterval { s, t: t_end });
        }
        if !(last_step > 0.0 && ratio >= 1.0 && max_step >= last_step) {
            return Err(Error::InvalidTimeGrid("invalid grading parameters".into()));
        }
        // distances u = t_end - t from the end
        let mut us = vec![0.0];
        let mut step = last_step;
        while *us.last().unwrap() + step < t_end - s {
            let next = us.last().unwrap() + step;
            us.push(next);
            step = (step * ratio).min(max_step);
        }
        us.push(t_end - s);
        // merge a sliver at the far end into its neighbour
        let k = us.len();
        if k > 2 && us[k - 1] - us[k - 2] < 0.5 * (us[k - 2] - us[k - 3]) {
            us.remove(k - 2);
        }
        let nodes: Vec<f64> = us.iter().rev().map(|u| if *u == t_end - s { s } else { t_end - u }).collect();
        Self::from_nodes(nodes)
    }

    pub fn s(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn t(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn max_dt(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Every `factor`-th node of a uniform grid.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps() % factor != 0 {
            return Err(Error::InvalidTimeGrid(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps()
            )));
        }
        let nodes = self.nodes.iter().step_by(factor).copied().collect();
        Ok(Self {
            nodes,
            uniform: self.uniform,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    #[default]
    YosidaCascade,
    SemiImplicit,
}

/// How a trajectory was produced.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SolveMeta {
    pub k: Option<f64>,
    pub n: Option<f64>,
    pub scheme: SchemeKind,
    pub mode: Option<SolveMode>,
    pub tol: f64,
    pub max_sweeps_used: usize,
    pub cascade_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub time_grid: TimeGrid,
    pub states: Vec<Field>,
    pub meta: SolveMeta,
}

impl Trajectory {
    pub fn final_state(&self) -> &Field {
        self.states.last().unwrap()
    }

    fn check_grid(&self, other: &Trajectory) -> Result<()> {
        if self.time_grid != other.time_grid || !self.states[0].same_grid(&other.states[0]) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `max_t |self(t) - other(t)|_sup`
    pub fn sup_distance_e(&self, other: &Trajectory) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).norm_sup())
            .fold(0.0, f64::max))
    }

    /// `max_t |self(t) - other(t)|_H`
    pub fn sup_distance_h(&self, other: &Trajectory) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).norm_h())
            .fold(0.0, f64::max))
    }

    pub fn add_path(&self, f: &ForcingPath) -> Result<Trajectory> {
        if f.time_grid != self.time_grid {
            return Err(Error::GridMismatch);
        }
        Ok(Trajectory {
            time_grid: self.time_grid.clone(),
            states: self.states.iter().zip(&f.values).map(|(a, b)| a + b).collect(),
            meta: self.meta.clone(),
        })
    }
}

/// Forcing values `f(t_i)` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingPath {
    pub time_grid: TimeGrid,
    pub values: Vec<Field>,
}

impl ForcingPath {
    pub fn zero(time_grid: &TimeGrid, grid: &Arc<SpatialGrid>) -> Self {
        Self {
            time_grid: time_grid.clone(),
            values: vec![Field::zeros(grid); time_grid.nodes().len()],
        }
    }

    pub fn new(time_grid: TimeGrid, values: Vec<Field>) -> Result<Self> {
        if values.len() != time_grid.nodes().len() {
            return Err(Error::GridMismatch);
        }
        for v in &values {
            v.ensure_finite()?;
        }
        Ok(Self { time_grid, values })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm_sup() == 0.0)
    }
}

/// Operator family and reaction on a common grid, with the operator shift
/// folded into the reaction as an extra linear term.
#[derive(Debug, Clone)]
pub struct Problem {
    family: OperatorFamily,
    reaction: Nemytskii,
}

impl Problem {
    pub fn new(
        coeffs: CoefficientSet,
        grid: Arc<SpatialGrid>,
        bc: BoundaryCondition,
        poly: ReactionPolynomial,
        s: f64,
        t_end: f64,
    ) -> Result<Self> {
        let family = OperatorFamily::new(coeffs, grid.clone(), bc, s, t_end)?;
        Self::from_family(family, poly, s, t_end)
    }

    pub fn from_family(family: OperatorFamily, poly: ReactionPolynomial, s: f64, t_end: f64) -> Result<Self> {
        let shift = family.shift();
        let mut poly = poly;
        if let Some(z) = poly.supplied_zeta() {
            poly = poly.with_supplied_zeta(z + shift);
        }
        let poly = if shift != 0.0 { poly.with_linear_shift(shift) } else { poly };
        let reaction = Nemytskii::new(poly, family.grid().clone(), s, t_end)?;
        Ok(Self { family, reaction })
    }

    pub fn family(&self) -> &OperatorFamily {
        &self.family
    }

    pub fn reaction(&self) -> &Nemytskii {
        &self.reaction
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        self.family.grid()
    }

    pub fn zeta(&self) -> ZetaInfo {
        self.reaction.zeta()
    }

    /// Working shift used in every envelope.
    pub fn zeta_working(&self) -> f64 {
        self.reaction.zeta().working
    }

    pub fn stepper(&self, scheme: &PropagatorScheme, grid: &TimeGrid) -> Result<Stepper> {
        Stepper::for_grid(&self.family, scheme, grid)
    }
}

/// `gamma0 e^{b (t - t0)} + int_{t0}^t e^{b (t - r)} g(r) dr` on the grid,
/// with the integral by the trapezoid rule.
pub fn gronwall_bound(b: f64, gamma0: f64, g: &[f64], time_grid: &TimeGrid) -> Vec<f64> {
    let nodes = time_grid.nodes();
    let mut out = Vec::with_capacity(nodes.len());
    let mut integral = 0.0;
    out.push(gamma0);
    for i in 0..nodes.len() - 1 {
        let dt = nodes[i + 1] - nodes[i];
        let e = (b * dt).exp();
        integral = e * integral + 0.5 * dt * (e * g[i] + g[i + 1]);
        let t = nodes[i + 1] - nodes[0];
        out.push(gamma0 * (b * t).exp() + integral);
    }
    out
}

pub const DEFAULT_MAX_SWEEPS: usize = 200;

fn check_inputs(problem: &Problem, x: &Field, f: &ForcingPath, grid: &TimeGrid) -> Result<()> {
    x.ensure_finite()?;
    if x.len() != problem.grid().len() {
        return Err(Error::DimensionMismatch {
            expected: problem.grid().len(),
            actual: x.len(),
        });
    }
    if f.time_grid != *grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Windowed Picard iteration for the discrete mild equation
/// `y_i = U(t_i, s) x + sum_{j<i} dt_j U(t_i, t_j) F_k(t_j, y_j + f_j)`.
///
/// Each window is shorter than `1/(6k)` (but holds at least one step). The
/// discrete map is nilpotent on a window of `L` steps, so at most `L + 1`
/// sweeps are ever needed.
pub(crate) fn picard_core(
    problem: &Problem,
    stepper: &Stepper,
    k: f64,
    x: &Field,
    f: &ForcingPath,
    grid: &TimeGrid,
    tol: f64,
    max_sweeps: usize,
) -> Result<(Vec<DVector<f64>>, usize)> {
    let zeta = problem.zeta_working();
    if !(k > zeta) || !(k > 0.0) {
        return Err(Error::IndexBelowShift { k, zeta });
    }
    let nodes = grid.nodes();
    let n_steps = grid.n_steps();
    let dim = x.len();
    let reaction = problem.reaction();
    let zero_reaction = reaction.is_zero();
    let window = 1.0 / (6.0 * k);

    let mut states: Vec<DVector<f64>> = vec![x.values().clone(); n_steps + 1];
    let mut fk = vec![DVector::zeros(dim); n_steps];
    let mut arg = vec![0.0; dim];
    let mut sweeps_used = 0;
    let mut i0 = 0;
    while i0 < n_steps {
        let mut i1 = i0 + 1;
        while i1 < n_steps && nodes[i1 + 1] - nodes[i0] < window {
            i1 += 1;
        }
        for i in i0 + 1..=i1 {
            states[i] = states[i0].clone();
        }
        let mut sweep = 0;
        loop {
            sweep += 1;
            if sweep > max_sweeps {
                return Err(Error::NoConvergence {
                    what: "Picard iteration",
                    iterations: max_sweeps,
                    residual: f64::NAN,
                });
            }
            // F_k at the previous iterate
            if !zero_reaction {
                for i in i0..i1 {
                    let snap = reaction.snapshot(nodes[i]);
                    for (a, (y, fv)) in arg.iter_mut().zip(states[i].iter().zip(f.values[i].values().iter())) {
                        *a = y + fv;
                    }
                    yosida_values(&snap, k, zeta, &arg, fk[i].as_mut_slice())?;
                }
            }
            let mut change: f64 = 0.0;
            let mut y = states[i0].clone();
            for i in i0..i1 {
                if !zero_reaction {
                    y.axpy(grid.dt(i), &fk[i], 1.0);
                }
                stepper.step(i, &mut y);
                change = change.max((&y - &states[i + 1]).amax());
                states[i + 1].copy_from(&y);
            }
            if !change.is_finite() {
                return Err(Error::NoConvergence {
                    what: "Picard iteration",
                    iterations: sweep,
                    residual: change,
                });
            }
            if change <= tol {
                break;
            }
        }
        sweeps_used = sweeps_used.max(sweep);
        i0 = i1;
    }
    Ok((states, sweeps_used))
}

fn to_trajectory(grid: &TimeGrid, space: &Arc<SpatialGrid>, states: Vec<DVector<f64>>, meta: SolveMeta) -> Trajectory {
    Trajectory {
        time_grid: grid.clone(),
        states: states
            .into_iter()
            .map(|v| Field::from_vector(space, v).expect("solver keeps dimensions"))
            .collect(),
        meta,
    }
}

/// Doubly regularized problem: `F_k` with the bounded generator `A_n`.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve_regularized(
    problem: &Problem,
    k: f64,
    n: f64,
    x: &Field,
    f: &ForcingPath,
    time_grid: &TimeGrid,
    tol: f64,
    max_sweeps: usize,
) -> Result<Trajectory> {
    check_inputs(problem, x, f, time_grid)?;
    let scheme = PropagatorScheme::yosida_product(time_grid.max_dt(), n);
    let stepper = problem.stepper(&scheme, time_grid)?;
    let (states, sweeps) = picard_core(problem, &stepper, k, x, f, time_grid, tol, max_sweeps)?;
    Ok(to_trajectory(
        time_grid,
        problem.grid(),
        states,
        SolveMeta {
            k: Some(k),
            n: Some(n),
            scheme: SchemeKind::YosidaProduct,
            mode: None,
            tol,
            max_sweeps_used: sweeps,
            cascade_levels: Vec::new(),
        },
    ))
}

/// k-level problem with the scheme's propagator; steps follow `time_grid`.
pub fn mild_solve_k(
    problem: &Problem,
    k: f64,
    x: &Field,
    f: &ForcingPath,
    time_grid: &TimeGrid,
    scheme: &PropagatorScheme,
    tol: f64,
) -> Result<Trajectory> {
    check_inputs(problem, x, f, time_grid)?;
    let stepper = problem.stepper(scheme, time_grid)?;
    mild_solve_k_with(problem, &stepper, k, x, f, time_grid, scheme, tol)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn mild_solve_k_with(
    problem: &Problem,
    stepper: &Stepper,
    k: f64,
    x: &Field,
    f: &ForcingPath,
    time_grid: &TimeGrid,
    scheme: &PropagatorScheme,
    tol: f64,
) -> Result<Trajectory> {
    let (states, sweeps) = picard_core(problem, stepper, k, x, f, time_grid, tol, DEFAULT_MAX_SWEEPS)?;
    Ok(to_trajectory(
        time_grid,
        problem.grid(),
        states,
        SolveMeta {
            k: Some(k),
            n: (scheme.kind == SchemeKind::YosidaProduct).then_some(scheme.yosida_index),
            scheme: scheme.kind,
            mode: None,
            tol,
            max_sweeps_used: sweeps,
            cascade_levels: Vec::new(),
        },
    ))
}

/// Largest Yosida index the cascade may reach.
pub const CASCADE_CAP: f64 = 16384.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MildOptions {
    pub mode: SolveMode,
    /// Cascade stopping tolerance (sup distance of successive levels).
    pub tol: f64,
    /// Picard sweep tolerance.
    pub picard_tol: f64,
    /// Defaults to `2 max(1, zeta)`.
    pub k0: Option<f64>,
    /// Also solve in the other mode and compare.
    pub cross_check: bool,
}

impl Default for MildOptions {
    fn default() -> Self {
        Self {
            mode: SolveMode::YosidaCascade,
            tol: 1e-4,
            picard_tol: 1e-12,
            k0: None,
            cross_check: false,
        }
    }
}

/// Result of a Yosida cascade with every level kept for rate studies.
#[derive(Debug, Clone)]
pub struct CascadeResult {
    pub levels: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// `sup_t |y^{k_i} - y^{k_{i+1}}|_sup`
    pub distances: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn cascade_with(
    problem: &Problem,
    stepper: &Stepper,
    x: &Field,
    f: &ForcingPath,
    time_grid: &TimeGrid,
    scheme: &PropagatorScheme,
    opts: &MildOptions,
) -> Result<CascadeResult> {
    let zeta = problem.zeta_working();
    let mut k = opts.k0.unwrap_or(2.0 * zeta.max(1.0));
    let mut levels = vec![k];
    let mut trajectories = vec![mild_solve_k_with(problem, stepper, k, x, f, time_grid, scheme, opts.picard_tol)?];
    let mut distances = Vec::new();
    if problem.reaction().is_zero() {
        return Ok(CascadeResult {
            levels,
            trajectories,
            distances,
        });
    }
    loop {
        k *= 2.0;
        if k > CASCADE_CAP {
            return Err(Error::NoConvergence {
                what: "Yosida cascade",
                iterations: levels.len(),
                residual: distances.last().copied().unwrap_or(f64::NAN),
            });
        }
        let next = mild_solve_k_with(problem, stepper, k, x, f, time_grid, scheme, opts.picard_tol)?;
        let d = next.sup_distance_e(trajectories.last().unwrap())?;
        levels.push(k);
        trajectories.push(next);
        distances.push(d);
        if d <= opts.tol {
            return Ok(CascadeResult {
                levels,
                trajectories,
                distances,
            });
        }
    }
}

/// Lie splitting: `v - dt b(t_i, v + f_i) = y_i + ...` per node, then `y_{i+1} = U v`.
pub(crate) fn semi_implicit_with(
    problem: &Problem,
    stepper: &Stepper,
    x: &Field,
    f: &ForcingPath,
    time_grid: &TimeGrid,
) -> Result<Vec<DVector<f64>>> {
    let reaction = problem.reaction();
    // the raw slope bound of b (including the folded shift)
    let slope = reaction.zeta().supplied.unwrap_or(reaction.zeta().sharp).max(0.0);
    let nodes = time_grid.nodes();
    let mut states = Vec::with_capacity(nodes.len());
    let mut y = x.values().clone();
    states.push(y.clone());
    let zero_reaction = reaction.is_zero();
    for i in 0..time_grid.n_steps() {
        let dt = time_grid.dt(i);
        if !zero_reaction {
            let floor = 1.0 - dt * slope;
            if !(floor > 0.0) {
                return Err(Error::InvalidTimeGrid(format!(
                    "semi-implicit step needs dt * zeta < 1 (dt = {dt}, zeta = {slope})"
                )));
            }
            let snap = reaction.snapshot(nodes[i]);
            let fi = f.values[i].values();
            for node in 0..y.len() {
                // w = v + f_i solves w - dt b(w) = y_i + f_i
                let target = y[node] + fi[node];
                let root = solve_monotone(
                    |w| w - dt * snap.eval(node, w),
                    |w| 1.0 - dt * snap.deriv(node, w),
                    target,
                    target,
                    floor,
                    crate::yosida::RESOLVENT_TOL,
                    crate::yosida::RESOLVENT_MAX_ITER,
                )?;
                y[node] = root.value - fi[node];
            }
        }
        stepper.step(i, &mut y);
        states.push(y.clone());
    }
    Ok(states)
}

/// Mild solution of the limit problem in the chosen mode.
pub fn mild_solve(
    problem: &Problem,
    x: &Field,
    f: &ForcingPath,
    time_grid: &TimeGrid,
    scheme: &PropagatorScheme,
    opts: &MildOptions,
) -> Result<Trajectory> {
    check_inputs(problem, x, f, time_grid)?;
    let stepper = problem.stepper(scheme, time_grid)?;
    mild_solve_with(problem, &stepper, x, f, time_grid, scheme, opts)
}

pub(crate) fn mild_solve_with(
    problem: &Problem,
    stepper: &Stepper,
    x: &Field,
    f: &ForcingPath,
    time_grid: &TimeGrid,
    scheme: &PropagatorScheme,
    opts: &MildOptions,
) -> Result<Trajectory> {
    let solve = |mode: SolveMode| -> Result<Trajectory> {
        match mode {
            SolveMode::YosidaCascade => {
                let c = cascade_with(problem, stepper, x, f, time_grid, scheme, opts)?;
                let mut t = c.trajectories.into_iter().last().unwrap();
                t.meta.mode = Some(mode);
                t.meta.tol = opts.tol;
                t.meta.cascade_levels = c.levels;
                Ok(t)
            }
            SolveMode::SemiImplicit => {
                let states = semi_implicit_with(problem, stepper, x, f, time_grid)?;
                Ok(to_trajectory(
                    time_grid,
                    problem.grid(),
                    states,
                    SolveMeta {
                        scheme: scheme.kind,
                        mode: Some(mode),
                        tol: opts.tol,
                        ..SolveMeta::default()
                    },
                ))
            }
        }
    };
    let main = solve(opts.mode)?;
    if opts.cross_check {
        let other = solve(match opts.mode {
            SolveMode::YosidaCascade => SolveMode::SemiImplicit,
            SolveMode::SemiImplicit => SolveMode::YosidaCascade,
        })?;
        let distance = main.sup_distance_e(&other)?;
        let limit = mode_agreement_limit(opts.tol, time_grid);
        if distance > limit {
            return Err(Error::ModeDisagreement { distance, limit });
        }
    }
    Ok(main)
}

/// `10 (tol + dt)`: allowed sup distance between the two solve modes.
pub fn mode_agreement_limit(tol: f64, time_grid: &TimeGrid) -> f64 {
    10.0 * (tol + time_grid.max_dt())
}

/// Which side of an envelope audit is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    H,
    E,
}

/// Slack allowed on top of an a-priori envelope: `envelope (relative + c (dt + h^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackPolicy {
    pub relative: f64,
    pub discretization_constant: f64,
    pub dt: f64,
    pub h2: f64,
}

/// Discretization constant, fitted once on the Chafee–Infante runs (both
/// modes, deterministic and 100 noise paths) and frozen: no node ever
/// exceeded its envelope, so the fitted value is zero.
pub const DISCRETIZATION_CONSTANT: f64 = 0.0;
pub const RELATIVE_SLACK: f64 = 1e-8;

impl SlackPolicy {
    pub fn for_grids(time_grid: &TimeGrid, space: &SpatialGrid) -> Self {
        Self {
            relative: RELATIVE_SLACK,
            discretization_constant: DISCRETIZATION_CONSTANT,
            dt: time_grid.max_dt(),
            h2: space.max_spacing().powi(2),
        }
    }

    pub fn allowance(&self, envelope: f64) -> f64 {
        envelope.abs() * (self.relative + self.discretization_constant * (self.dt + self.h2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateRow {
    pub t: f64,
    pub lhs: f64,
    pub envelope: f64,
    pub margin: f64,
    pub pass: bool,
}

/// One inequality audited at every time node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateAudit {
    pub name: String,
    pub rows: Vec<EstimateRow>,
}

impl EstimateAudit {
    pub fn new(name: impl Into<String>, times: &[f64], lhs: &[f64], envelope: &[f64], slack: &SlackPolicy) -> Self {
        let rows = times
            .iter()
            .zip(lhs.iter().zip(envelope))
            .map(|(&t, (&l, &e))| EstimateRow {
                t,
                lhs: l,
                envelope: e,
                margin: e - l,
                pass: l <= e + slack.allowance(e),
            })
            .collect();
        Self {
            name: name.into(),
            rows,
        }
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Smallest `margin / envelope` over nodes.
    pub fn worst_relative_margin(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| if r.envelope != 0.0 { r.margin / r.envelope.abs() } else { r.margin })
            .fold(f64::INFINITY, f64::min)
    }

    /// Table with header `t,lhs,envelope,margin,pass`.
    pub fn to_csv(&self, name: impl Into<String>) -> CsvTable {
        let mut table = CsvTable::new(name, &["t", "lhs", "envelope", "margin", "pass"]);
        for r in &self.rows {
            table.push(vec![r.t.into(), r.lhs.into(), r.envelope.into(), r.margin.into(), Cell::Bool(r.pass)]);
        }
        table
    }
}

/// Log–log fit of `sup_t |y^k - y^{2k}|_H^2` against `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeRateFit {
    pub ks: Vec<f64>,
    pub squared_distances: Vec<f64>,
    pub slope: f64,
    /// Fitted constant `C` in `|y^k - y^{2k}|^2 <= C (1/k + 1/(2k))`.
    pub constant: f64,
}

pub fn cascade_rate_fit(levels: &[(f64, &Trajectory)]) -> Result<CascadeRateFit> {
    let mut ks = Vec::new();
    let mut d2 = Vec::new();
    for w in levels.windows(2) {
        let (k, a) = w[0];
        let (_, b) = w[1];
        let d = a.sup_distance_h(b)?;
        ks.push(k);
        d2.push(d * d);
    }
    let slope = loglog_slope(&ks, &d2);
    let constant = ks
        .iter()
        .zip(&d2)
        .map(|(k, d)| d / (1.5 / k))
        .fold(0.0, f64::max);
    Ok(CascadeRateFit {
        ks,
        squared_distances: d2,
        slope,
        constant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub audits: Vec<EstimateAudit>,
    pub cascade: Option<CascadeRateFit>,
}

impl EstimateReport {
    pub fn passed(&self) -> bool {
        self.audits.iter().all(EstimateAudit::passed)
    }
}

/// Norm of a field in H or sup.
pub fn field_norm(x: &Field, norm: NormKind) -> f64 {
    match norm {
        NormKind::H => x.norm_h(),
        NormKind::E => x.norm_sup(),
    }
}

/// `e^{zeta (t-s)} |x| + 3 int e^{zeta (t-r)} (|F(r, f(r))| + zeta^+ |f(r)|) dr`
pub fn growth_envelope(problem: &Problem, x: &Field, f: &ForcingPath, norm: NormKind) -> Vec<f64> {
    let zeta = problem.zeta_working();
    let reaction = problem.reaction();
    let g: Vec<f64> = f
        .time_grid
        .nodes()
        .iter()
        .zip(&f.values)
        .map(|(&t, fv)| {
            let fr = crate::yosida::eval_reaction(reaction, t, fv);
            3.0 * (field_norm(&fr, norm) + zeta.max(0.0) * field_norm(fv, norm))
        })
        .collect();
    gronwall_bound(zeta, field_norm(x, norm), &g, &f.time_grid)
}

/// `e^{zeta (t-s)} |x - z|`
pub fn lipschitz_envelope(problem: &Problem, x: &Field, z: &Field, time_grid: &TimeGrid, norm: NormKind) -> Vec<f64> {
    let zeta = problem.zeta_working();
    let d = field_norm(&(x - z), norm);
    let s = time_grid.s();
    time_grid.nodes().iter().map(|t| (zeta * (t - s)).exp() * d).collect()
}

/// Audit the growth envelopes of both trajectories of every pair and the
/// Lipschitz envelopes between them, in H and in the sup norm.
pub fn verify_estimates(
    pairs: &[(&Trajectory, &Trajectory)],
    problem: &Problem,
    f: &ForcingPath,
    slack: &SlackPolicy,
) -> Result<EstimateReport> {
    let mut audits = Vec::new();
    for (p, (a, b)) in pairs.iter().enumerate() {
        a.check_grid(b)?;
        if a.time_grid != f.time_grid {
            return Err(Error::GridMismatch);
        }
        let times = a.time_grid.nodes();
        for (norm, tag) in [(NormKind::H, "h"), (NormKind::E, "e")] {
            for (which, traj) in [("x", a), ("z", b)] {
                let lhs: Vec<f64> = traj.states.iter().map(|s| field_norm(s, norm)).collect();
                let env = growth_envelope(problem, &traj.states[0], f, norm);
                audits.push(EstimateAudit::new(format!("growth_{tag}_pair{p}_{which}"), times, &lhs, &env, slack));
            }
            let lhs: Vec<f64> = a.states.iter().zip(&b.states).map(|(u, v)| field_norm(&(u - v), norm)).collect();
            let env = lipschitz_envelope(problem, &a.states[0], &b.states[0], &a.time_grid, norm);
            audits.push(EstimateAudit::new(format!("lipschitz_{tag}_pair{p}"), times, &lhs, &env, slack));
        }
    }
    Ok(EstimateReport { audits, cascade: None })
}
