//! Polynomial Nemytskii reaction, its resolvent `J_k`, the regularized map
//! `F_k = F(J_k)` and the linear approximants `A_n = n A (nI - A)^{-1}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::discretization::{AssembledOperator, Coefficient, Field, SpatialGrid};
use crate::error::{Error, Result};

/// `b(t, xi, s) = -C_{2m+1} s^{2m+1} + sum_{k <= 2m} C_k s^k`, plus an optional
/// extra linear term `shift * s` carrying an operator shift.
#[derive(Debug, Clone)]
pub struct ReactionPolynomial {
    /// `C_0 .. C_{2m+1}`; empty for the zero reaction.
    coeffs: Vec<Coefficient>,
    leading_floor: f64,
    supplied_zeta: Option<f64>,
    linear_shift: f64,
}

impl ReactionPolynomial {
    /// `coeffs` lists `C_0 .. C_{2m+1}`, so its length must be even.
    pub fn new(coeffs: Vec<Coefficient>, leading_floor: f64) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() % 2 != 0 {
            return Err(Error::InvalidReaction(format!(
                "expected C_0..C_(2m+1) (an even number of coefficients), got {}",
                coeffs.len()
            )));
        }
        if !(leading_floor > 0.0) {
            return Err(Error::InvalidReaction(format!(
                "leading floor must be positive, got {leading_floor}"
            )));
        }
        Ok(Self {
            coeffs,
            leading_floor,
            supplied_zeta: None,
            linear_shift: 0.0,
        })
    }

    /// Constant coefficients; the floor defaults to half the leading one.
    pub fn from_constants(c: &[f64]) -> Result<Self> {
        let floor = c.last().copied().unwrap_or(0.0) * 0.5;
        Self::new(c.iter().map(|&v| Coefficient::constant(v)).collect(), floor)
    }

    /// `F = 0`.
    pub fn zero() -> Self {
        Self {
            coeffs: Vec::new(),
            leading_floor: 0.0,
            supplied_zeta: None,
            linear_shift: 0.0,
        }
    }

    /// Use `zeta` instead of the sharp shift (must not be smaller).
    pub fn with_supplied_zeta(mut self, zeta: f64) -> Self {
        self.supplied_zeta = Some(zeta);
        self
    }

    /// Add `shift * s`; used to absorb the operator audit shift.
    pub fn with_linear_shift(mut self, shift: f64) -> Self {
        self.linear_shift += shift;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Coefficient::is_zero) && self.linear_shift == 0.0
    }

    /// Degree `2m + 1`, or 0 for the zero reaction.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading_floor(&self) -> f64 {
        self.leading_floor
    }

    pub fn supplied_zeta(&self) -> Option<f64> {
        self.supplied_zeta
    }

    pub fn linear_shift(&self) -> f64 {
        self.linear_shift
    }

    pub fn coefficients(&self) -> &[Coefficient] {
        &self.coeffs
    }

    pub fn is_time_independent(&self) -> bool {
        self.coeffs.iter().all(Coefficient::is_time_independent)
    }

    fn is_space_independent(&self) -> bool {
        self.coeffs.iter().all(Coefficient::is_space_independent)
    }

    /// Signed ascending polynomial coefficients at one point.
    fn signed_coeffs(&self, t: f64, xi: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let deg = self.degree();
        for (k, c) in self.coeffs.iter().enumerate() {
            let v = c.eval(t, xi);
            out.push(if k == deg { -v } else { v });
        }
        if self.linear_shift != 0.0 {
            while out.len() < 2 {
                out.push(0.0);
            }
            out[1] += self.linear_shift;
        }
    }

    pub fn eval_scalar(&self, t: f64, xi: &[f64], s: f64) -> f64 {
        let mut c = Vec::new();
        self.signed_coeffs(t, xi, &mut c);
        horner(&c, s)
    }

    fn check_leading(&self, t: f64, xi: &[f64]) -> Result<()> {
        if let Some(c) = self.coeffs.last() {
            let v = c.eval(t, xi);
            if !(v >= self.leading_floor) {
                return Err(Error::LeadingCoefficientViolation {
                    t,
                    value: v,
                    floor: self.leading_floor,
                });
            }
        }
        Ok(())
    }
}

#[inline]
fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * s + v)
}

#[inline]
fn horner_deriv(c: &[f64], s: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..c.len()).rev() {
        acc = acc * s + k as f64 * c[k];
    }
    acc
}

/// Real roots (and near-real candidates) of an ascending-coefficient polynomial.
fn real_root_candidates(c: &[f64]) -> Vec<f64> {
    let mut c = c.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    let deg = c.len() - 1;
    match deg {
        0 => Vec::new(),
        1 => vec![-c[0] / c[1]],
        _ => {
            let lead = c[deg];
            let mut comp = DMatrix::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -c[i] / lead;
            }
            // Every real part is a harmless extra candidate: evaluating the
            // objective at more real points never overshoots the maximum.
            comp.complex_eigenvalues()
                .iter()
                .map(|z| {
                    let mut x = z.re;
                    for _ in 0..4 {
                        let d = horner_deriv(&c, x);
                        if d == 0.0 {
                            break;
                        }
                        let next = x - horner(&c, x) / d;
                        if !next.is_finite() || (next - x).abs() > 1e-3 * (1.0 + x.abs()) {
                            break;
                        }
                        x = next;
                    }
                    x
                })
                .collect()
        }
    }
}

/// `max_s p'(s)` for a polynomial with negative odd leading term (or degree <= 1).
fn max_slope(c: &[f64]) -> f64 {
    match c.len() {
        0 | 1 => 0.0,
        2 => c[1],
        _ => {
            let d1: Vec<f64> = (1..c.len()).map(|k| k as f64 * c[k]).collect();
            let d2: Vec<f64> = (1..d1.len()).map(|k| k as f64 * d1[k]).collect();
            real_root_candidates(&d2)
                .into_iter()
                .map(|s| horner(&d1, s))
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

/// Sharp one-sided Lipschitz constant `sup d/ds b` over grid nodes and `times`.
pub fn dissipativity_constant(poly: &ReactionPolynomial, grid: &SpatialGrid, times: &[f64]) -> Result<f64> {
    let d = grid.dimension();
    let nodes: Vec<[f64; 2]> = if poly.is_space_independent() {
        vec![grid.node(0)]
    } else {
        grid.nodes().collect()
    };
    let times: &[f64] = if poly.is_time_independent() && !times.is_empty() {
        &times[..1]
    } else {
        times
    };
    let mut zeta = f64::NEG_INFINITY;
    let mut c = Vec::new();
    for &t in times {
        for p in &nodes {
            poly.check_leading(t, &p[..d])?;
            poly.signed_coeffs(t, &p[..d], &mut c);
            zeta = zeta.max(max_slope(&c));
        }
    }
    Ok(if zeta.is_finite() { zeta } else { poly.linear_shift.max(0.0) })
}

/// Sharp, supplied and working dissipativity shifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaInfo {
    pub sharp: f64,
    pub supplied: Option<f64>,
    /// `max(0, supplied or sharp)`: the value used by resolvents and envelopes.
    pub working: f64,
}

/// Evenly spaced times used to sample coefficient functions.
pub fn time_lattice(s: f64, t_end: f64, count: usize) -> Vec<f64> {
    if count <= 1 || t_end <= s {
        return vec![s];
    }
    (0..count)
        .map(|i| s + (t_end - s) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Per-node polynomial coefficients frozen at one time.
#[derive(Debug, Clone)]
pub struct ReactionSnapshot {
    pub t: f64,
    stride: usize,
    uniform: bool,
    data: Vec<f64>,
}

impl ReactionSnapshot {
    #[inline]
    fn coeffs(&self, node: usize) -> &[f64] {
        if self.uniform {
            &self.data[..self.stride]
        } else {
            &self.data[node * self.stride..(node + 1) * self.stride]
        }
    }

    #[inline]
    pub fn eval(&self, node: usize, s: f64) -> f64 {
        horner(self.coeffs(node), s)
    }

    #[inline]
    pub fn deriv(&self, node: usize, s: f64) -> f64 {
        horner_deriv(self.coeffs(node), s)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

/// The reaction realized on a grid: snapshots plus the dissipativity shift.
#[derive(Debug)]
pub struct Nemytskii {
    poly: ReactionPolynomial,
    grid: Arc<SpatialGrid>,
    zeta: ZetaInfo,
    autonomous: bool,
    cache: Mutex<HashMap<u64, Arc<ReactionSnapshot>>>,
}

impl Clone for Nemytskii {
    fn clone(&self) -> Self {
        Self {
            poly: self.poly.clone(),
            grid: self.grid.clone(),
            zeta: self.zeta,
            autonomous: self.autonomous,
            cache: Mutex::new(self.cache.lock().unwrap().clone()),
        }
    }
}

impl Nemytskii {
    /// Check the leading-coefficient floor and compute the shift on the time
    /// lattice of `[s, t_end]` and every grid node.
    pub fn new(poly: ReactionPolynomial, grid: Arc<SpatialGrid>, s: f64, t_end: f64) -> Result<Self> {
        let times = time_lattice(s, t_end, 33);
        let sharp = dissipativity_constant(&poly, &grid, &times)?;
        let chosen = match poly.supplied_zeta {
            Some(z) => {
                if z < sharp - 1e-12 * sharp.abs().max(1.0) {
                    return Err(Error::ZetaTooSmall {
                        supplied: z,
                        computed: sharp,
                    });
                }
                z
            }
            None => sharp,
        };
        let autonomous = poly.is_time_independent();
        let supplied = poly.supplied_zeta;
        Ok(Self {
            poly,
            grid,
            zeta: ZetaInfo {
                sharp,
                supplied,
                working: chosen.max(0.0),
            },
            autonomous,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn polynomial(&self) -> &ReactionPolynomial {
        &self.poly
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn zeta(&self) -> ZetaInfo {
        self.zeta
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    pub fn snapshot(&self, t: f64) -> Arc<ReactionSnapshot> {
        let key = if self.autonomous { 0 } else { t.to_bits() };
        if let Some(s) = self.cache.lock().unwrap().get(&key) {
            return s.clone();
        }
        let snap = Arc::new(self.build_snapshot(t));
        let mut cache = self.cache.lock().unwrap();
        if cache.len() > 4096 {
            cache.clear();
        }
        cache.insert(key, snap.clone());
        snap
    }

    fn build_snapshot(&self, t: f64) -> ReactionSnapshot {
        let d = self.grid.dimension();
        let uniform = self.poly.is_space_independent();
        let stride = self.poly.degree().max(1) + 1;
        let count = if uniform { 1 } else { self.grid.len() };
        let mut data = Vec::with_capacity(count * stride);
        let mut c = Vec::new();
        for node in 0..count {
            let p = self.grid.node(node);
            self.poly.signed_coeffs(t, &p[..d], &mut c);
            c.resize(stride, 0.0);
            data.extend_from_slice(&c);
        }
        ReactionSnapshot {
            t,
            stride,
            uniform,
            data,
        }
    }
}

/// Pointwise `b(t, xi, x(xi))`.
pub fn eval_reaction(f: &Nemytskii, t: f64, x: &Field) -> Field {
    let snap = f.snapshot(t);
    let values = DVector::from_iterator(x.len(), x.values().iter().enumerate().map(|(i, &v)| snap.eval(i, v)));
    Field::from_vector(x.grid(), values).expect("same length")
}

pub const RESOLVENT_TOL: f64 = 1e-12;
pub const RESOLVENT_MAX_ITER: usize = 100;

/// Root of an increasing scalar map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRoot {
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solve `phi(y) = target` for `phi` with `phi' >= slope_floor > 0`, by
/// Newton from `x0` safeguarded with bisection on a guaranteed bracket.
pub fn solve_monotone(
    phi: impl Fn(f64) -> f64,
    dphi: impl Fn(f64) -> f64,
    target: f64,
    x0: f64,
    slope_floor: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ScalarRoot> {
    let g = |y: f64| phi(y) - target;
    let g0 = g(x0);
    if !g0.is_finite() {
        return Err(Error::NoConvergence {
            what: "monotone scalar solve",
            iterations: 0,
            residual: g0,
        });
    }
    if g0.abs() <= tol {
        return Ok(ScalarRoot {
            value: x0,
            iterations: 0,
            residual: g0.abs(),
        });
    }
    // |y* - x0| <= |g(x0)| / slope_floor
    let mut width = g0.abs() / slope_floor;
    let (mut lo, mut hi) = if g0 > 0.0 { (x0 - width, x0) } else { (x0, x0 + width) };
    // rounding safety: widen until the bracket really changes sign
    for _ in 0..60 {
        let ok = if g0 > 0.0 { g(lo) <= 0.0 } else { g(hi) >= 0.0 };
        if ok {
            break;
        }
        width *= 2.0;
        if g0 > 0.0 {
            lo = x0 - width;
        } else {
            hi = x0 + width;
        }
    }
    let mut y = x0;
    let mut best = (g0.abs(), x0);
    for iter in 1..=max_iter {
        let gy = g(y);
        if gy.abs() < best.0 {
            best = (gy.abs(), y);
        }
        if gy.abs() <= tol {
            return Ok(ScalarRoot {
                value: y,
                iterations: iter,
                residual: gy.abs(),
            });
        }
        if gy < 0.0 {
            lo = lo.max(y);
        } else {
            hi = hi.min(y);
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // bracket collapsed to adjacent floats: best attainable root
            return Ok(ScalarRoot {
                value: best.1,
                iterations: iter,
                residual: best.0,
            });
        }
        let dy = dphi(y);
        let newton = y - gy / dy;
        y = if dy > 0.0 && newton > lo && newton < hi { newton } else { mid };
    }
    Err(Error::NoConvergence {
        what: "monotone scalar solve",
        iterations: max_iter,
        residual: best.0,
    })
}

/// Nodal values of `J_k(t, x)`.
#[derive(Debug, Clone)]
pub struct ResolventResult {
    pub value: Field,
    /// Largest Newton/bisection iteration count over nodes.
    pub iterations: usize,
    /// Largest nodal residual of the defining equation.
    pub residual: f64,
}

fn check_index(f: &Nemytskii, k: f64) -> Result<f64> {
    let zeta = f.zeta.working;
    if !(k > zeta) || !(k > 0.0) {
        return Err(Error::IndexBelowShift { k, zeta });
    }
    Ok(zeta)
}

/// Scalar resolvent at one node: `y (1 + zeta/k) - b(y)/k = x`.
#[inline]
pub(crate) fn resolvent_scalar(snap: &ReactionSnapshot, node: usize, k: f64, zeta: f64, x: f64) -> Result<ScalarRoot> {
    let a = 1.0 + zeta / k;
    solve_monotone(
        |y| a * y - snap.eval(node, y) / k,
        |y| a - snap.deriv(node, y) / k,
        x,
        x,
        1.0,
        RESOLVENT_TOL,
        RESOLVENT_MAX_ITER,
    )
}

/// Nodal values `J_k(t, x)` written into `out`; returns (max iterations, max residual).
pub(crate) fn resolvent_values(
    snap: &ReactionSnapshot,
    k: f64,
    zeta: f64,
    x: &[f64],
    out: &mut [f64],
) -> Result<(usize, f64)> {
    let mut iters = 0;
    let mut res: f64 = 0.0;
    for (i, (&xi, o)) in x.iter().zip(out.iter_mut()).enumerate() {
        let r = resolvent_scalar(snap, i, k, zeta, xi)?;
        *o = r.value;
        iters = iters.max(r.iterations);
        res = res.max(r.residual);
    }
    Ok((iters, res))
}

#[allow(non_snake_case)]
/// `J_k(t, x)`: the unique solution of `J - (F(t, J) - zeta J)/k = x`.
pub fn resolvent_J(f: &Nemytskii, k: f64, t: f64, x: &Field) -> Result<ResolventResult> {
    let zeta = check_index(f, k)?;
    x.ensure_finite()?;
    let snap = f.snapshot(t);
    let mut out = vec![0.0; x.len()];
    let (iterations, residual) = resolvent_values(&snap, k, zeta, x.values().as_slice(), &mut out)?;
    Ok(ResolventResult {
        value: Field::from_values(x.grid(), out)?,
        iterations,
        residual,
    })
}

#[allow(non_snake_case)]
/// `F_k(t, x) = F(t, J_k(t, x))`.
pub fn yosida_F(f: &Nemytskii, k: f64, t: f64, x: &Field) -> Result<Field> {
    let j = resolvent_J(f, k, t, x)?;
    Ok(eval_reaction(f, t, &j.value))
}

/// In-place `F_k` on raw nodal values.
pub(crate) fn yosida_values(snap: &ReactionSnapshot, k: f64, zeta: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
    for (i, (&xi, o)) in x.iter().zip(out.iter_mut()).enumerate() {
        let j = resolvent_scalar(snap, i, k, zeta, xi)?.value;
        *o = snap.eval(i, j);
    }
    Ok(())
}

/// Dense bounded approximant `A_n = n A (nI - A)^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct YosidaApproximant {
    pub t: f64,
    pub n: f64,
    pub matrix: DMatrix<f64>,
}

impl YosidaApproximant {
    pub fn apply(&self, x: &Field) -> Result<Field> {
        if x.len() != self.matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.nrows(),
                actual: x.len(),
            });
        }
        Field::from_vector(x.grid(), &self.matrix * x.values())
    }
}

pub fn linear_yosida(op: &AssembledOperator, n: f64) -> Result<YosidaApproximant> {
    if !(n > 0.0) {
        return Err(Error::SingularResolvent(n));
    }
    let a = op.to_dense();
    let dim = a.nrows();
    let m = DMatrix::identity(dim, dim) * n - &a;
    let lu = m.lu();
    // (nI - A)^{-1} A = A (nI - A)^{-1}
    let x = lu.solve(&a).ok_or(Error::SingularResolvent(n))?;
    let matrix = x * n;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularResolvent(n));
    }
    Ok(YosidaApproximant { t: op.t, n, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_operator, build_grid, BoundaryCondition, CoefficientSet};
    use proptest::prelude::*;

    fn grid(n: usize) -> Arc<SpatialGrid> {
        Arc::new(build_grid(0.0, std::f64::consts::PI, n, 1).unwrap())
    }

    fn cubic(extra: &[f64]) -> Nemytskii {
        // extra = [C_0, C_1, C_2], leading C_3 = 1
        let mut c = extra.to_vec();
        c.resize(3, 0.0);
        c.push(1.0);
        Nemytskii::new(ReactionPolynomial::from_constants(&c).unwrap(), grid(5), 0.0, 1.0).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        let f = cubic(&[]);
        let g = f.grid().clone();
        let x = Field::constant(&g, 2.0);
        assert!(eval_reaction(&f, 0.0, &x).values().iter().all(|v| *v == -8.0));

        let p = ReactionPolynomial::new(
            vec![Coefficient::zero(), Coefficient::zero(), Coefficient::zero(), Coefficient::poly_t(&[1.0, 1.0])],
            0.5,
        )
        .unwrap();
        let f = Nemytskii::new(p, g.clone(), 0.0, 1.0).unwrap();
        assert!(eval_reaction(&f, 1.0, &x).values().iter().all(|v| *v == -16.0));

        let f = cubic(&[0.0, 1.0]);
        assert_eq!(eval_reaction(&f, 0.0, &Field::zeros(&g)).norm_sup(), 0.0);
    }

    #[test]
    fn sharp_shift_examples() {
        assert_eq!(cubic(&[]).zeta().sharp, 0.0);
        assert!((cubic(&[0.0, 1.0]).zeta().sharp - 1.0).abs() < 1e-14);
        assert!((cubic(&[0.0, 0.0, 3.0]).zeta().sharp - 3.0).abs() < 1e-12);
        // quintic -s^5 + 10 s^3: max of -5 s^4 + 30 s^2 is 45 at s^2 = 3
        let p = ReactionPolynomial::from_constants(&[0.0, 0.0, 0.0, 10.0, 0.0, 1.0]).unwrap();
        let f = Nemytskii::new(p, grid(3), 0.0, 1.0).unwrap();
        assert!((f.zeta().sharp - 45.0).abs() < 1e-10);
        // negative sharp shift is clamped for the working value
        let f = cubic(&[0.0, -2.0]);
        assert!((f.zeta().sharp + 2.0).abs() < 1e-14);
        assert_eq!(f.zeta().working, 0.0);
    }

    #[test]
    fn leading_floor_and_supplied_shift() {
        let p = ReactionPolynomial::new(
            vec![Coefficient::zero(), Coefficient::zero(), Coefficient::zero(), Coefficient::poly_t(&[1.0, -2.0])],
            0.5,
        )
        .unwrap();
        assert!(matches!(
            Nemytskii::new(p, grid(3), 0.0, 1.0),
            Err(Error::LeadingCoefficientViolation { .. })
        ));
        let p = ReactionPolynomial::from_constants(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            Nemytskii::new(p.clone().with_supplied_zeta(0.5), grid(3), 0.0, 1.0),
            Err(Error::ZetaTooSmall { .. })
        ));
        let f = Nemytskii::new(p.with_supplied_zeta(4.0), grid(3), 0.0, 1.0).unwrap();
        assert_eq!(f.zeta().working, 4.0);
        assert!((f.zeta().sharp - 1.0).abs() < 1e-14);
    }

    #[test]
    fn resolvent_examples() {
        let f = cubic(&[]);
        let g = f.grid().clone();
        let x = Field::constant(&g, 2.0);
        let j = resolvent_J(&f, 1.0, 0.0, &x).unwrap();
        assert!((j.value.values().add_scalar(-1.0)).amax() < 1e-12);
        assert!(j.residual <= RESOLVENT_TOL);
        let fk = yosida_F(&f, 1.0, 0.0, &x).unwrap();
        assert!((fk.values().add_scalar(1.0)).amax() < 1e-11);

        let zero = resolvent_J(&cubic(&[0.0, 1.0]), 3.0, 0.0, &Field::zeros(&g)).unwrap();
        assert_eq!(zero.value.norm_sup(), 0.0);

        let mut prev = f64::INFINITY;
        for k in [10.0, 100.0, 1000.0] {
            let d = (&resolvent_J(&f, k, 0.0, &x).unwrap().value - &x).norm_sup();
            assert!(d <= 8.0 / k);
            assert!(d < prev);
            prev = d;
        }
        assert!(matches!(
            resolvent_J(&cubic(&[0.0, 1.0]), 1.0, 0.0, &x),
            Err(Error::IndexBelowShift { .. })
        ));
    }

    #[test]
    fn linear_yosida_examples() {
        let g = Arc::new(build_grid(0.0, 1.0, 1, 1).unwrap());
        // single node: -8 / h^2 ... use a scalar operator directly
        let mut op = assemble_operator(&CoefficientSet::laplacian(1, 1.0), &g, &BoundaryCondition::Dirichlet, 0.0).unwrap();
        op.matrix.set(0, 0, -4.0);
        assert!((linear_yosida(&op, 4.0).unwrap().matrix[(0, 0)] + 2.0).abs() < 1e-15);
        for n in [1e2, 1e3, 1e4] {
            let an = linear_yosida(&op, n).unwrap().matrix[(0, 0)];
            assert!((an - (-n * 4.0 / (n + 4.0))).abs() < 1e-12 * n);
        }

        let g = grid(20);
        let op = assemble_operator(&CoefficientSet::laplacian(1, 1.0), &g, &BoundaryCondition::Dirichlet, 0.0).unwrap();
        let a = op.to_dense();
        let eig = a.clone().symmetric_eigen();
        let n = 50.0;
        let an = linear_yosida(&op, n).unwrap().matrix;
        for j in 0..20 {
            let v = eig.eigenvectors.column(j);
            let l = eig.eigenvalues[j];
            let mapped = n * l / (n - l);
            assert!((&an * v - v * mapped).amax() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn resolvent_is_nonexpansive_and_regularized_map_lipschitz(
            xs in prop::collection::vec(-5.0f64..5.0, 5),
            ys in prop::collection::vec(-5.0f64..5.0, 5),
            k in 1.5f64..1e4,
        ) {
            let f = cubic(&[0.0, 1.0]);
            let g = f.grid().clone();
            let x = Field::from_values(&g, xs).unwrap();
            let y = Field::from_values(&g, ys).unwrap();
            let jx = resolvent_J(&f, k, 0.0, &x).unwrap();
            let jy = resolvent_J(&f, k, 0.0, &y).unwrap();
            prop_assert!(jx.residual <= RESOLVENT_TOL);
            let dx = &x - &y;
            let dj = &jx.value - &jy.value;
            prop_assert!(dj.norm_sup() <= dx.norm_sup() + 1e-10);
            prop_assert!(dj.norm_h() <= dx.norm_h() + 1e-10);
            let fx = yosida_F(&f, k, 0.0, &x).unwrap();
            let fy = yosida_F(&f, k, 0.0, &y).unwrap();
            prop_assert!((&fx - &fy).norm_sup() <= 3.0 * k * dx.norm_sup() + 1e-10);
        }

        #[test]
        fn sharp_shift_dominates_sampled_slopes(
            c0 in -3.0f64..3.0, c1 in -3.0f64..3.0, c2 in -3.0f64..3.0,
            c3 in -3.0f64..3.0, c4 in -3.0f64..3.0, lead in 0.2f64..3.0,
            s in -4.0f64..4.0,
        ) {
            let p = ReactionPolynomial::from_constants(&[c0, c1, c2, c3, c4, lead]).unwrap();
            let f = Nemytskii::new(p, grid(1), 0.0, 0.0).unwrap();
            let snap = f.snapshot(0.0);
            let z = f.zeta().sharp;
            prop_assert!(snap.deriv(0, s) <= z + 1e-9 * z.abs().max(1.0));
        }
    }
}
