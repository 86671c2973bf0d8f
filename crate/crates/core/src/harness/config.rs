//! JSON experiment configuration. Unknown fields are rejected everywhere.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::deterministic::{MildOptions, Problem, SolveMode, TimeGrid, DEFAULT_MAX_SWEEPS};
use crate::discretization::{BoundaryCondition, Coefficient, CoefficientForm, CoefficientSet, Field, SpatialGrid};
use crate::error::{Error, Result};
use crate::evolution::{PropagatorScheme, SchemeKind};
use crate::stochastic::{NoiseModel, NoiseOperator, DEFAULT_ALPHA, DEFAULT_MODES};
use crate::yosida::ReactionPolynomial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n_interior: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    /// Full matrix `a_ij`; mutually exclusive with `isotropic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<Vec<CoefficientForm>>>,
    /// `a(t, xi) * I`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isotropic: Option<CoefficientForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<CoefficientForm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<CoefficientForm>,
    pub ellipticity_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Dirichlet,
    Neumann,
    Robin { beta: CoefficientForm },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionConfig {
    /// `C_0, ..., C_{2m+1}` in `b = -C_{2m+1} s^{2m+1} + sum_{k<=2m} C_k s^k`.
    pub coefficients: Vec<CoefficientForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leading_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainConfig,
    pub coefficients: CoefficientsConfig,
    pub bc: BoundaryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<ReactionConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    #[default]
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseOperatorConfig {
    Zero,
    Identity,
    Diagonal { weights: Vec<f64> },
    PowerLaw { exponent: f64 },
    /// `b_k = |lambda_k|^{-gamma}`: positive `gamma` smooths.
    Fractional { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub basis: BasisKind,
    #[serde(default = "default_modes")]
    pub modes: usize,
    pub operator: NoiseOperatorConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_scale: Option<CoefficientForm>,
}

fn default_modes() -> usize {
    DEFAULT_MODES
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub scheme: SchemeKind,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Cascade tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    /// Yosida index of the propagator when `scheme` is `yosida_product`.
    #[serde(default = "default_n")]
    pub n: f64,
    #[serde(default)]
    pub mode: SolveMode,
    #[serde(default)]
    pub cross_check: bool,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_tol() -> f64 {
    1e-4
}
fn default_picard_tol() -> f64 {
    1e-12
}
fn default_max_sweeps() -> usize {
    DEFAULT_MAX_SWEEPS
}
fn default_n() -> f64 {
    1e4
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::default(),
            dt: default_dt(),
            tol: default_tol(),
            picard_tol: default_picard_tol(),
            max_sweeps: default_max_sweeps(),
            k0: None,
            n: default_n(),
            mode: SolveMode::default(),
            cross_check: false,
        }
    }
}

/// Initial datum evaluated at the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant { value: f64 },
    /// `sum amplitude * prod_a sin(mode_a pi (xi_a - lo_a) / L_a)`
    Sines { terms: Vec<SineTerm> },
    /// Analytic form in `xi` (evaluated at `t = s`).
    Form { form: CoefficientForm },
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    pub modes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalConfig {
    Constant { value: f64 },
    /// `<u, e_mode>_H` on the noise sine basis (mode counted from 1).
    Inner { mode: usize },
    /// `tanh(<u, e_mode>_H)`
    BoundedInner { mode: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentKind {
    DeterministicSolve {
        x: InitialConfig,
    },
    EstimateAudit {
        x: InitialConfig,
        z: InitialConfig,
    },
    KConvergence {
        x: InitialConfig,
        ks: Vec<f64>,
        /// Optional band `[lo, hi]` for the fitted slope.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_slope: Option<[f64; 2]>,
    },
    NConvergence {
        x: InitialConfig,
        k: f64,
        ns: Vec<f64>,
    },
    SpdeEnsemble {
        x: InitialConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<InitialConfig>,
        /// Write every `output_stride`-th node to the ensemble table.
        #[serde(default = "default_stride")]
        output_stride: usize,
    },
    ChsSweep {
        alphas: Vec<f64>,
        /// Fractional exponents; each replaces the noise operator.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        gammas: Vec<f64>,
    },
    FactorizationCompare {
        /// Step counts on `[s, T]`; each must divide the largest.
        steps: Vec<usize>,
        /// Independent paths compared (seeds from `run.master_seed`).
        #[serde(default = "default_one")]
        paths: usize,
        #[serde(default = "default_max_rel_error")]
        max_relative_error: f64,
        #[serde(default = "default_min_ratio")]
        min_refinement_ratio: f64,
    },
    TransitionTable {
        x: InitialConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<InitialConfig>,
        functionals: Vec<FunctionalConfig>,
    },
}

fn default_stride() -> usize {
    1
}
fn default_one() -> usize {
    1
}
fn default_max_rel_error() -> f64 {
    0.05
}
fn default_min_ratio() -> f64 {
    1.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub s: f64,
    pub t_end: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    pub experiment: ExperimentKind,
}

fn default_paths() -> usize {
    100
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Range and consistency checks that serde cannot express; every
    /// inner-type constructor is also exercised.
    pub fn validate(&self) -> Result<()> {
        let d = &self.problem.domain;
        if d.lo.len() != d.hi.len() || d.lo.len() != d.n_interior.len() {
            return Err(Error::config("problem.domain", "lo, hi and n_interior must have equal lengths"));
        }
        let r = &self.run;
        if !(r.t_end > r.s) {
            return Err(Error::config("run.t_end", format!("must exceed run.s = {}", r.s)));
        }
        let sv = &self.solver;
        if !(sv.dt > 0.0 && sv.dt <= r.t_end - r.s) {
            return Err(Error::config("solver.dt", "must be positive and at most t_end - s"));
        }
        if !(sv.tol > 0.0) {
            return Err(Error::config("solver.tol", "must be positive"));
        }
        if !(sv.picard_tol > 0.0) {
            return Err(Error::config("solver.picard_tol", "must be positive"));
        }
        if !(sv.n > 0.0) {
            return Err(Error::config("solver.n", "must be positive"));
        }
        if let Some(n) = &self.noise {
            if !(n.alpha > 0.0 && n.alpha < 0.5) {
                return Err(Error::config("noise.alpha", format!("{} is outside (0, 1/2)", n.alpha)));
            }
            if n.modes == 0 {
                return Err(Error::config("noise.modes", "must be at least 1"));
            }
        }
        let needs_noise = matches!(
            r.experiment,
            ExperimentKind::SpdeEnsemble { .. }
                | ExperimentKind::ChsSweep { .. }
                | ExperimentKind::FactorizationCompare { .. }
                | ExperimentKind::TransitionTable { .. }
        );
        if needs_noise && self.noise.is_none() {
            return Err(Error::config("noise", "this experiment kind needs a noise block"));
        }
        match &r.experiment {
            ExperimentKind::KConvergence { ks, .. } => {
                if ks.len() < 3 || !increasing_positive(ks) {
                    return Err(Error::config("run.experiment.ks", "need at least three increasing positive levels"));
                }
            }
            ExperimentKind::NConvergence { ns, k, .. } => {
                if ns.len() < 2 || !increasing_positive(ns) {
                    return Err(Error::config("run.experiment.ns", "need at least two increasing positive indices"));
                }
                if !(*k > 0.0) {
                    return Err(Error::config("run.experiment.k", "must be positive"));
                }
            }
            ExperimentKind::ChsSweep { alphas, .. } => {
                if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 0.5)) {
                    return Err(Error::config("run.experiment.alphas", format!("{a} is outside (0, 1/2)")));
                }
            }
            ExperimentKind::FactorizationCompare { steps, paths, .. } => {
                if *paths == 0 {
                    return Err(Error::config("run.experiment.paths", "must be at least 1"));
                }
                let max = steps.iter().copied().max().unwrap_or(0);
                if steps.is_empty() || steps.iter().any(|s| *s == 0 || max % s != 0) {
                    return Err(Error::config("run.experiment.steps", "step counts must be positive divisors of the largest"));
                }
            }
            ExperimentKind::SpdeEnsemble { output_stride: 0, .. } => {
                return Err(Error::config("run.experiment.output_stride", "must be at least 1"));
            }
            _ => {}
        }
        if needs_noise && r.n_paths == 0 {
            return Err(Error::config("run.n_paths", "must be at least 1"));
        }
        // build everything once so inner invariants are checked at load
        let problem = self.build_problem()?;
        if self.noise.is_some() {
            self.build_noise(problem.grid())?;
        }
        for (name, init) in self.initial_data() {
            init.build(problem.grid()).map_err(|e| Error::config(format!("run.experiment.{name}"), e.to_string()))?;
        }
        Ok(())
    }

    fn initial_data(&self) -> Vec<(&'static str, &InitialConfig)> {
        match &self.run.experiment {
            ExperimentKind::DeterministicSolve { x }
            | ExperimentKind::KConvergence { x, .. }
            | ExperimentKind::NConvergence { x, .. } => vec![("x", x)],
            ExperimentKind::EstimateAudit { x, z } => vec![("x", x), ("z", z)],
            ExperimentKind::SpdeEnsemble { x, z, .. } | ExperimentKind::TransitionTable { x, z, .. } => {
                let mut v = vec![("x", x)];
                if let Some(z) = z {
                    v.push(("z", z));
                }
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn grid(&self) -> Result<Arc<SpatialGrid>> {
        let d = &self.problem.domain;
        SpatialGrid::new(&d.lo, &d.hi, &d.n_interior)
            .map(Arc::new)
            .map_err(|e| Error::config("problem.domain", e.to_string()))
    }

    pub fn coefficient_set(&self, dimension: usize) -> Result<CoefficientSet> {
        let c = &self.problem.coefficients;
        let mut set = match (&c.diffusion, &c.isotropic) {
            (Some(m), None) => {
                if m.len() != dimension || m.iter().any(|r| r.len() != dimension) {
                    return Err(Error::config(
                        "problem.coefficients.diffusion",
                        format!("must be a {dimension}x{dimension} matrix"),
                    ));
                }
                let mut set = CoefficientSet::isotropic(dimension, Coefficient::zero(), c.ellipticity_floor);
                set.diffusion = m
                    .iter()
                    .map(|row| row.iter().map(|f| Coefficient::Form(f.clone())).collect())
                    .collect();
                set
            }
            (None, Some(a)) => CoefficientSet::isotropic(dimension, Coefficient::Form(a.clone()), c.ellipticity_floor),
            _ => {
                return Err(Error::config(
                    "problem.coefficients",
                    "exactly one of `diffusion` and `isotropic` is required",
                ))
            }
        };
        if let Some(drift) = &c.drift {
            if drift.len() != dimension {
                return Err(Error::config("problem.coefficients.drift", format!("needs {dimension} entries")));
            }
            set = set.with_drift(drift.iter().map(|f| Coefficient::Form(f.clone())).collect());
        }
        if let Some(p) = &c.potential {
            set = set.with_potential(Coefficient::Form(p.clone()));
        }
        Ok(set)
    }

    pub fn boundary(&self) -> BoundaryCondition {
        match &self.problem.bc {
            BoundaryConfig::Dirichlet => BoundaryCondition::Dirichlet,
            BoundaryConfig::Neumann => BoundaryCondition::Neumann,
            BoundaryConfig::Robin { beta } => BoundaryCondition::Robin(Coefficient::Form(beta.clone())),
        }
    }

    pub fn reaction(&self, grid: &SpatialGrid) -> Result<ReactionPolynomial> {
        let Some(r) = &self.problem.reaction else {
            return Ok(ReactionPolynomial::zero());
        };
        let coeffs: Vec<Coefficient> = r.coefficients.iter().map(|f| Coefficient::Form(f.clone())).collect();
        let poly = match r.leading_floor {
            Some(floor) => ReactionPolynomial::new(coeffs, floor),
            // half the smallest leading coefficient on the nodes at t = s
            None => {
                let lead = r
                    .coefficients
                    .last()
                    .map(|f| grid.nodes().map(|xi| f.eval(self.run.s, &xi[..grid.dimension()])).fold(f64::INFINITY, f64::min))
                    .unwrap_or(0.0);
                ReactionPolynomial::new(coeffs, lead / 2.0)
            }
        }
        .map_err(|e| Error::config("problem.reaction", e.to_string()))?;
        Ok(match r.zeta {
            Some(z) => poly.with_supplied_zeta(z),
            None => poly,
        })
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let grid = self.grid()?;
        let coeffs = self.coefficient_set(grid.dimension())?;
        let poly = self.reaction(&grid)?;
        Problem::new(coeffs, grid, self.boundary(), poly, self.run.s, self.run.t_end).map_err(|e| match e {
            Error::ZetaTooSmall { .. } => Error::config("problem.reaction.zeta", e.to_string()),
            Error::InvalidReaction(_) | Error::LeadingCoefficientViolation { .. } => {
                Error::config("problem.reaction", e.to_string())
            }
            Error::EllipticityViolation { .. } | Error::AsymmetricDiffusion { .. } | Error::DimensionMismatch { .. } => {
                Error::config("problem.coefficients", e.to_string())
            }
            other => other,
        })
    }

    pub fn noise_operator(&self, cfg: &NoiseOperatorConfig) -> NoiseOperator {
        match cfg {
            NoiseOperatorConfig::Zero => NoiseOperator::Zero,
            NoiseOperatorConfig::Identity => NoiseOperator::Identity,
            NoiseOperatorConfig::Diagonal { weights } => NoiseOperator::Diagonal(weights.clone()),
            NoiseOperatorConfig::PowerLaw { exponent } => NoiseOperator::PowerLaw { exponent: *exponent },
            NoiseOperatorConfig::Fractional { gamma } => NoiseOperator::Fractional { gamma: *gamma },
        }
    }

    pub fn build_noise(&self, grid: &Arc<SpatialGrid>) -> Result<NoiseModel> {
        let n = self
            .noise
            .as_ref()
            .ok_or_else(|| Error::config("noise", "missing noise block"))?;
        self.build_noise_with(grid, &n.operator)
    }

    pub fn build_noise_with(&self, grid: &Arc<SpatialGrid>, op: &NoiseOperatorConfig) -> Result<NoiseModel> {
        let n = self
            .noise
            .as_ref()
            .ok_or_else(|| Error::config("noise", "missing noise block"))?;
        let model = NoiseModel::new(grid.clone(), n.modes, self.noise_operator(op), n.alpha).map_err(|e| match e {
            Error::AlphaOutOfRange(_) => Error::config("noise.alpha", e.to_string()),
            Error::InvalidGrid(_) => Error::config("noise.modes", e.to_string()),
            other => Error::config("noise.operator", other.to_string()),
        })?;
        Ok(match &n.time_scale {
            Some(f) => model.with_time_scale(Coefficient::Form(f.clone())),
            None => model,
        })
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(self.run.s, self.run.t_end, self.solver.dt)
    }

    pub fn scheme(&self, time_grid: &TimeGrid) -> PropagatorScheme {
        PropagatorScheme {
            kind: self.solver.scheme,
            dt: time_grid.max_dt(),
            yosida_index: self.solver.n,
        }
    }

    pub fn mild_options(&self) -> MildOptions {
        MildOptions {
            mode: self.solver.mode,
            tol: self.solver.tol,
            picard_tol: self.solver.picard_tol,
            k0: self.solver.k0,
            cross_check: self.solver.cross_check,
        }
    }
}

fn increasing_positive(v: &[f64]) -> bool {
    v.first().is_some_and(|x| *x > 0.0) && v.windows(2).all(|w| w[1] > w[0])
}

impl InitialConfig {
    pub fn build(&self, grid: &Arc<SpatialGrid>) -> Result<Field> {
        let field = match self {
            InitialConfig::Constant { value } => Field::constant(grid, *value),
            InitialConfig::Sines { terms } => {
                for t in terms {
                    if t.modes.len() != grid.dimension() {
                        return Err(Error::InvalidGrid(format!(
                            "sine term needs {} mode numbers",
                            grid.dimension()
                        )));
                    }
                }
                Field::from_fn(grid, |xi| {
                    terms
                        .iter()
                        .map(|term| {
                            term.amplitude
                                * term
                                    .modes
                                    .iter()
                                    .enumerate()
                                    .map(|(a, m)| (*m as f64 * PI * (xi[a] - grid.lo()[a]) / grid.extent(a)).sin())
                                    .product::<f64>()
                        })
                        .sum()
                })
            }
            InitialConfig::Form { form } => Field::from_fn(grid, |xi| form.eval(0.0, xi)),
            InitialConfig::Values { values } => Field::from_values(grid, values.clone())?,
        };
        field.ensure_finite()?;
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {
            "domain": {"lo": [0.0], "hi": [3.141592653589793], "n_interior": [16]},
            "coefficients": {"isotropic": 1.0, "ellipticity_floor": 0.5},
            "bc": {"kind": "dirichlet"}
        },
        "run": {"s": 0.0, "t_end": 0.5, "experiment": {"kind": "deterministic_solve", "x": {"kind": "constant", "value": 1.0}}}
    }"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_fields_are_rejected_with_path() {
        let text = MINIMAL.replace(r#""bc": {"kind": "dirichlet"}"#, r#""bc": {"kind": "dirichlet"}, "colour": 1"#);
        match ExperimentConfig::from_json(&text) {
            Err(Error::ConfigInvalid { path, message }) => {
                assert!(message.contains("colour"), "{message}");
                assert_eq!(path, "problem.colour");
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace(r#""value": 1.0"#, r#""value": 1.0, "extra": 2"#);
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::ConfigInvalid { .. })));
    }

    #[test]
    fn alpha_out_of_range_names_the_field() {
        let text = MINIMAL.replace(
            r#""run":"#,
            r#""noise": {"operator": {"kind": "identity"}, "alpha": 0.7}, "run":"#,
        );
        match ExperimentConfig::from_json(&text) {
            Err(Error::ConfigInvalid { path, .. }) => assert_eq!(path, "noise.alpha"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn noise_experiments_need_noise() {
        let text = MINIMAL.replace(
            r#"{"kind": "deterministic_solve", "x": {"kind": "constant", "value": 1.0}}"#,
            r#"{"kind": "chs_sweep", "alphas": [0.2]}"#,
        );
        match ExperimentConfig::from_json(&text) {
            Err(Error::ConfigInvalid { path, .. }) => assert_eq!(path, "noise"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_reaction_is_reported() {
        let text = MINIMAL.replace(
            r#""bc": {"kind": "dirichlet"}"#,
            r#""bc": {"kind": "dirichlet"}, "reaction": {"coefficients": [0.0, 1.0, 0.0, 1.0], "zeta": 0.5}"#,
        );
        match ExperimentConfig::from_json(&text) {
            Err(Error::ConfigInvalid { path, .. }) => assert_eq!(path, "problem.reaction.zeta"),
            other => panic!("{other:?}"),
        }
    }
}
