//! Experiment configs, dispatch and report emission behind the CLI.

mod config;
mod run;

pub use config::{
    BasisKind, BoundaryConfig, CoefficientsConfig, DomainConfig, ExperimentConfig, ExperimentKind, FunctionalConfig,
    InitialConfig, NoiseConfig, NoiseOperatorConfig, ProblemConfig, ReactionConfig, RunConfig, SineTerm, SolverConfig,
};
pub use run::{emit_report, run_experiment, AuditLine, ReportBundle, Timings, ARTIFACT_VERSION};

/// JSON schema of the config format.
pub const CONFIG_SCHEMA: &str = include_str!("../../../../docs/config.schema.json");
