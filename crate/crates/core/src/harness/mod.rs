//! Experiment orchestration: configuration, runs, sweeps and CSV output.

pub mod config;
pub mod metrics;
pub mod output;
pub mod run;

pub use config::{
    parse_compressor, with_fraction, EtaPolicy, ExperimentConfig, GammaPolicy, Mode, Overrides,
    ProblemSpec, TopologySpec,
};
pub use metrics::{
    averaging_weights, log_slope, rounds_to_epsilon, uniform_average_iterate,
    weighted_average_iterate, EpsOutcome, EpsTracker, RunStatus,
};
pub use output::{Manifest, ManifestProfile, SweepRow, TraceRow};
pub use run::{run_logreg, sweep_consensus, Baseline, RunResult, Setup, SgdObjective, SweepResult};
