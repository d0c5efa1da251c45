//! Simulators, Monte Carlo ground truth and the benchmark experiments.

pub mod dgp;
pub mod experiments;

pub use dgp::{
    cycle, floor_mass, ground_truth_scores, judge_entries, ContextDraw, DgpSpec, DgpVariant, GroundTruth, ItemParams,
    Simulator, DEFAULT_MC_N, MIN_MC_N,
};
pub use experiments::{
    acquisition_experiment, coverage_experiment, judge_experiment, AcquisitionConfig, CoverageConfig, ExperimentReport,
    JudgeConfig, NuisanceSource, RunOutcome,
};
