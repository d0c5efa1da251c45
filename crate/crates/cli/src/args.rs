use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "gars", version, about = "Debiased ranking scores from contextual pairwise preferences")]
pub struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Estimate ranking scores with simultaneous confidence intervals.
    Estimate(EstimateArgs),
    /// Write a synthetic dataset.
    Simulate(SimulateArgs),
    /// Run a seeded Monte Carlo experiment.
    Coverage(CoverageArgs),
    /// Compute a budget-constrained labeling policy.
    Acquire(AcquireArgs),
    /// Compare closed-form Jacobians with finite differences.
    CheckJacobians(CheckArgs),
    /// Re-run the configuration embedded in a report.
    #[serde(skip)]
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Borda,
    Bt,
    Rc,
    Softmax,
    Copeland,
    Kemeny,
    Miscal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Plugin,
    Debiased,
    BtRestricted,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiArg {
    Gaussmax,
    Bonferroni,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgeArg {
    None,
    Features,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeaturesArg {
    Plain,
    Expanded,
    Interacted,
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpArg {
    Ties,
    Btmis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Independent,
    OnePair,
    DOptimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuSourceArg {
    Dataset,
    Judge,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentArg {
    Coverage,
    Judge,
    Acquisition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceArg {
    Learned,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Squared,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationArg {
    BordaSignFlip,
}

/// Functional selection shared by several commands.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KindOpts {
    #[arg(long, value_enum, default_value = "borda")]
    pub kind: KindArg,
    /// Soft-Copeland temperature.
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    /// Kemeny rankings, best item first: "0,1,2;2,1,0".
    #[arg(long)]
    pub rankings: Option<String>,
    /// Miscalibration loss.
    #[arg(long, value_enum, default_value = "squared")]
    pub loss: LossArg,
    /// Category weights as "w1;w2", e.g. "1,0,0.5;0,1,0.5". Defaults by C.
    #[arg(long)]
    pub weights: Option<String>,
}

/// Nuisance learner settings.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LearnerOpts {
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_enum, default_value = "expanded")]
    pub features: FeaturesArg,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10)]
    pub neg_per_pos: usize,
    #[arg(long, default_value_t = 0.01)]
    pub pi_floor: f64,
    /// External learner program; replaces the built-in logistic model.
    #[arg(long)]
    pub external: Option<String>,
    /// Arguments passed to the external learner.
    #[arg(long, allow_hyphen_values = true, num_args = 0..)]
    pub external_arg: Vec<String>,
    #[arg(long, default_value_t = 600.0)]
    pub external_timeout: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Report path; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    /// Flat CSV of (estimator, item, score, lower, upper).
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub kind: KindOpts,
    #[arg(long, value_enum, default_value = "all")]
    pub estimator: EstimatorArg,
    #[command(flatten)]
    pub learner: LearnerOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "gaussmax")]
    pub ci: CiArg,
    #[arg(long, default_value_t = 10_000)]
    pub mc_draws: usize,
    #[arg(long, value_enum, default_value = "none")]
    pub judge: JudgeArg,
    /// Reject data that is not binary (C = 2).
    #[arg(long)]
    pub binary_only: bool,
    /// Reduce multi-category labels to binary before estimating.
    #[arg(long)]
    pub reduce_binary: bool,
    /// Known selection policy (JSONL policy file) instead of a fitted pi_hat.
    #[arg(long)]
    pub known_pi: Option<PathBuf>,
    /// Center influence rows before forming the covariance.
    #[arg(long)]
    pub center: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "ties")]
    pub dgp: DgpArg,
    #[arg(long, default_value_t = 1000)]
    pub n_ctx: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the item parameters.
    #[arg(long, default_value_t = 0)]
    pub dgp_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 3)]
    pub items: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Attach judge probabilities with this logit noise.
    #[arg(long)]
    pub judge_sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CoverageArgs {
    #[arg(long, value_enum, default_value = "coverage")]
    pub experiment: ExperimentArg,
    #[arg(long, value_enum, default_value = "ties")]
    pub dgp: DgpArg,
    /// Functionals to evaluate; defaults to borda, bt, rc.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub kind: Vec<KindArg>,
    #[arg(long, value_enum, default_value = "all")]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_ctx: usize,
    /// Divides runs, for quicker desk-scale versions of the experiments.
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub dgp_seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "gaussmax")]
    pub ci: CiArg,
    #[arg(long, default_value_t = 5000)]
    pub mc_draws: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value = "learned")]
    pub nuisance: NuisanceArg,
    #[command(flatten)]
    pub learner: LearnerOpts,
    /// Judge noise levels for the judge experiment.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    pub judge_sigmas: Vec<f64>,
    /// Labels per context for the acquisition experiment.
    #[arg(long, default_value_t = 2000.0 / 1500.0)]
    pub budget: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha_floor: f64,
    #[arg(long, default_value_t = 200_000)]
    pub mc_n: usize,
    /// Items; defaults to the experiment's simulator size.
    #[arg(long)]
    pub items: Option<usize>,
    /// Context dimension; defaults to the experiment's simulator size.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    /// Plain-text table of the results.
    #[arg(long)]
    #[serde(skip)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AcquireArgs {
    #[arg(long, value_enum, default_value = "dataset")]
    pub mu_source: MuSourceArg,
    /// Dataset for the dataset and judge sources.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ties")]
    pub dgp: DgpArg,
    #[arg(long, default_value_t = 1000)]
    pub n_ctx: usize,
    #[arg(long, default_value_t = 0)]
    pub dgp_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[command(flatten)]
    pub kind: KindOpts,
    /// Expected cost per context.
    #[arg(long)]
    pub budget: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha_floor: f64,
    /// JSON K x K cost matrix; unit costs when absent.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "independent")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1e-9)]
    pub solver_tol: f64,
    /// Outer iterations of the D-optimal solver.
    #[arg(long, default_value_t = 50)]
    pub solver_iter: usize,
    #[command(flatten)]
    pub learner: LearnerOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub items: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Policy JSONL path.
    #[arg(long)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Solver report; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    pub report: Option<PathBuf>,
    /// Also sample selections (JSONL) from the policy.
    #[arg(long)]
    pub sample: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub eps_mix: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,3,5")]
    pub ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub cs: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupt a closed form on purpose (self-test of the checker).
    #[arg(long, value_enum, hide = true)]
    pub mutate: Option<MutationArg>,
    #[arg(long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    /// A report written by estimate, coverage, acquire or check-jacobians.
    #[arg(long)]
    pub report: PathBuf,
    /// Where the reproduced report goes; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Policy path when re-running acquire.
    #[arg(long)]
    pub policy: Option<PathBuf>,
}
