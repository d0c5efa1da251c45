//! Generalized average ranking scores (GARS) from contextual pairwise
//! preferences: plug-in and debiased one-step estimators, simultaneous
//! confidence sets, and budget-constrained label acquisition.

pub mod acquisition;
pub mod btmodel;
pub mod error;
pub mod functionals;
pub mod inference;
pub mod io;
pub mod model;
pub mod nuisance;
pub mod rng;
pub mod simbench;

pub use error::{GarsError, Result};
pub use functionals::{evaluate, GarsKind, GarsSpec, MiscalLoss};
pub use model::{
    clamp_mu, symmetrized_scores, CategoryScheme, ItemSet, JudgeEntry, LabeledPair, MuTensor, PiMatrix,
    PreferenceDataset,
};
