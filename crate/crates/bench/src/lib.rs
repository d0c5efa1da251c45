//! Fixtures shared by the benchmarks.

use gars_core::functionals::random_interior_mu;
use gars_core::simbench::{DgpSpec, Simulator};
use gars_core::{rng, MuTensor, PiMatrix, PreferenceDataset};

pub fn interior_mu(k: usize, c: usize, seed: u64) -> MuTensor {
    random_interior_mu(k, c, 0.05, &mut rng::stream(seed, 0, 0))
}

/// Three-category tie data with its true nuisances.
pub fn tie_sample(n: usize, seed: u64) -> (PreferenceDataset, Vec<MuTensor>, Vec<PiMatrix>) {
    Simulator::new(DgpSpec::debiasing(seed)).unwrap().sample_dataset(n, seed).unwrap()
}
