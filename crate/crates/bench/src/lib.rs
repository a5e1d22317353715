//! Shared fixtures for the estimator benchmarks under benches/.

use lconf_core::corpus::{inject_symmetric, make_gaussian_blobs, BlobSpec};
use lconf_core::NoisyDataset;

/// Separated blobs with 40% symmetric noise.
pub fn fixture(n: usize, classes: usize, dim: usize) -> NoisyDataset {
    let clean = make_gaussian_blobs(&BlobSpec {
        n,
        classes,
        dim,
        separation: 8.0,
        spread: 1.0,
        seed: 7,
    })
    .expect("valid blob spec");
    inject_symmetric(&clean, 0.4, 8).expect("valid noise rate")
}
