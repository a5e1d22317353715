//! Self-contained experiment: synthesize blobs, corrupt the training split,
//! run the co-training pipeline.

use serde::{Deserialize, Serialize};

use super::{run_pipeline, PipelineOutput, TrainConfig};
use crate::corpus::{make_gaussian_blobs, BlobSpec, NoiseKind, NoiseSpec, TransitionMatrix};
use crate::error::Result;
use crate::types::NoisyDataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub train: usize,
    pub test: usize,
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    #[serde(default = "unit_spread")]
    pub spread: f64,
    pub seed: u64,
}

fn unit_spread() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub rate: f64,
    /// Row-stochastic `C × C` matrix; required for asymmetric noise.
    #[serde(default)]
    pub transition: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub train: NoisyDataset,
    pub test: NoisyDataset,
    pub pipeline: PipelineOutput,
}

impl ExperimentConfig {
    /// Clean test split and noisy training split.
    pub fn datasets(&self) -> Result<(NoisyDataset, NoisyDataset)> {
        let all = make_gaussian_blobs(&BlobSpec {
            n: self.data.train + self.data.test,
            classes: self.data.classes,
            dim: self.data.dim,
            separation: self.data.separation,
            spread: self.data.spread,
            seed: self.data.seed,
        })?;
        let (train, test) = all.split_at(self.data.train)?;
        let spec = NoiseSpec {
            kind: self.noise.kind,
            rate: self.noise.rate,
            transition: self
                .noise
                .transition
                .clone()
                .map(TransitionMatrix::new)
                .transpose()?,
            seed: self.noise.seed,
        };
        Ok((spec.apply(&train)?, test))
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.train.validate()?;
    let (train, test) = config.datasets()?;
    let pipeline = run_pipeline(&train, &test, &config.train)?;
    Ok(ExperimentOutput {
        train,
        test,
        pipeline,
    })
}
