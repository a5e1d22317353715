//! Co-training loop: warm-up on noisy labels, then per round a confidence
//! estimate from the peer model's hidden features and refurbished targets
//! for every minibatch.

mod experiment;
mod mlp;
mod targets;

pub use experiment::{run_experiment, DataSpec, ExperimentConfig, ExperimentOutput, NoiseConfig};
pub use mlp::{MlpClassifier, RegWeights, Sgd};
pub use targets::{cotrain_pseudo_label, refurbish, refurbish_all, sharpen, sharpen_rows};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::stream_rng;
use crate::error::{Error, Result};
use crate::laplace::{estimate, EstimatorConfig, SolverConfig};
use crate::metrics::{accuracy, noise_detection_scores, DEFAULT_THRESHOLD};
use crate::reduce::{pca_fit, pca_transform};
use crate::types::{ConfidenceVector, FeatureMatrix, LabelDistribution, NoisyDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Total rounds, warm-up included.
    pub rounds: usize,
    /// Leading rounds of plain training on the noisy labels, one epoch each.
    pub warmup_rounds: usize,
    /// SGD iterations per refurbishment round.
    pub iterations_per_round: usize,
    pub batch_size: usize,
    /// Hidden width; 0 trains a linear softmax classifier on the raw features.
    pub hidden: usize,
    pub learning_rate: f64,
    /// First round that uses `decayed_learning_rate`.
    pub decay_round: Option<usize>,
    pub decayed_learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub temperature: f64,
    pub k: usize,
    pub mu: f64,
    /// Weight of the uniform-prior penalty during refurbishment rounds.
    pub uniform_prior_weight: f64,
    /// Weight of the negative-entropy penalty during warm-up.
    pub neg_entropy_weight: f64,
    /// Feature jitter; `None` means 0.05 × the pooled feature std.
    pub jitter: Option<f64>,
    /// Project graph features to this many principal components first.
    pub pca_dim: Option<usize>,
    /// Scale graph features to unit norm before the k-NN search.
    pub normalize_graph_features: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            warmup_rounds: 10,
            iterations_per_round: 20,
            batch_size: 64,
            hidden: 32,
            learning_rate: 0.1,
            decay_round: None,
            decayed_learning_rate: 0.01,
            momentum: 0.0,
            weight_decay: 5e-4,
            temperature: 0.5,
            k: 10,
            mu: 1.0,
            uniform_prior_weight: 1.0,
            neg_entropy_weight: 0.0,
            jitter: None,
            pca_dim: None,
            normalize_graph_features: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::input(msg));
        if self.rounds == 0 {
            return fail("rounds must be >= 1".into());
        }
        if self.warmup_rounds > self.rounds {
            return fail(format!(
                "warmup_rounds ({}) exceeds rounds ({})",
                self.warmup_rounds, self.rounds
            ));
        }
        if self.iterations_per_round == 0 || self.batch_size == 0 {
            return fail("iterations_per_round and batch_size must be >= 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be > 0, got {}", self.temperature));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("decayed_learning_rate", self.decayed_learning_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be > 0, got {v}"));
            }
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("uniform_prior_weight", self.uniform_prior_weight),
            ("neg_entropy_weight", self.neg_entropy_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.momentum >= 1.0 {
            return fail(format!("momentum must be < 1, got {}", self.momentum));
        }
        if let Some(s) = self.jitter {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!("jitter must be >= 0, got {s}"));
            }
        }
        if self.pca_dim == Some(0) {
            return fail("pca_dim must be >= 1".into());
        }
        self.estimator().solver.validate()
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            k: self.k,
            normalize_features: self.normalize_graph_features,
            solver: SolverConfig {
                mu: self.mu,
                ..SolverConfig::default()
            },
        }
    }

    fn learning_rate_at(&self, round: usize) -> f64 {
        match self.decay_round {
            Some(r) if round >= r => self.decayed_learning_rate,
            _ => self.learning_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Refurbish,
    /// The confidence graph was degenerate; the model was not updated.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub model: usize,
    pub phase: Phase,
    pub learning_rate: f64,
    /// Mean minibatch loss over the round.
    pub loss: Option<f64>,
    /// Accuracy on the training features against the true labels.
    pub train_accuracy: Option<f64>,
    /// Agreement with the noisy training labels.
    pub noisy_label_fit: f64,
    pub test_accuracy: f64,
    pub noise_f1: Option<f64>,
    pub mean_confidence_clean: Option<f64>,
    pub mean_confidence_noisy: Option<f64>,
    pub cg_iterations: Option<usize>,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub models: [MlpClassifier; 2],
    pub rounds: Vec<RoundMetrics>,
    /// Ensemble test accuracy when warm-up ended; `None` without warm-up.
    pub warmup_test_accuracy: Option<f64>,
    /// Ensemble (mean of both models' probabilities) test accuracy at the end.
    pub final_test_accuracy: f64,
}

/// Mean of both models' predictions.
pub fn ensemble_predict(models: &[MlpClassifier; 2], x: &FeatureMatrix) -> Result<Vec<usize>> {
    let a = models[0].forward(x)?;
    let b = models[1].forward(x)?;
    let mean: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, q)| 0.5 * (p + q))
        .collect();
    Ok(LabelDistribution::new(a.n(), a.classes(), mean)?.argmax())
}

/// Cycles through a shuffled index order, reshuffling at each wrap.
struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n,
            rng,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let take = (size - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        out
    }

    /// One pass over the data in fresh order, split into batches.
    fn epoch(&mut self, size: usize) -> Vec<Vec<usize>> {
        self.order.shuffle(&mut self.rng);
        self.cursor = self.order.len();
        self.order.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
    }
}

struct Jitter {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl Jitter {
    fn view(&mut self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.sigma == 0.0 {
            return Ok(x.clone());
        }
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
        let data = x
            .as_slice()
            .iter()
            .map(|v| v + normal.sample(&mut self.rng))
            .collect();
        FeatureMatrix::new(x.n(), x.d(), data)
    }
}

// Stream ids for the pipeline's independent random sources.
const STREAM_INIT: u64 = 10;
const STREAM_BATCHES: u64 = 20;
const STREAM_JITTER: u64 = 30;

struct Evaluator<'a> {
    train: &'a NoisyDataset,
    test_x: &'a FeatureMatrix,
    test_y: &'a [usize],
    clean_mask: Option<Vec<bool>>,
}

impl Evaluator<'_> {
    fn record(
        &self,
        model: &MlpClassifier,
        base: RoundMetrics,
        confidence: Option<&ConfidenceVector>,
    ) -> Result<RoundMetrics> {
        let train_pred = model.predict(self.train.features())?;
        let mut m = base;
        m.noisy_label_fit = accuracy(&train_pred, self.train.noisy_labels())?;
        m.train_accuracy = self
            .train
            .truth_for_evaluation()
            .map(|t| accuracy(&train_pred, t))
            .transpose()?;
        m.test_accuracy = accuracy(&model.predict(self.test_x)?, self.test_y)?;
        if let (Some(w), Some(mask)) = (confidence, &self.clean_mask) {
            m.noise_f1 = Some(noise_detection_scores(w, mask, DEFAULT_THRESHOLD)?.f1);
            m.mean_confidence_clean = w.masked_mean(mask, true);
            m.mean_confidence_noisy = w.masked_mean(mask, false);
        }
        Ok(m)
    }
}

/// Train two co-supervising classifiers on `train` and report per-round
/// metrics on `test` (scored against its true labels when known).
pub fn run_pipeline(
    train: &NoisyDataset,
    test: &NoisyDataset,
    config: &TrainConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    let (d, c) = (train.features().d(), train.num_classes());
    if test.features().d() != d || test.num_classes() != c {
        return Err(Error::dim(format!(
            "test set is {}-dimensional with {} classes, train set {d} and {c}",
            test.features().d(),
            test.num_classes()
        )));
    }
    if let Some(m) = config.pca_dim {
        let width = if config.hidden > 0 { config.hidden } else { d };
        if m > width.min(train.len()) {
            return Err(Error::input(format!(
                "pca_dim {m} exceeds graph feature width {}",
                width.min(train.len())
            )));
        }
    }

    let sigma = config
        .jitter
        .unwrap_or_else(|| 0.05 * train.features().pooled_std());
    // Same structure, distinct initializations.
    let mut models = [
        MlpClassifier::new(d, config.hidden, c, init_seed(config.seed, 0))?,
        MlpClassifier::new(d, config.hidden, c, init_seed(config.seed, 1))?,
    ];
    let mut optimizers = models
        .each_ref()
        .map(|m| Sgd::new(m.params().len(), config.momentum, config.weight_decay));
    let mut batches = [0, 1].map(|m| BatchStream::new(train.len(), stream_rng(config.seed, STREAM_BATCHES + m)));
    let mut jitters = [0, 1].map(|m| Jitter {
        sigma,
        rng: stream_rng(config.seed, STREAM_JITTER + m),
    });

    let noisy_targets = train.one_hot();
    let test_y = test
        .truth_for_evaluation()
        .unwrap_or(test.noisy_labels())
        .to_vec();
    let eval = Evaluator {
        train,
        test_x: test.features(),
        test_y: &test_y,
        clean_mask: train.clean_mask(),
    };
    let warm_reg = RegWeights {
        uniform_prior: 0.0,
        neg_entropy: config.neg_entropy_weight,
    };
    let refurb_reg = RegWeights {
        uniform_prior: config.uniform_prior_weight,
        neg_entropy: 0.0,
    };

    let mut rounds = Vec::with_capacity(2 * config.rounds);
    let mut warmup_test_accuracy = None;
    for round in 0..config.rounds {
        let lr = config.learning_rate_at(round);
        for m in 0..2 {
            let base = RoundMetrics {
                round,
                model: m,
                phase: Phase::Warmup,
                learning_rate: lr,
                loss: None,
                train_accuracy: None,
                noisy_label_fit: 0.0,
                test_accuracy: 0.0,
                noise_f1: None,
                mean_confidence_clean: None,
                mean_confidence_noisy: None,
                cg_iterations: None,
                diagnostic: None,
            };

            if round < config.warmup_rounds {
                let mut total = 0.0;
                let epoch = batches[m].epoch(config.batch_size);
                for idx in &epoch {
                    let x = jitters[m].view(&train.features().select_rows(idx)?)?;
                    let y = select_targets(&noisy_targets, idx)?;
                    let (loss, grad) = models[m].loss_and_gradient(&x, &y, &warm_reg)?;
                    optimizers[m].step(models[m].params_mut(), &grad, lr);
                    total += loss;
                }
                let metrics = RoundMetrics {
                    loss: Some(total / epoch.len() as f64),
                    ..base
                };
                rounds.push(eval.record(&models[m], metrics, None)?);
                continue;
            }

            let peer = &models[1 - m];
            let graph_features = graph_features(peer, train.features(), config.pca_dim)?;
            let est = match estimate(&graph_features, train.noisy_labels(), c, &config.estimator()) {
                Ok(est) => est,
                Err(Error::DegenerateGraph { node }) => {
                    let metrics = RoundMetrics {
                        phase: Phase::Skipped,
                        diagnostic: Some(format!(
                            "peer features left node {node} without neighbours; round skipped"
                        )),
                        ..base
                    };
                    rounds.push(eval.record(&models[m], metrics, None)?);
                    continue;
                }
                Err(e) => return Err(e),
            };

            let mut total = 0.0;
            for _ in 0..config.iterations_per_round {
                let idx = batches[m].next_batch(config.batch_size);
                let x = jitters[m].view(&train.features().select_rows(&idx)?)?;
                let pseudo = cotrain_pseudo_label(
                    &models[0].forward(&x)?,
                    &models[1].forward(&x)?,
                    config.temperature,
                )?;
                let w: Vec<f64> = idx.iter().map(|&i| est.confidence.values()[i]).collect();
                let y = refurbish(&w, &select_targets(&noisy_targets, &idx)?, &pseudo)?;
                let (loss, grad) = models[m].loss_and_gradient(&x, &y, &refurb_reg)?;
                optimizers[m].step(models[m].params_mut(), &grad, lr);
                total += loss;
            }
            let metrics = RoundMetrics {
                phase: Phase::Refurbish,
                loss: Some(total / config.iterations_per_round as f64),
                cg_iterations: Some(est.stats.solve.iterations.iter().copied().max().unwrap_or(0)),
                ..base
            };
            rounds.push(eval.record(&models[m], metrics, Some(&est.confidence))?);
        }
        if round + 1 == config.warmup_rounds {
            warmup_test_accuracy = Some(accuracy(&ensemble_predict(&models, test.features())?, &test_y)?);
        }
    }

    let final_test_accuracy = accuracy(&ensemble_predict(&models, test.features())?, &test_y)?;
    Ok(PipelineOutput {
        models,
        rounds,
        warmup_test_accuracy,
        final_test_accuracy,
    })
}

fn init_seed(seed: u64, model: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, STREAM_INIT + model).next_u64()
}

fn select_targets(targets: &LabelDistribution, idx: &[usize]) -> Result<LabelDistribution> {
    let c = targets.classes();
    let mut data = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        data.extend_from_slice(targets.row(i));
    }
    LabelDistribution::new(idx.len(), c, data)
}

fn graph_features(
    peer: &MlpClassifier,
    x: &FeatureMatrix,
    pca_dim: Option<usize>,
) -> Result<FeatureMatrix> {
    let hidden = peer.hidden_features(x)?;
    match pca_dim {
        Some(m) => pca_transform(&pca_fit(&hidden, m)?, &hidden),
        None => Ok(hidden),
    }
}
