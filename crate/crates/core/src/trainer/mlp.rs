//! Softmax classifier with an optional ReLU hidden layer, trained by
//! minibatch SGD with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::stream_rng;
use crate::error::{Error, Result};
use crate::types::{FeatureMatrix, LabelDistribution};

/// Layer sizes `[d, h, C]`; `h = 0` means a linear softmax classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpClassifier {
    d: usize,
    h: usize,
    c: usize,
    /// Flat parameters: `[W1 (d×h), b1 (h)]` when `h > 0`, then `W2 (in×C), b2 (C)`.
    params: Vec<f64>,
}

/// Regularizer weights added to the soft-target cross-entropy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegWeights {
    /// KL of the batch-mean prediction from the uniform prior.
    pub uniform_prior: f64,
    /// Mean negative entropy of the predictions.
    pub neg_entropy: f64,
}

struct Activations {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
}

impl MlpClassifier {
    /// He-uniform first layer, Glorot-uniform output layer, zero biases.
    pub fn new(d: usize, h: usize, c: usize, seed: u64) -> Result<Self> {
        if d == 0 || c < 2 {
            return Err(Error::input(format!(
                "classifier needs d >= 1 and C >= 2, got d={d} C={c}"
            )));
        }
        let mut model = Self::zeros(d, h, c);
        let mut rng = stream_rng(seed, 0x6d6c70);
        let out_in = model.out_in();
        if h > 0 {
            let bound = (6.0 / d as f64).sqrt();
            for w in &mut model.params[..d * h] {
                *w = rng.random_range(-bound..bound);
            }
        }
        let bound = (6.0 / (out_in + c) as f64).sqrt();
        let w2 = model.w2_offset();
        for w in &mut model.params[w2..w2 + out_in * c] {
            *w = rng.random_range(-bound..bound);
        }
        Ok(model)
    }

    pub fn zeros(d: usize, h: usize, c: usize) -> Self {
        let out_in = if h > 0 { h } else { d };
        let hidden_params = if h > 0 { d * h + h } else { 0 };
        Self {
            d,
            h,
            c,
            params: vec![0.0; hidden_params + out_in * c + c],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn hidden_dim(&self) -> usize {
        self.h
    }

    pub fn classes(&self) -> usize {
        self.c
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn out_in(&self) -> usize {
        if self.h > 0 {
            self.h
        } else {
            self.d
        }
    }

    fn w2_offset(&self) -> usize {
        if self.h > 0 {
            self.d * self.h + self.h
        } else {
            0
        }
    }

    fn check_input(&self, x: &FeatureMatrix) -> Result<()> {
        if x.d() != self.d {
            return Err(Error::dim(format!(
                "input has {} features, model expects {}",
                x.d(),
                self.d
            )));
        }
        Ok(())
    }

    fn activations(&self, x: &FeatureMatrix) -> Activations {
        let (d, h, c) = (self.d, self.h, self.c);
        let b = x.n();
        let mut pre = Vec::new();
        let mut hidden = Vec::new();
        if h > 0 {
            let (w1, rest) = self.params.split_at(d * h);
            let b1 = &rest[..h];
            pre = vec![0.0; b * h];
            for (i, row) in x.rows().enumerate() {
                let out = &mut pre[i * h..(i + 1) * h];
                out.copy_from_slice(b1);
                for (k, &xk) in row.iter().enumerate() {
                    let wrow = &w1[k * h..(k + 1) * h];
                    out.iter_mut().zip(wrow).for_each(|(o, w)| *o += xk * w);
                }
            }
            hidden = pre.iter().map(|v| v.max(0.0)).collect();
        }
        let inputs: &[f64] = if h > 0 { &hidden } else { x.as_slice() };
        let out_in = self.out_in();
        let w2o = self.w2_offset();
        let w2 = &self.params[w2o..w2o + out_in * c];
        let b2 = &self.params[w2o + out_in * c..];

        let mut log_probs = vec![0.0; b * c];
        let mut probs = vec![0.0; b * c];
        for i in 0..b {
            let z = &mut log_probs[i * c..(i + 1) * c];
            z.copy_from_slice(b2);
            for (k, &a) in inputs[i * out_in..(i + 1) * out_in].iter().enumerate() {
                if a != 0.0 {
                    z.iter_mut()
                        .zip(&w2[k * c..(k + 1) * c])
                        .for_each(|(o, w)| *o += a * w);
                }
            }
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            z.iter_mut().for_each(|v| *v -= lse);
            for (p, lp) in probs[i * c..(i + 1) * c].iter_mut().zip(z.iter()) {
                *p = lp.exp();
            }
        }
        Activations {
            pre,
            hidden,
            log_probs,
            probs,
        }
    }

    /// Row-stochastic class probabilities.
    pub fn forward(&self, x: &FeatureMatrix) -> Result<LabelDistribution> {
        self.check_input(x)?;
        LabelDistribution::new(x.n(), self.c, self.activations(x).probs)
    }

    /// Hidden-layer representation; the inputs themselves when `h = 0`.
    pub fn hidden_features(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check_input(x)?;
        if self.h == 0 {
            return Ok(x.clone());
        }
        FeatureMatrix::new(x.n(), self.h, self.activations(x).hidden)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(self.forward(x)?.argmax())
    }

    /// Loss value only.
    pub fn loss(
        &self,
        x: &FeatureMatrix,
        targets: &LabelDistribution,
        reg: &RegWeights,
    ) -> Result<f64> {
        self.check_batch(x, targets)?;
        let act = self.activations(x);
        Ok(self.loss_terms(&act, targets, reg))
    }

    fn check_batch(&self, x: &FeatureMatrix, targets: &LabelDistribution) -> Result<()> {
        self.check_input(x)?;
        if targets.n() != x.n() || targets.classes() != self.c {
            return Err(Error::dim(format!(
                "targets are {}x{}, expected {}x{}",
                targets.n(),
                targets.classes(),
                x.n(),
                self.c
            )));
        }
        Ok(())
    }

    fn loss_terms(&self, act: &Activations, targets: &LabelDistribution, reg: &RegWeights) -> f64 {
        let c = self.c;
        let b = targets.n() as f64;
        let ce = -targets
            .as_slice()
            .iter()
            .zip(&act.log_probs)
            .map(|(y, lp)| y * lp)
            .sum::<f64>()
            / b;
        let mut loss = ce;
        if reg.uniform_prior != 0.0 {
            let prior = 1.0 / c as f64;
            let mean = batch_mean(&act.probs, c);
            let kl: f64 = mean.iter().map(|p| prior * (prior / p).ln()).sum();
            loss += reg.uniform_prior * kl;
        }
        if reg.neg_entropy != 0.0 {
            let neg_ent = act
                .probs
                .iter()
                .zip(&act.log_probs)
                .map(|(p, lp)| p * lp)
                .sum::<f64>()
                / b;
            loss += reg.neg_entropy * neg_ent;
        }
        loss
    }

    /// Mean soft-target cross-entropy plus regularizers, and its gradient
    /// with respect to every parameter (same layout as [`Self::params`]).
    pub fn loss_and_gradient(
        &self,
        x: &FeatureMatrix,
        targets: &LabelDistribution,
        reg: &RegWeights,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_batch(x, targets)?;
        let (d, h, c) = (self.d, self.h, self.c);
        let n = x.n();
        let bf = n as f64;
        let act = self.activations(x);
        let loss = self.loss_terms(&act, targets, reg);

        // Gradient with respect to the logits.
        let mut dz = vec![0.0; n * c];
        for i in 0..n {
            let p = &act.probs[i * c..(i + 1) * c];
            let y = targets.row(i);
            let mass: f64 = y.iter().sum();
            for k in 0..c {
                dz[i * c + k] = (p[k] * mass - y[k]) / bf;
            }
        }
        if reg.uniform_prior != 0.0 {
            let prior = 1.0 / c as f64;
            let mean = batch_mean(&act.probs, c);
            let g: Vec<f64> = mean.iter().map(|m| -reg.uniform_prior * prior / (bf * m)).collect();
            for i in 0..n {
                let p = &act.probs[i * c..(i + 1) * c];
                let pg: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
                for k in 0..c {
                    dz[i * c + k] += p[k] * (g[k] - pg);
                }
            }
        }
        if reg.neg_entropy != 0.0 {
            for i in 0..n {
                let p = &act.probs[i * c..(i + 1) * c];
                let lp = &act.log_probs[i * c..(i + 1) * c];
                let plp: f64 = p.iter().zip(lp).map(|(a, b)| a * b).sum();
                for k in 0..c {
                    dz[i * c + k] += reg.neg_entropy * p[k] * (lp[k] - plp) / bf;
                }
            }
        }

        let mut grad = vec![0.0; self.params.len()];
        let out_in = self.out_in();
        let w2o = self.w2_offset();
        let inputs: &[f64] = if h > 0 { &act.hidden } else { x.as_slice() };
        {
            let (gw2, gb2) = grad[w2o..].split_at_mut(out_in * c);
            for i in 0..n {
                let dzi = &dz[i * c..(i + 1) * c];
                gb2.iter_mut().zip(dzi).for_each(|(g, v)| *g += v);
                for (k, &a) in inputs[i * out_in..(i + 1) * out_in].iter().enumerate() {
                    if a != 0.0 {
                        gw2[k * c..(k + 1) * c]
                            .iter_mut()
                            .zip(dzi)
                            .for_each(|(g, v)| *g += a * v);
                    }
                }
            }
        }
        if h > 0 {
            let w2 = &self.params[w2o..w2o + h * c];
            let (gw1, rest) = grad.split_at_mut(d * h);
            let gb1 = &mut rest[..h];
            let mut dpre = vec![0.0; h];
            for i in 0..n {
                let dzi = &dz[i * c..(i + 1) * c];
                for (j, dp) in dpre.iter_mut().enumerate() {
                    *dp = if act.pre[i * h + j] > 0.0 {
                        w2[j * c..(j + 1) * c].iter().zip(dzi).map(|(w, v)| w * v).sum()
                    } else {
                        0.0
                    };
                }
                gb1.iter_mut().zip(&dpre).for_each(|(g, v)| *g += v);
                for (k, &xk) in x.row(i).iter().enumerate() {
                    if xk != 0.0 {
                        gw1[k * h..(k + 1) * h]
                            .iter_mut()
                            .zip(&dpre)
                            .for_each(|(g, v)| *g += xk * v);
                    }
                }
            }
        }
        Ok((loss, grad))
    }
}

fn batch_mean(probs: &[f64], c: usize) -> Vec<f64> {
    let rows = probs.len() / c;
    let mut mean = vec![0.0; c];
    for row in probs.chunks_exact(c) {
        mean.iter_mut().zip(row).for_each(|(m, p)| *m += p);
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    mean
}

/// Plain SGD with optional heavy-ball momentum and L2 weight decay.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(num_params: usize, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        for ((p, g), v) in params.iter_mut().zip(grad).zip(&mut self.velocity) {
            let g = g + self.weight_decay * *p;
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpClassifier::zeros(3, 4, 5);
        let x = FeatureMatrix::new(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0]).unwrap();
        for row in m.forward(&x).unwrap().rows() {
            for p in row {
                assert!((p - 0.2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rows_sum_to_one() {
        for h in [0, 7] {
            let m = MlpClassifier::new(4, h, 3, 9).unwrap();
            let x = FeatureMatrix::new(3, 4, (0..12).map(|v| v as f64 * 0.7 - 3.0).collect())
                .unwrap();
            for row in m.forward(&x).unwrap().rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|p| *p >= 0.0));
            }
        }
    }

    #[test]
    fn matching_targets_give_zero_logit_gradient() {
        // With y* = p the CE gradient vanishes; with h = 0 and x = 0 the
        // parameter gradient is exactly the logit gradient on b2.
        let m = MlpClassifier::new(2, 0, 3, 1).unwrap();
        let x = FeatureMatrix::new(1, 2, vec![0.3, -0.4]).unwrap();
        let p = m.forward(&x).unwrap();
        let (loss, g) = m.loss_and_gradient(&x, &p, &RegWeights::default()).unwrap();
        let entropy: f64 = -p.row(0).iter().map(|q| q * q.ln()).sum::<f64>();
        assert!((loss - entropy).abs() < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uniform_batch_has_zero_prior_penalty() {
        let m = MlpClassifier::zeros(2, 0, 4);
        let x = FeatureMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let targets = LabelDistribution::new(2, 4, vec![0.25; 8]).unwrap();
        let reg = RegWeights {
            uniform_prior: 1.0,
            neg_entropy: 0.0,
        };
        let plain = m.loss(&x, &targets, &RegWeights::default()).unwrap();
        assert!((m.loss(&x, &targets, &reg).unwrap() - plain).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let m = MlpClassifier::zeros(2, 0, 2);
        let x = FeatureMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(m.forward(&x), Err(Error::Dimension(_))));
        let x = FeatureMatrix::new(1, 2, vec![0.0; 2]).unwrap();
        let t = LabelDistribution::new(2, 2, vec![0.5; 4]).unwrap();
        assert!(m.loss_and_gradient(&x, &t, &RegWeights::default()).is_err());
        assert!(MlpClassifier::new(0, 1, 2, 0).is_err());
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut opt = Sgd::new(1, 0.5, 0.0);
        let mut p = [1.0];
        opt.step(&mut p, &[1.0], 0.1);
        opt.step(&mut p, &[1.0], 0.1);
        assert!((p[0] - (1.0 - 0.1 - 0.15)).abs() < 1e-15);
    }
}
