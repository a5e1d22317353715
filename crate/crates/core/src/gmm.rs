//! Small-loss baseline: a two-component 1-D Gaussian mixture fitted by EM on
//! per-sample losses. The lower-mean component is read as "clean".

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_labels, ConfidenceVector, LabelDistribution};

pub const VARIANCE_FLOOR: f64 = 1e-6;
const PROB_FLOOR: f64 = 1e-12;
const WEIGHT_FLOOR: f64 = 1e-12;

/// Two-component mixture, components ordered by mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gmm2 {
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub weights: [f64; 2],
}

impl Gmm2 {
    fn log_joint(&self, x: f64) -> [f64; 2] {
        let lj = |k: usize| {
            let v = self.variances[k];
            let d = x - self.means[k];
            self.weights[k].ln() - 0.5 * (2.0 * PI * v).ln() - d * d / (2.0 * v)
        };
        [lj(0), lj(1)]
    }

    fn ordered(mut self) -> Self {
        if self.means[0] > self.means[1] {
            self.means.swap(0, 1);
            self.variances.swap(0, 1);
            self.weights.swap(0, 1);
        }
        self
    }

    /// Mean log-likelihood per sample.
    pub fn mean_log_likelihood(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let [a, b] = self.log_joint(x);
                log_add(a, b)
            })
            .sum::<f64>()
            / xs.len() as f64
    }
}

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `−log(max(p[i, ỹ_i], 1e-12))`.
pub fn per_sample_loss(probs: &LabelDistribution, noisy_labels: &[usize]) -> Result<Vec<f64>> {
    if probs.n() != noisy_labels.len() {
        return Err(Error::dim(format!(
            "{} probability rows for {} labels",
            probs.n(),
            noisy_labels.len()
        )));
    }
    check_labels(noisy_labels, probs.classes())?;
    Ok(noisy_labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.get(i, y).max(PROB_FLOOR).ln())
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Stop when the mean log-likelihood changes by less than this.
    pub tol: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmmFit {
    pub model: Gmm2,
    /// Mean log-likelihood after initialization and after each EM step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Initialize by splitting at the median, then run EM.
pub fn fit_gmm2(losses: &[f64], config: &GmmConfig) -> Result<GmmFit> {
    if losses.len() < 2 {
        return Err(Error::input("mixture fit needs at least two losses"));
    }
    if let Some(i) = losses.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("loss at index {i} is not finite")));
    }
    let first = losses[0];
    if losses.iter().all(|&v| v == first) {
        return Err(Error::DegenerateFit(format!(
            "all {} losses equal {first}",
            losses.len()
        )));
    }

    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let half = sorted.len() / 2;
    let moments = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
        (m, v.max(VARIANCE_FLOOR))
    };
    let (m0, v0) = moments(&sorted[..half]);
    let (m1, v1) = moments(&sorted[half..]);
    let w0 = half as f64 / sorted.len() as f64;
    let mut model = Gmm2 {
        means: [m0, m1],
        variances: [v0, v1],
        weights: [w0, 1.0 - w0],
    };

    let n = losses.len() as f64;
    let mut trace = vec![model.mean_log_likelihood(losses)];
    let mut converged = false;
    let mut iterations = 0;
    let mut resp = vec![0.0; losses.len()];

    for _ in 0..config.max_iter {
        iterations += 1;
        // E-step: responsibility of component 0.
        for (r, &x) in resp.iter_mut().zip(losses) {
            let [a, b] = model.log_joint(x);
            *r = 1.0 / (1.0 + (b - a).exp());
        }
        // M-step.
        let mut next = model;
        for k in 0..2 {
            let weight_of = |r: f64| if k == 0 { r } else { 1.0 - r };
            let nk: f64 = resp.iter().map(|&r| weight_of(r)).sum();
            if nk <= WEIGHT_FLOOR * n {
                next.weights[k] = WEIGHT_FLOOR;
                continue;
            }
            let mean = resp
                .iter()
                .zip(losses)
                .map(|(&r, &x)| weight_of(r) * x)
                .sum::<f64>()
                / nk;
            let var = resp
                .iter()
                .zip(losses)
                .map(|(&r, &x)| weight_of(r) * (x - mean) * (x - mean))
                .sum::<f64>()
                / nk;
            next.means[k] = mean;
            next.variances[k] = var.max(VARIANCE_FLOOR);
            next.weights[k] = nk / n;
        }
        let total = next.weights[0] + next.weights[1];
        next.weights[0] /= total;
        next.weights[1] = 1.0 - next.weights[0];
        model = next;

        let ll = model.mean_log_likelihood(losses);
        let delta = ll - trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        trace.push(ll);
        if delta.abs() < config.tol {
            converged = true;
            break;
        }
    }

    Ok(GmmFit {
        model: model.ordered(),
        log_likelihood: trace,
        iterations,
        converged,
    })
}

/// Posterior probability of the lower-mean component for each loss.
pub fn clean_posterior(model: &Gmm2, losses: &[f64]) -> ConfidenceVector {
    let values = losses
        .iter()
        .map(|&x| {
            let [a, b] = model.log_joint(x);
            let p = 1.0 / (1.0 + (b - a).exp());
            if p.is_nan() {
                0.5
            } else {
                p
            }
        })
        .collect();
    ConfidenceVector::new(values).expect("posterior is a probability")
}

/// Fit and score in one call. A degenerate fit yields full trust for every
/// sample instead of an error.
pub fn gmm_confidence(losses: &[f64], config: &GmmConfig) -> Result<(ConfidenceVector, Option<Gmm2>)> {
    match fit_gmm2(losses, config) {
        Ok(fit) => Ok((clean_posterior(&fit.model, losses), Some(fit.model))),
        Err(Error::DegenerateFit(_)) => Ok((ConfidenceVector::ones(losses.len()), None)),
        Err(e) => Err(e),
    }
}

/// Running mean of per-sample losses over the last `window` epochs.
#[derive(Clone, Debug)]
pub struct LossHistory {
    window: usize,
    epochs: VecDeque<Vec<f64>>,
}

impl LossHistory {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            epochs: VecDeque::new(),
        }
    }

    pub fn push(&mut self, losses: Vec<f64>) -> Result<()> {
        if let Some(prev) = self.epochs.front() {
            if prev.len() != losses.len() {
                return Err(Error::dim("loss history length changed between epochs"));
            }
        }
        if self.epochs.len() == self.window {
            self.epochs.pop_front();
        }
        self.epochs.push_back(losses);
        Ok(())
    }

    pub fn averaged(&self) -> Option<Vec<f64>> {
        let first = self.epochs.front()?;
        let mut acc = vec![0.0; first.len()];
        for epoch in &self.epochs {
            for (a, v) in acc.iter_mut().zip(epoch) {
                *a += v;
            }
        }
        let k = self.epochs.len() as f64;
        Some(acc.into_iter().map(|a| a / k).collect())
    }
}
