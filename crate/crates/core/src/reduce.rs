//! PCA projection of embeddings ahead of graph construction.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph::dot;
use crate::laplace::{estimate, Estimate, EstimatorConfig};
use crate::types::FeatureMatrix;

/// Target dimension used when none is given.
pub fn default_dim(d: usize) -> usize {
    d.min(64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `m × d`, orthonormal rows.
    components: Vec<f64>,
    explained_variance: Vec<f64>,
}

/// JSON sidecar stored next to the component matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcaSidecar {
    pub mean: Vec<f64>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn from_parts(
        mean: Vec<f64>,
        components: &FeatureMatrix,
        explained_variance: Vec<f64>,
    ) -> Result<Self> {
        if components.d() != mean.len() || components.n() != explained_variance.len() {
            return Err(Error::dim(format!(
                "PCA parts disagree: mean {}, components {}x{}, variances {}",
                mean.len(),
                components.n(),
                components.d(),
                explained_variance.len()
            )));
        }
        Ok(Self {
            mean,
            components: components.as_slice().to_vec(),
            explained_variance,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, k: usize) -> &[f64] {
        let d = self.input_dim();
        &self.components[k * d..(k + 1) * d]
    }

    pub fn components(&self) -> FeatureMatrix {
        FeatureMatrix::new(self.output_dim(), self.input_dim(), self.components.clone())
            .expect("components are finite")
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn sidecar(&self) -> PcaSidecar {
        PcaSidecar {
            mean: self.mean.clone(),
            explained_variance: self.explained_variance.clone(),
        }
    }
}

/// Top-`m` principal directions of the sample covariance (`1/(N−1)`).
///
/// Uses the `d × d` covariance when `N ≥ d` and the `N × N` Gram matrix
/// otherwise. Each component's largest-magnitude entry is made positive.
pub fn pca_fit(features: &FeatureMatrix, m: usize) -> Result<PcaModel> {
    let (n, d) = (features.n(), features.d());
    if m == 0 || m > n.min(d) {
        return Err(Error::input(format!(
            "PCA dimension {m} must lie in [1, {}]",
            n.min(d)
        )));
    }
    let mut mean = vec![0.0; d];
    for row in features.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| features.row(i)[j] - mean[j]);
    let denom = (n.max(2) - 1) as f64;

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut variances = Vec::with_capacity(m);

    if n >= d {
        let cov = (centered.transpose() * &centered) / denom;
        let eig = SymmetricEigen::new(cov);
        for idx in descending(eig.eigenvalues.as_slice()).into_iter().take(m) {
            components.push(eig.eigenvectors.column(idx).iter().copied().collect());
            variances.push(eig.eigenvalues[idx]);
        }
    } else {
        let gram = (&centered * centered.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        for idx in descending(eig.eigenvalues.as_slice()).into_iter().take(m) {
            let lambda = eig.eigenvalues[idx];
            // v = Xᵀu / ‖Xᵀu‖; zero for directions outside the data span.
            let v = centered.transpose() * eig.eigenvectors.column(idx);
            let norm = v.norm();
            if lambda > 1e-12 && norm > 1e-12 {
                components.push(v.iter().map(|x| x / norm).collect());
            } else {
                components.push(Vec::new());
            }
            variances.push(lambda);
        }
        complete_basis(&mut components, d);
    }

    for c in &mut components {
        let pivot = c
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, v)| {
                if v.abs() > best.1.abs() {
                    (j, *v)
                } else {
                    best
                }
            })
            .1;
        if pivot < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let explained_variance = variances.into_iter().map(|v| v.max(0.0)).collect();

    Ok(PcaModel {
        mean,
        components: components.concat(),
        explained_variance,
    })
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Fill empty slots with unit vectors orthogonal to the filled ones.
fn complete_basis(components: &mut [Vec<f64>], d: usize) {
    let mut axis = 0;
    for k in 0..components.len() {
        if !components[k].is_empty() {
            continue;
        }
        while axis < d {
            let mut v = vec![0.0; d];
            v[axis] = 1.0;
            axis += 1;
            for other in components.iter().filter(|c| !c.is_empty()) {
                let p = dot(&v, other);
                v.iter_mut().zip(other).for_each(|(x, o)| *x -= p * o);
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                components[k] = v;
                break;
            }
        }
    }
}

/// Center with the model mean and project onto the components.
pub fn pca_transform(model: &PcaModel, features: &FeatureMatrix) -> Result<FeatureMatrix> {
    let d = model.input_dim();
    if features.d() != d {
        return Err(Error::dim(format!(
            "features have dimension {}, PCA model expects {d}",
            features.d()
        )));
    }
    let m = model.output_dim();
    let rows: Vec<Vec<f64>> = (0..features.n())
        .into_par_iter()
        .map(|i| {
            let centered: Vec<f64> = features
                .row(i)
                .iter()
                .zip(&model.mean)
                .map(|(x, mu)| x - mu)
                .collect();
            (0..m).map(|k| dot(&centered, model.component(k))).collect()
        })
        .collect();
    FeatureMatrix::new(features.n(), m, rows.concat())
}

/// Map reduced coordinates back to the input space.
pub fn pca_inverse(model: &PcaModel, reduced: &FeatureMatrix) -> Result<FeatureMatrix> {
    let (d, m) = (model.input_dim(), model.output_dim());
    if reduced.d() != m {
        return Err(Error::dim(format!(
            "reduced features have dimension {}, PCA model has {m}",
            reduced.d()
        )));
    }
    let mut data = Vec::with_capacity(reduced.n() * d);
    for row in reduced.rows() {
        let mut x = model.mean.clone();
        for (k, coef) in row.iter().enumerate() {
            x.iter_mut()
                .zip(model.component(k))
                .for_each(|(xi, ci)| *xi += coef * ci);
        }
        data.extend(x);
    }
    FeatureMatrix::new(reduced.n(), d, data)
}

#[derive(Clone, Debug)]
pub struct ReducedEstimate {
    pub estimate: Estimate,
    pub model: Option<PcaModel>,
    /// Time spent fitting and applying PCA.
    pub reduce_seconds: f64,
}

/// Confidence estimation with an optional PCA projection of the features.
pub fn estimate_reduced(
    features: &FeatureMatrix,
    noisy_labels: &[usize],
    num_classes: usize,
    config: &EstimatorConfig,
    pca_dim: Option<usize>,
) -> Result<ReducedEstimate> {
    let Some(m) = pca_dim else {
        return Ok(ReducedEstimate {
            estimate: estimate(features, noisy_labels, num_classes, config)?,
            model: None,
            reduce_seconds: 0.0,
        });
    };
    let t0 = Instant::now();
    let model = pca_fit(features, m)?;
    let reduced = pca_transform(&model, features)?;
    let reduce_seconds = t0.elapsed().as_secs_f64();
    Ok(ReducedEstimate {
        estimate: estimate(&reduced, noisy_labels, num_classes, config)?,
        model: Some(model),
        reduce_seconds,
    })
}
