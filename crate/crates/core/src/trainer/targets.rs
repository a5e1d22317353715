//! Soft training targets: temperature sharpening, co-training pseudo-labels
//! and label refurbishment.

use crate::error::{Error, Result};
use crate::types::{ConfidenceVector, LabelDistribution};

/// `p^(1/T)` renormalized. Computed in the log domain; zero entries stay zero.
pub fn sharpen(p: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::input(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let logs: Vec<f64> = p
        .iter()
        .map(|&v| if v > 0.0 { v.ln() / temperature } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::input("cannot sharpen an all-zero vector"));
    }
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

/// Row-wise [`sharpen`].
pub fn sharpen_rows(p: &LabelDistribution, temperature: f64) -> Result<LabelDistribution> {
    let mut data = Vec::with_capacity(p.as_slice().len());
    for row in p.rows() {
        data.extend(sharpen(row, temperature)?);
    }
    LabelDistribution::new(p.n(), p.classes(), data)
}

/// `Sharpen((p1 + p2) / 2)` row by row.
pub fn cotrain_pseudo_label(
    p1: &LabelDistribution,
    p2: &LabelDistribution,
    temperature: f64,
) -> Result<LabelDistribution> {
    if p1.n() != p2.n() || p1.classes() != p2.classes() {
        return Err(Error::dim(format!(
            "peer predictions are {}x{} and {}x{}",
            p1.n(),
            p1.classes(),
            p2.n(),
            p2.classes()
        )));
    }
    let mean: Vec<f64> = p1
        .as_slice()
        .iter()
        .zip(p2.as_slice())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    sharpen_rows(&LabelDistribution::new(p1.n(), p1.classes(), mean)?, temperature)
}

/// `y* = w·ỹ + (1 − w)·ŷ` row by row.
pub fn refurbish(
    w: &[f64],
    noisy: &LabelDistribution,
    pseudo: &LabelDistribution,
) -> Result<LabelDistribution> {
    if noisy.n() != w.len() || pseudo.n() != w.len() || noisy.classes() != pseudo.classes() {
        return Err(Error::dim(format!(
            "{} confidences, noisy {}x{}, pseudo {}x{}",
            w.len(),
            noisy.n(),
            noisy.classes(),
            pseudo.n(),
            pseudo.classes()
        )));
    }
    if let Some(bad) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::input(format!("confidence {bad} outside [0, 1]")));
    }
    let c = noisy.classes();
    let data = noisy
        .as_slice()
        .iter()
        .zip(pseudo.as_slice())
        .enumerate()
        .map(|(idx, (y, p))| {
            let wi = w[idx / c];
            wi * y + (1.0 - wi) * p
        })
        .collect();
    LabelDistribution::new(w.len(), c, data)
}

/// [`refurbish`] for a whole [`ConfidenceVector`].
pub fn refurbish_all(
    w: &ConfidenceVector,
    noisy: &LabelDistribution,
    pseudo: &LabelDistribution,
) -> Result<LabelDistribution> {
    refurbish(w.values(), noisy, pseudo)
}
