//! Shared domain types.
//!
//! Every matrix type is validated on construction (shape and finiteness) and
//! immutable afterwards, so values can be shared freely between threads.

use crate::error::{Error, Result};

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::input(format!(
            "{what}: non-finite entry at flat index {pos}"
        ))),
        None => Ok(()),
    }
}

/// Dense `n × d` matrix of sample embeddings, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::input(format!(
                "feature matrix must be non-empty, got {n}x{d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::dim(format!(
                "feature matrix {n}x{d} needs {} entries, got {}",
                n * d,
                data.len()
            )));
        }
        check_finite(&data, "feature matrix")?;
        Ok(Self { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::dim(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, d, data)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::input(format!("row index {i} out of range {}", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.d, data)
    }

    /// Copy with every row scaled to unit L2 norm; zero rows stay zero.
    pub fn l2_normalized(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.d) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Self {
            data,
            n: self.n,
            d: self.d,
        }
    }

    /// Standard deviation over all entries, pooled across columns around column means.
    pub fn pooled_std(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        let ss: f64 = self
            .rows()
            .map(|row| {
                row.iter()
                    .zip(&mean)
                    .map(|(v, m)| (v - m) * (v - m))
                    .sum::<f64>()
            })
            .sum();
        (ss / ((self.n - 1) * self.d) as f64).sqrt()
    }
}

/// Dense `n × c` matrix of (soft) label rows. Also used for the one-hot view
/// of noisy labels and for predicted class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDistribution {
    data: Vec<f64>,
    n: usize,
    c: usize,
}

impl LabelDistribution {
    pub fn new(n: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if c == 0 {
            return Err(Error::input("label distribution needs at least one class"));
        }
        if data.len() != n * c {
            return Err(Error::dim(format!(
                "label matrix {n}x{c} needs {} entries, got {}",
                n * c,
                data.len()
            )));
        }
        check_finite(&data, "label distribution")?;
        Ok(Self { data, n, c })
    }

    pub fn zeros(n: usize, c: usize) -> Self {
        Self {
            data: vec![0.0; n * c],
            n,
            c,
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let c = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * c);
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != c {
                return Err(Error::dim(format!("row {i} has wrong width")));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), c, data)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.c..(i + 1) * self.c]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.c + j]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.c)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Row-wise argmax; ties resolve to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                        if v > best.1 {
                            (j, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

/// One-hot matrix with a single 1.0 per row at `labels[i]`.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<LabelDistribution> {
    check_labels(labels, num_classes)?;
    let mut m = LabelDistribution::zeros(labels.len(), num_classes);
    let data = m.as_mut_slice();
    for (i, &y) in labels.iter().enumerate() {
        data[i * num_classes + y] = 1.0;
    }
    Ok(m)
}

pub(crate) fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    if num_classes == 0 {
        return Err(Error::input("number of classes must be at least 1"));
    }
    match labels.iter().position(|&y| y >= num_classes) {
        Some(i) => Err(Error::input(format!(
            "label {} at index {i} is out of range for {num_classes} classes",
            labels[i]
        ))),
        None => Ok(()),
    }
}

/// Per-sample estimate that the given label is clean, every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceVector(Vec<f64>);

impl ConfidenceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values
            .iter()
            .position(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
        {
            return Err(Error::input(format!(
                "confidence {} at index {i} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    /// All-ones confidence, the fallback when no estimate is available.
    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Mean over entries selected by `mask`; `None` when nothing is selected.
    pub fn masked_mean(&self, mask: &[bool], select: bool) -> Option<f64> {
        let (sum, count) = self
            .0
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m == select)
            .fold((0.0, 0usize), |(s, c), (w, _)| (s + w, c + 1));
        (count > 0).then(|| sum / count as f64)
    }
}

/// Features with noisy labels, plus ground truth kept apart for evaluation.
#[derive(Clone, Debug)]
pub struct NoisyDataset {
    features: FeatureMatrix,
    noisy_labels: Vec<usize>,
    num_classes: usize,
    true_labels: Option<Vec<usize>>,
}

impl NoisyDataset {
    pub fn new(
        features: FeatureMatrix,
        noisy_labels: Vec<usize>,
        num_classes: usize,
        true_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if noisy_labels.len() != features.n() {
            return Err(Error::dim(format!(
                "{} labels for {} samples",
                noisy_labels.len(),
                features.n()
            )));
        }
        check_labels(&noisy_labels, num_classes)?;
        if let Some(t) = &true_labels {
            if t.len() != features.n() {
                return Err(Error::dim(format!(
                    "{} true labels for {} samples",
                    t.len(),
                    features.n()
                )));
            }
            check_labels(t, num_classes)?;
        }
        Ok(Self {
            features,
            noisy_labels,
            num_classes,
            true_labels,
        })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn one_hot(&self) -> LabelDistribution {
        one_hot(&self.noisy_labels, self.num_classes).expect("labels validated at construction")
    }

    /// Hidden ground truth. Only evaluation code should call this.
    pub fn truth_for_evaluation(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    /// `noisy == true` per sample, when truth is known.
    pub fn clean_mask(&self) -> Option<Vec<bool>> {
        self.true_labels.as_ref().map(|t| {
            t.iter()
                .zip(&self.noisy_labels)
                .map(|(a, b)| a == b)
                .collect()
        })
    }

    /// Same features and truth, new observed labels.
    pub fn with_noisy_labels(&self, noisy_labels: Vec<usize>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            noisy_labels,
            self.num_classes,
            self.true_labels.clone(),
        )
    }

    /// Split into the first `at` samples and the rest.
    pub fn split_at(&self, at: usize) -> Result<(Self, Self)> {
        if at == 0 || at >= self.len() {
            return Err(Error::input(format!(
                "split point {at} must be inside (0, {})",
                self.len()
            )));
        }
        let head: Vec<usize> = (0..at).collect();
        let tail: Vec<usize> = (at..self.len()).collect();
        Ok((self.subset(&head)?, self.subset(&tail)?))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(indices)?;
        let pick = |v: &[usize]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self::new(
            features,
            pick(&self.noisy_labels),
            self.num_classes,
            self.true_labels.as_deref().map(pick),
        )
    }
}
