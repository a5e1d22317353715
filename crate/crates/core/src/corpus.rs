//! Synthetic Gaussian blobs and label-noise injection.
//!
//! All randomness is drawn from ChaCha8 streams derived from explicit seeds,
//! so datasets are reproducible across platforms.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::dot;
use crate::types::{check_labels, FeatureMatrix, NoisyDataset};

// Independent ChaCha streams per purpose, same seed.
const STREAM_DIRECTIONS: u64 = 1;
const STREAM_POINTS: u64 = 2;
const STREAM_NOISE: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n: usize,
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub spread: f64,
    pub seed: u64,
}

/// Unit class directions: Gram–Schmidt over seeded Gaussian rows. Beyond `d`
/// classes the extra rows are only normalized.
pub fn class_directions(classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, STREAM_DIRECTIONS);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while out.len() < classes {
        let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let raw_norm = dot(&raw, &raw).sqrt();
        if raw_norm < 1e-12 {
            continue;
        }
        let mut v = raw.clone();
        if out.len() < dim {
            for u in &out {
                let p = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(x, ui)| *x -= p * ui);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-9 * raw_norm {
            continue;
        }
        out.push(v.into_iter().map(|x| x / norm).collect());
    }
    out
}

/// Labels cycle `0, 1, …, C−1`, so class sizes differ by at most one.
/// Noisy labels start equal to the true labels.
pub fn make_gaussian_blobs(spec: &BlobSpec) -> Result<NoisyDataset> {
    if spec.classes == 0 || spec.dim == 0 {
        return Err(Error::input("classes and dim must be at least 1"));
    }
    if spec.n < spec.classes {
        return Err(Error::input(format!(
            "need n >= classes, got n={} classes={}",
            spec.n, spec.classes
        )));
    }
    if !(spec.separation > 0.0 && spec.separation.is_finite()) {
        return Err(Error::input("separation must be > 0"));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(Error::input("spread must be >= 0"));
    }
    let dirs = class_directions(spec.classes, spec.dim, spec.seed);
    let mut rng = stream_rng(spec.seed, STREAM_POINTS);
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    let mut data = Vec::with_capacity(spec.n * spec.dim);
    for &y in &labels {
        for &u in &dirs[y] {
            let eps: f64 = StandardNormal.sample(&mut rng);
            data.push(spec.separation * u + spec.spread * eps);
        }
    }
    let features = FeatureMatrix::new(spec.n, spec.dim, data)?;
    NoisyDataset::new(features, labels.clone(), spec.classes, Some(labels))
}

/// Row-stochastic `C × C` label transition matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let c = rows.len();
        if c == 0 {
            return Err(Error::input("transition matrix is empty"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != c {
                return Err(Error::input(format!(
                    "transition row {i} has {} entries, expected {c}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::input(format!(
                    "transition row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::input(format!("transition row {i} sums to {s}, not 1")));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(c: usize) -> Self {
        Self {
            rows: (0..c)
                .map(|i| (0..c).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    /// `i → (i + shift) mod C` with probability one.
    pub fn cyclic_shift(c: usize, shift: usize) -> Self {
        Self {
            rows: (0..c)
                .map(|i| (0..c).map(|j| if j == (i + shift) % c { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Headerless CSV, one row per source class.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(csv_error)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            let row = record
                .iter()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("'{tok}' is not a number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    fn sample(&self, from: usize, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row = &self.rows[from];
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // Rounding left u above the cumulative sum: take the last reachable class.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(from)
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::input(format!("noise rate {rate} is outside [0, 1]")));
    }
    Ok(())
}

/// With probability `rate` each label is redrawn uniformly over all classes
/// (so it may land on its original value).
pub fn corrupt_symmetric(
    labels: &[usize],
    num_classes: usize,
    rate: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    check_rate(rate)?;
    check_labels(labels, num_classes)?;
    let mut rng = stream_rng(seed, STREAM_NOISE);
    Ok(labels
        .iter()
        .map(|&y| {
            let flip = rng.random::<f64>() < rate;
            let candidate = rng.random_range(0..num_classes);
            if flip {
                candidate
            } else {
                y
            }
        })
        .collect())
}

/// With probability `rate` each label is resampled from its transition row.
pub fn corrupt_asymmetric(
    labels: &[usize],
    rate: f64,
    transition: &TransitionMatrix,
    seed: u64,
) -> Result<Vec<usize>> {
    check_rate(rate)?;
    check_labels(labels, transition.classes())?;
    let mut rng = stream_rng(seed, STREAM_NOISE);
    Ok(labels
        .iter()
        .map(|&y| {
            let flip = rng.random::<f64>() < rate;
            let candidate = transition.sample(y, &mut rng);
            if flip {
                candidate
            } else {
                y
            }
        })
        .collect())
}

pub fn inject_symmetric(dataset: &NoisyDataset, rate: f64, seed: u64) -> Result<NoisyDataset> {
    let labels = corrupt_symmetric(dataset.noisy_labels(), dataset.num_classes(), rate, seed)?;
    dataset.with_noisy_labels(labels)
}

pub fn inject_asymmetric(
    dataset: &NoisyDataset,
    rate: f64,
    transition: &TransitionMatrix,
    seed: u64,
) -> Result<NoisyDataset> {
    if transition.classes() != dataset.num_classes() {
        return Err(Error::input(format!(
            "transition matrix is {0}x{0} but the dataset has {1} classes",
            transition.classes(),
            dataset.num_classes()
        )));
    }
    let labels = corrupt_asymmetric(dataset.noisy_labels(), rate, transition, seed)?;
    dataset.with_noisy_labels(labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
}

#[derive(Clone, Debug)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub transition: Option<TransitionMatrix>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn apply(&self, dataset: &NoisyDataset) -> Result<NoisyDataset> {
        if let Some(t) = &self.transition {
            if t.classes() != dataset.num_classes() {
                return Err(Error::input(format!(
                    "transition matrix is {0}x{0} but the dataset has {1} classes",
                    t.classes(),
                    dataset.num_classes()
                )));
            }
        }
        let labels = self.apply_to_labels(dataset.noisy_labels(), dataset.num_classes())?;
        dataset.with_noisy_labels(labels)
    }

    pub fn apply_to_labels(&self, labels: &[usize], num_classes: usize) -> Result<Vec<usize>> {
        match (self.kind, &self.transition) {
            (NoiseKind::Symmetric, _) => corrupt_symmetric(labels, num_classes, self.rate, self.seed),
            (NoiseKind::Asymmetric, Some(t)) => corrupt_asymmetric(labels, self.rate, t, self.seed),
            (NoiseKind::Asymmetric, None) => {
                Err(Error::input("asymmetric noise needs a transition matrix"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, c: usize, d: usize, sep: f64, spread: f64, seed: u64) -> NoisyDataset {
        make_gaussian_blobs(&BlobSpec {
            n,
            classes: c,
            dim: d,
            separation: sep,
            spread,
            seed,
        })
        .unwrap()
    }

    fn flipped_fraction(ds: &NoisyDataset) -> f64 {
        let mask = ds.clean_mask().unwrap();
        mask.iter().filter(|c| !**c).count() as f64 / mask.len() as f64
    }

    #[test]
    fn zero_spread_sits_on_means() {
        let ds = blobs(3, 3, 2, 10.0, 0.0, 4);
        let dirs = class_directions(3, 2, 4);
        for i in 0..3 {
            let y = ds.noisy_labels()[i];
            for (x, u) in ds.features().row(i).iter().zip(&dirs[y]) {
                assert_eq!(*x, 10.0 * u);
            }
        }
    }

    #[test]
    fn directions_orthonormal_up_to_dim() {
        let dirs = class_directions(5, 8, 2);
        for a in 0..5 {
            for b in 0..5 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot(&dirs[a], &dirs[b]) - want).abs() < 1e-12);
            }
        }
        // More classes than dimensions still gives unit vectors.
        for u in class_directions(4, 2, 1) {
            assert!((dot(&u, &u) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let a = blobs(100, 7, 5, 3.0, 1.0, 9);
        let b = blobs(100, 7, 5, 3.0, 1.0, 9);
        assert_eq!(a.features(), b.features());
        let mut counts = [0usize; 7];
        for &y in a.noisy_labels() {
            counts[y] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert!(make_gaussian_blobs(&BlobSpec {
            n: 2,
            classes: 3,
            dim: 2,
            separation: 1.0,
            spread: 1.0,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn one_nn_on_separated_blobs() {
        // Brute-force 1-NN (Euclidean), leave-one-out on the true labels.
        let ds = blobs(300, 3, 8, 8.0, 1.0, 17);
        let f = ds.features();
        let truth = ds.truth_for_evaluation().unwrap();
        let mut hits = 0;
        for i in 0..f.n() {
            let mut best = (f64::INFINITY, 0);
            for j in 0..f.n() {
                if i == j {
                    continue;
                }
                let d2: f64 = f.row(i).iter().zip(f.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 < best.0 {
                    best = (d2, j);
                }
            }
            hits += usize::from(truth[best.1] == truth[i]);
        }
        assert!(hits as f64 / 300.0 >= 0.99);
    }

    #[test]
    fn symmetric_rates() {
        let ds = blobs(10, 2, 2, 1.0, 1.0, 0);
        assert_eq!(inject_symmetric(&ds, 0.0, 1).unwrap().noisy_labels(), ds.noisy_labels());
        for seed in 0..3 {
            let ds = blobs(10_000, 2, 2, 1.0, 1.0, seed);
            let frac = flipped_fraction(&inject_symmetric(&ds, 1.0, seed).unwrap());
            assert!((frac - 0.5).abs() <= 0.02, "{frac}");
            let ds = blobs(10_000, 10, 2, 1.0, 1.0, seed);
            let frac = flipped_fraction(&inject_symmetric(&ds, 0.5, seed).unwrap());
            assert!((frac - 0.45).abs() <= 0.02, "{frac}");
        }
        assert!(inject_symmetric(&ds, 1.5, 0).is_err());
    }

    #[test]
    fn noise_leaves_features_and_truth() {
        let ds = blobs(200, 4, 3, 2.0, 1.0, 5);
        let noisy = inject_symmetric(&ds, 0.6, 2).unwrap();
        assert_eq!(noisy.features(), ds.features());
        assert_eq!(noisy.truth_for_evaluation(), ds.truth_for_evaluation());
        let t = TransitionMatrix::cyclic_shift(4, 1);
        let noisy = inject_asymmetric(&ds, 0.6, &t, 2).unwrap();
        assert_eq!(noisy.features(), ds.features());
        assert_eq!(noisy.truth_for_evaluation(), ds.truth_for_evaluation());
    }

    #[test]
    fn asymmetric_examples() {
        let ds = blobs(500, 3, 2, 1.0, 1.0, 1);
        let same = inject_asymmetric(&ds, 0.9, &TransitionMatrix::identity(3), 4).unwrap();
        assert_eq!(same.noisy_labels(), ds.noisy_labels());

        let ds2 = blobs(50, 2, 2, 1.0, 1.0, 1);
        let swap = TransitionMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let flipped = inject_asymmetric(&ds2, 1.0, &swap, 4).unwrap();
        for (a, b) in flipped.noisy_labels().iter().zip(ds2.noisy_labels()) {
            assert_eq!(*a, 1 - *b);
        }
    }

    #[test]
    fn cyclic_confusion_mass() {
        for seed in 0..3 {
            let ds = blobs(10_000, 3, 2, 1.0, 1.0, seed);
            let noisy =
                inject_asymmetric(&ds, 0.4, &TransitionMatrix::cyclic_shift(3, 1), seed).unwrap();
            let truth = ds.truth_for_evaluation().unwrap();
            for c in 0..3 {
                let members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == c).collect();
                let moved = members
                    .iter()
                    .filter(|&&i| noisy.noisy_labels()[i] != c)
                    .count();
                let shifted = members
                    .iter()
                    .filter(|&&i| noisy.noisy_labels()[i] == (c + 1) % 3)
                    .count();
                let frac = moved as f64 / members.len() as f64;
                assert!((frac - 0.4).abs() <= 0.02, "class {c}: {frac}");
                assert_eq!(moved, shifted);
            }
        }
    }

    #[test]
    fn transition_validation() {
        assert!(TransitionMatrix::new(vec![vec![0.5, 0.4], vec![0.0, 1.0]]).is_err());
        assert!(TransitionMatrix::new(vec![vec![1.0, 0.0]]).is_err());
        assert!(TransitionMatrix::new(vec![vec![1.5, -0.5], vec![0.0, 1.0]]).is_err());
        let ds = blobs(10, 3, 2, 1.0, 1.0, 0);
        assert!(inject_asymmetric(&ds, 0.5, &TransitionMatrix::identity(2), 0).is_err());
    }
}
