//! Oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

use lconf_core::corpus::{inject_symmetric, make_gaussian_blobs, BlobSpec};
use lconf_core::laplace::{laplacian_energy, SolverConfig};
use lconf_core::trainer::{MlpClassifier, RegWeights};
use lconf_core::{build_graph, one_hot, FeatureMatrix, LabelDistribution, SparseGraph};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub graph: SparseGraph,
    pub labels: Vec<usize>,
    pub ytilde: LabelDistribution,
    pub classes: usize,
    pub k: usize,
    pub mu: f64,
}

/// The randomized solver suite: N ≤ 200, k ∈ {2,5,10}, μ ∈ {0.1,1,10}.
/// Half the instances use nonnegative uniform features, half noisy blobs.
pub fn solver_suite(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|t| {
            let k = [2, 5, 10][t % 3];
            let mu = [0.1, 1.0, 10.0][(t / 3) % 3];
            let n = rng.random_range(20..=200);
            let classes = rng.random_range(2..=5);
            let features = if t % 2 == 0 {
                let d = rng.random_range(2..=8);
                FeatureMatrix::new(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect())
                    .unwrap()
            } else {
                let clean = make_gaussian_blobs(&BlobSpec {
                    n,
                    classes,
                    dim: 6,
                    separation: 6.0,
                    spread: 1.0,
                    seed: rng.random(),
                })
                .unwrap();
                clean.features().clone()
            };
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
            Instance {
                graph: build_graph(&features, k).unwrap(),
                ytilde: one_hot(&labels, classes).unwrap(),
                labels,
                classes,
                k,
                mu,
            }
        })
        .collect()
}

pub fn dense_system(graph: &SparseGraph, mu: f64) -> DMatrix<f64> {
    let n = graph.n();
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        for (j, v) in graph.normalized().row(i) {
            m[(i, j)] -= v / (1.0 + mu);
        }
    }
    m
}

/// Dense LU solve of `(I − Ā/(1+μ)) X = scale · Ỹ`.
pub fn dense_solve(graph: &SparseGraph, ytilde: &LabelDistribution, mu: f64, scale: f64) -> Vec<f64> {
    let (n, c) = (graph.n(), ytilde.classes());
    let lu = dense_system(graph, mu).lu();
    let mut out = vec![0.0; n * c];
    for col in 0..c {
        let b = DVector::from_iterator(n, ytilde.rows().map(|r| scale * r[col]));
        let x = lu.solve(&b).expect("system is nonsingular");
        for i in 0..n {
            out[i * c + col] = x[i];
        }
    }
    out
}

pub fn solver(mu: f64) -> SolverConfig {
    SolverConfig {
        mu,
        ..SolverConfig::default()
    }
}

/// Largest central-difference gradient component of the energy at `ybar`.
pub fn energy_gradient_max(
    graph: &SparseGraph,
    ybar: &LabelDistribution,
    ytilde: &LabelDistribution,
    mu: f64,
    step: f64,
) -> f64 {
    let (n, c) = (ybar.n(), ybar.classes());
    let mut data = ybar.as_slice().to_vec();
    let mut worst = 0.0f64;
    for idx in 0..n * c {
        let orig = data[idx];
        data[idx] = orig + step;
        let up = laplacian_energy(graph, &LabelDistribution::new(n, c, data.clone()).unwrap(), ytilde, mu).unwrap();
        data[idx] = orig - step;
        let down = laplacian_energy(graph, &LabelDistribution::new(n, c, data.clone()).unwrap(), ytilde, mu).unwrap();
        data[idx] = orig;
        worst = worst.max(((up - down) / (2.0 * step)).abs());
    }
    worst
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix, written
/// independently of the library's eigen solver. Returns (values, vectors as
/// columns of a row-major `n × n` buffer).
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = cs * vp - sn * vq;
                    row[q] = sn * vp + cs * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Random model, batch and soft targets for a gradient check; re-draws until
/// no hidden pre-activation sits within `margin` of the ReLU kink.
pub fn gradient_case(
    rng: &mut ChaCha8Rng,
    margin: f64,
) -> (MlpClassifier, FeatureMatrix, LabelDistribution, RegWeights) {
    loop {
        let d = rng.random_range(1..=6);
        let h = if rng.random_bool(0.25) { 0 } else { rng.random_range(1..=6) };
        let c = rng.random_range(2..=5);
        let b = rng.random_range(1..=6);
        let mut model = MlpClassifier::new(d, h, c, rng.random()).unwrap();
        for p in model.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let x = FeatureMatrix::new(b, d, (0..b * d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .unwrap();
        let mut targets = Vec::with_capacity(b * c);
        for _ in 0..b {
            let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            targets.extend(raw.into_iter().map(|v| v / s));
        }
        let reg = RegWeights {
            uniform_prior: rng.random_range(0.0..2.0),
            neg_entropy: rng.random_range(0.0..2.0),
        };
        if h > 0 && min_preactivation_gap(&model, &x) < margin {
            continue;
        }
        return (model, x, LabelDistribution::new(b, c, targets).unwrap(), reg);
    }
}

fn min_preactivation_gap(model: &MlpClassifier, x: &FeatureMatrix) -> f64 {
    let (d, h) = (model.input_dim(), model.hidden_dim());
    let p = model.params();
    let (w1, b1) = (&p[..d * h], &p[d * h..d * h + h]);
    let mut gap = f64::INFINITY;
    for row in x.rows() {
        for j in 0..h {
            let z: f64 = b1[j] + (0..d).map(|k| row[k] * w1[k * h + j]).sum::<f64>();
            gap = gap.min(z.abs());
        }
    }
    gap
}

/// Worst relative error between the analytic gradient and central differences.
pub fn gradient_check(
    model: &MlpClassifier,
    x: &FeatureMatrix,
    targets: &LabelDistribution,
    reg: &RegWeights,
    step: f64,
    floor: f64,
) -> f64 {
    let (_, grad) = model.loss_and_gradient(x, targets, reg).unwrap();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &analytic) in grad.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + step;
        let up = probe.loss(x, targets, reg).unwrap();
        probe.params_mut()[i] = orig - step;
        let down = probe.loss(x, targets, reg).unwrap();
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic.abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}

/// Blobs with symmetric noise plus the clean mask.
pub fn noisy_blobs(
    n: usize,
    classes: usize,
    dim: usize,
    rate: f64,
    seed: u64,
    noise_seed: u64,
) -> lconf_core::NoisyDataset {
    let clean = make_gaussian_blobs(&BlobSpec {
        n,
        classes,
        dim,
        separation: 8.0,
        spread: 1.0,
        seed,
    })
    .unwrap();
    inject_symmetric(&clean, rate, noise_seed).unwrap()
}
