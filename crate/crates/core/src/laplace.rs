//! Label confidence from graph Laplacian energy minimization.
//!
//! The refined label matrix `Ȳ` minimizes
//!
//! ```text
//! Q(Ȳ) = ½ Σ_ij A_ij ‖ȳ_i/√D_i − ȳ_j/√D_j‖² + μ Σ_i ‖ȳ_i − ỹ_i‖²
//! ```
//!
//! whose stationarity condition is `(I − Ā/(1+μ)) Ȳ = μ/(1+μ) Ỹ`. The system
//! matrix has spectrum in `[μ/(1+μ), (2+μ)/(1+μ)]` for any valid graph, so
//! plain conjugate gradient converges quickly. Each of the `C` label columns is
//! an independent solve.
//!
//! Confidence for sample `i` is the row-normalized refined probability of its
//! observed label, `w_i = Ȳ[i, ỹ_i]`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, SparseGraph};
use crate::types::{check_labels, one_hot, ConfidenceVector, FeatureMatrix, LabelDistribution};

/// Right-hand side of the linear system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsMode {
    /// `M Ȳ = Ỹ`.
    #[default]
    Unscaled,
    /// `M Ȳ = μ/(1+μ) Ỹ`, the exact minimizer of the energy.
    Stationary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Fidelity coefficient μ.
    pub mu: f64,
    /// Relative residual tolerance `‖r‖₂ / ‖b‖₂`.
    pub tol: f64,
    pub max_iter: usize,
    pub rhs_mode: RhsMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            tol: 1e-8,
            max_iter: 2000,
            rhs_mode: RhsMode::Unscaled,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::input(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::input(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::input("max_iter must be at least 1"));
        }
        Ok(())
    }

    fn rhs_scale(&self) -> f64 {
        match self.rhs_mode {
            RhsMode::Unscaled => 1.0,
            RhsMode::Stationary => self.mu / (1.0 + self.mu),
        }
    }
}

fn check_shapes(graph: &SparseGraph, m: &LabelDistribution, what: &str) -> Result<()> {
    if m.n() != graph.n() {
        return Err(Error::dim(format!(
            "{what} has {} rows but the graph has {} nodes",
            m.n(),
            graph.n()
        )));
    }
    Ok(())
}

/// Energy of `ybar` against the observed labels `ytilde`.
pub fn laplacian_energy(
    graph: &SparseGraph,
    ybar: &LabelDistribution,
    ytilde: &LabelDistribution,
    mu: f64,
) -> Result<f64> {
    check_shapes(graph, ybar, "Ybar")?;
    check_shapes(graph, ytilde, "Ytilde")?;
    if ybar.classes() != ytilde.classes() {
        return Err(Error::dim(format!(
            "Ybar has {} classes, Ytilde has {}",
            ybar.classes(),
            ytilde.classes()
        )));
    }
    let a = graph.adjacency();
    let inv_sqrt_d: Vec<f64> = graph.degrees().iter().map(|d| d.sqrt().recip()).collect();

    let mut smooth = 0.0;
    for i in 0..graph.n() {
        let yi = ybar.row(i);
        for (j, w) in a.row(i) {
            let yj = ybar.row(j);
            let sq: f64 = yi
                .iter()
                .zip(yj)
                .map(|(p, q)| {
                    let diff = p * inv_sqrt_d[i] - q * inv_sqrt_d[j];
                    diff * diff
                })
                .sum();
            smooth += w * sq;
        }
    }
    let fidelity: f64 = ybar
        .as_slice()
        .iter()
        .zip(ytilde.as_slice())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok(0.5 * smooth + mu * fidelity)
}

#[derive(Clone, Debug)]
pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Unpreconditioned conjugate gradient for a symmetric positive definite
/// operator, starting from zero.
pub(crate) fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = graph::dot(b, b).sqrt();
    if b_norm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = graph::dot(&r, &r);
    let mut rel = rr.sqrt() / b_norm;

    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = graph::dot(&p, &ap);
        if pap <= 0.0 {
            // Operator not positive definite along p.
            return CgOutcome {
                x,
                iterations: it,
                relative_residual: rel,
                converged: false,
            };
        }
        let alpha = rr / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        let rr_new = graph::dot(&r, &r);
        rel = rr_new.sqrt() / b_norm;
        if rel <= tol {
            return CgOutcome {
                x,
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    CgOutcome {
        x,
        iterations: max_iter,
        relative_residual: rel,
        converged: false,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Unnormalized refined labels.
    pub raw: LabelDistribution,
    pub stats: SolveStats,
}

/// Solves `(I − Ā/(1+μ)) Ȳ = s·Ỹ` column by column.
pub fn solve_labels(
    graph: &SparseGraph,
    ytilde: &LabelDistribution,
    config: &SolverConfig,
) -> Result<Solution> {
    config.validate()?;
    check_shapes(graph, ytilde, "Ytilde")?;
    let n = graph.n();
    let c = ytilde.classes();
    let a_bar = graph.normalized();
    let shrink = 1.0 / (1.0 + config.mu);
    let scale = config.rhs_scale();

    let apply = |x: &[f64], out: &mut [f64]| {
        a_bar.mul_vec(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi - shrink * *o;
        }
    };

    let outcomes: Vec<CgOutcome> = (0..c)
        .into_par_iter()
        .map(|col| {
            let b: Vec<f64> = ytilde.rows().map(|r| scale * r[col]).collect();
            conjugate_gradient(apply, &b, config.tol, config.max_iter)
        })
        .collect();

    let mut data = vec![0.0; n * c];
    let mut stats = SolveStats::default();
    for (col, out) in outcomes.into_iter().enumerate() {
        if !out.converged {
            return Err(Error::Convergence {
                column: col,
                iterations: out.iterations,
                residual: out.relative_residual,
            });
        }
        for (i, v) in out.x.iter().enumerate() {
            data[i * c + col] = *v;
        }
        stats.iterations.push(out.iterations);
        stats.residuals.push(out.relative_residual);
    }
    Ok(Solution {
        raw: LabelDistribution::new(n, c, data)?,
        stats,
    })
}

/// Rows with a total at or below this are replaced by the uniform row.
pub const DEGENERATE_ROW_SUM: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Normalized {
    pub labels: LabelDistribution,
    /// Rows that had no positive mass and were set to uniform.
    pub degenerate_rows: Vec<usize>,
}

/// Clamp negatives to zero and scale each row to sum to one.
pub fn row_normalize(raw: &LabelDistribution) -> Normalized {
    let c = raw.classes();
    let mut out = raw.clone();
    let mut degenerate_rows = Vec::new();
    for (i, row) in out.as_mut_slice().chunks_exact_mut(c).enumerate() {
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        let sum: f64 = row.iter().sum();
        if sum <= DEGENERATE_ROW_SUM {
            row.fill(1.0 / c as f64);
            degenerate_rows.push(i);
        } else {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    Normalized {
        labels: out,
        degenerate_rows,
    }
}

/// `w_i = Ȳ[i, ỹ_i]` on a row-normalized `Ȳ`.
pub fn extract_confidence(
    ybar: &LabelDistribution,
    noisy_labels: &[usize],
) -> Result<ConfidenceVector> {
    if noisy_labels.len() != ybar.n() {
        return Err(Error::dim(format!(
            "{} labels for {} rows",
            noisy_labels.len(),
            ybar.n()
        )));
    }
    check_labels(noisy_labels, ybar.classes())?;
    ConfidenceVector::new(
        noisy_labels
            .iter()
            .enumerate()
            .map(|(i, &y)| ybar.get(i, y).clamp(0.0, 1.0))
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub k: usize,
    /// Scale feature rows to unit norm before building the graph.
    pub normalize_features: bool,
    pub solver: SolverConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k: 10,
            normalize_features: false,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateStats {
    pub n: usize,
    pub d: usize,
    pub edges: usize,
    pub solve: SolveStats,
    pub degenerate_rows: usize,
    pub graph_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub confidence: ConfidenceVector,
    pub labels: LabelDistribution,
    pub stats: EstimateStats,
}

/// Full estimator: k-NN graph, normalization, CG solve, row normalization,
/// confidence extraction.
pub fn estimate(
    features: &FeatureMatrix,
    noisy_labels: &[usize],
    num_classes: usize,
    config: &EstimatorConfig,
) -> Result<Estimate> {
    config.solver.validate()?;
    if noisy_labels.len() != features.n() {
        return Err(Error::dim(format!(
            "{} labels for {} samples",
            noisy_labels.len(),
            features.n()
        )));
    }
    let ytilde = one_hot(noisy_labels, num_classes)?;

    let t0 = Instant::now();
    let graph = if config.normalize_features {
        graph::build_graph(&features.l2_normalized(), config.k)?
    } else {
        graph::build_graph(features, config.k)?
    };
    let graph_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let solution = solve_labels(&graph, &ytilde, &config.solver)?;
    let normalized = row_normalize(&solution.raw);
    let confidence = extract_confidence(&normalized.labels, noisy_labels)?;
    let solve_seconds = t1.elapsed().as_secs_f64();

    Ok(Estimate {
        confidence,
        labels: normalized.labels,
        stats: EstimateStats {
            n: features.n(),
            d: features.d(),
            edges: graph.adjacency().nnz() / 2,
            solve: solution.stats,
            degenerate_rows: normalized.degenerate_rows.len(),
            graph_seconds,
            solve_seconds,
        },
    })
}
