use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lconf_core::corpus::{make_gaussian_blobs, BlobSpec, NoiseKind, NoiseSpec, TransitionMatrix};
use lconf_core::dataio::{self, RunReport};
use lconf_core::gmm::{gmm_confidence, per_sample_loss, GmmConfig};
use lconf_core::laplace::SolverConfig;
use lconf_core::metrics::noise_detection_scores;
use lconf_core::reduce::{default_dim, estimate_reduced};
use lconf_core::trainer::{run_experiment, ExperimentConfig, Phase};
use lconf_core::{ConfidenceVector, EstimatorConfig, FeatureMatrix, LabelDistribution};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::{
    BenchArgs, CorruptArgs, EstimateArgs, EvalArgs, MethodArg, NoiseArg, PipelineArgs, SynthArgs,
};

fn load_features(path: &Path) -> CliResult<FeatureMatrix> {
    dataio::read_embeddings(path).map_err(|e| CliError::loading(path, e))
}

fn load_labels(path: &Path) -> CliResult<Vec<usize>> {
    dataio::read_labels_csv(path).map_err(|e| CliError::loading(path, e))
}

/// Explicit class count, checked against the labels, or `max + 1`.
fn class_count(explicit: Option<usize>, labels: &[usize]) -> CliResult<usize> {
    let inferred = labels.iter().max().map_or(0, |m| m + 1);
    match explicit {
        Some(c) if c < inferred => Err(CliError::Data(format!(
            "label {} is out of range for {c} classes",
            inferred - 1
        ))),
        Some(c) => Ok(c),
        None if inferred < 2 => Err(CliError::Usage(
            "fewer than two classes in the labels; pass --classes".into(),
        )),
        None => Ok(inferred),
    }
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(Default::default, |s| s.to_os_string());
    let mut name = stem;
    name.push(suffix);
    path.with_file_name(name)
}

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    let ds = make_gaussian_blobs(&BlobSpec {
        n: a.n,
        classes: a.classes,
        dim: a.dim,
        separation: a.sep,
        spread: a.spread,
        seed: a.seed,
    })?;
    let truth_path = a
        .out_truth
        .clone()
        .unwrap_or_else(|| sibling(&a.out_labels, ".truth.csv"));
    dataio::write_embeddings(&a.out_features, ds.features())?;
    dataio::write_labels_csv(&a.out_labels, ds.noisy_labels())?;
    dataio::write_labels_csv(&truth_path, ds.truth_for_evaluation().unwrap_or_default())?;
    Ok(())
}

pub fn corrupt(a: &CorruptArgs) -> CliResult<()> {
    let labels = load_labels(&a.labels)?;
    let transition = match (a.noise, &a.transition) {
        (NoiseArg::Asym, None) => {
            return Err(CliError::Usage("--noise asym requires --transition".into()))
        }
        (_, Some(p)) => {
            Some(TransitionMatrix::from_csv_path(p).map_err(|e| CliError::loading(p, e))?)
        }
        (NoiseArg::Sym, None) => None,
    };
    let classes = class_count(a.classes.or(transition.as_ref().map(|t| t.classes())), &labels)?;
    if let Some(t) = &transition {
        if t.classes() != classes {
            return Err(CliError::Usage(format!(
                "transition matrix has {} classes, expected {classes}",
                t.classes()
            )));
        }
    }
    let spec = NoiseSpec {
        kind: match a.noise {
            NoiseArg::Sym => NoiseKind::Symmetric,
            NoiseArg::Asym => NoiseKind::Asymmetric,
        },
        rate: a.rate,
        transition,
        seed: a.seed,
    };
    let noisy = spec.apply_to_labels(&labels, classes)?;
    dataio::write_labels_csv(&a.out, &noisy)?;
    Ok(())
}

fn estimator(k: usize, mu: f64) -> EstimatorConfig {
    EstimatorConfig {
        k,
        solver: SolverConfig {
            mu,
            ..SolverConfig::default()
        },
        ..EstimatorConfig::default()
    }
}

pub fn estimate(a: &EstimateArgs) -> CliResult<()> {
    let labels = load_labels(&a.labels)?;
    let stats_path = a.stats.clone().unwrap_or_else(|| sibling(&a.out, ".stats.json"));
    let (confidence, stats) = match a.method {
        MethodArg::Laplace => {
            if a.probs.is_some() {
                return Err(CliError::Usage("--probs applies to --method gmm only".into()));
            }
            let Some(path) = &a.features else {
                return Err(CliError::Usage("--method laplace requires --features".into()));
            };
            let features = load_features(path)?;
            let classes = class_count(a.classes, &labels)?;
            let t = Instant::now();
            let r = estimate_reduced(&features, &labels, classes, &estimator(a.k, a.mu), a.pca_dim)?;
            let total = t.elapsed().as_secs_f64();
            let s = &r.estimate.stats;
            let stats = json!({
                "method": "laplace",
                "n": s.n,
                "input_dim": features.d(),
                "reduced_dim": r.model.as_ref().map(|m| m.output_dim()),
                "classes": classes,
                "k": a.k,
                "mu": a.mu,
                "edges": s.edges,
                "cg_iterations": s.solve.iterations,
                "cg_relative_residuals": s.solve.residuals,
                "degenerate_rows": s.degenerate_rows,
                "timings": {
                    "reduce_seconds": r.reduce_seconds,
                    "graph_seconds": s.graph_seconds,
                    "solve_seconds": s.solve_seconds,
                    "graph_and_solve_seconds": s.graph_seconds + s.solve_seconds,
                    "total_seconds": total,
                },
            });
            (r.estimate.confidence, stats)
        }
        MethodArg::Gmm => {
            let Some(path) = &a.probs else {
                return Err(CliError::Usage("--method gmm requires --probs".into()));
            };
            let raw = load_features(path)?;
            let classes = class_count(a.classes.or(Some(raw.d())), &labels)?;
            if raw.n() != labels.len() || raw.d() != classes {
                return Err(CliError::Data(format!(
                    "probabilities are {}x{}, expected {}x{classes}",
                    raw.n(),
                    raw.d(),
                    labels.len()
                )));
            }
            let probs = LabelDistribution::new(raw.n(), raw.d(), raw.into_vec())
                .map_err(|e| CliError::loading(path, e))?;
            let losses = per_sample_loss(&probs, &labels).map_err(|e| CliError::loading(path, e))?;
            let t = Instant::now();
            let (w, model) = gmm_confidence(&losses, &GmmConfig::default())?;
            let stats = json!({
                "method": "gmm",
                "n": labels.len(),
                "classes": classes,
                "model": model,
                "fallback_all_clean": model.is_none(),
                "timings": { "fit_seconds": t.elapsed().as_secs_f64() },
            });
            (w, stats)
        }
    };
    dataio::write_confidence_csv(&a.out, &confidence)?;
    write_json(Some(&stats_path), &stats)
}

#[derive(Serialize)]
struct Variant {
    dim: usize,
    seconds: Vec<f64>,
    median_seconds: f64,
    f1: Option<f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

pub fn bench(a: &BenchArgs) -> CliResult<()> {
    if a.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let features = load_features(&a.features)?;
    let labels = load_labels(&a.labels)?;
    let classes = class_count(a.classes, &labels)?;
    let mask = match &a.truth_labels {
        Some(p) => {
            let truth = load_labels(p)?;
            if truth.len() != labels.len() {
                return Err(CliError::Data(format!(
                    "{} true labels for {} noisy labels",
                    truth.len(),
                    labels.len()
                )));
            }
            Some(truth.iter().zip(&labels).map(|(t, y)| t == y).collect::<Vec<bool>>())
        }
        None => None,
    };
    let pca_dim = a.pca_dim.unwrap_or_else(|| default_dim(features.d()));
    let config = estimator(a.k, a.mu);

    let run = |reduce: Option<usize>| -> CliResult<Variant> {
        let mut seconds = Vec::with_capacity(a.repeats);
        let mut confidence = ConfidenceVector::ones(0);
        for _ in 0..a.repeats {
            let t = Instant::now();
            let r = estimate_reduced(&features, &labels, classes, &config, reduce)?;
            seconds.push(t.elapsed().as_secs_f64());
            confidence = r.estimate.confidence;
        }
        let f1 = match &mask {
            Some(m) => Some(noise_detection_scores(&confidence, m, 0.5)?.f1),
            None => None,
        };
        Ok(Variant {
            dim: reduce.unwrap_or(features.d()),
            median_seconds: median(&seconds),
            seconds,
            f1,
        })
    };
    let plain = run(None)?;
    let reduced = run(Some(pca_dim))?;
    let report = json!({
        "n": features.n(),
        "k": a.k,
        "mu": a.mu,
        "repeats": a.repeats,
        "speedup": plain.median_seconds / reduced.median_seconds,
        "plain": plain,
        "pca": reduced,
    });
    write_json(a.out.as_deref(), &report)
}

/// JSON pointer (RFC 6901) for a deserialization error location.
fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        let token = match seg {
            Segment::Seq { index } => index.to_string(),
            Segment::Map { key } => key.replace('~', "~0").replace('/', "~1"),
            Segment::Enum { variant } => variant.clone(),
            Segment::Unknown => "?".into(),
        };
        out.push_str(&token);
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Usage(format!(
            "config error at {}: {}",
            json_pointer(e.path()),
            e.inner()
        ))
    })?;
    config
        .train
        .validate()
        .map_err(|e| CliError::Usage(format!("config error at /train: {e}")))?;
    Ok(config)
}

pub fn pipeline(a: &PipelineArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let config = parse_config(&text)?;
    let t = Instant::now();
    let out = run_experiment(&config)?;
    let elapsed = t.elapsed().as_secs_f64();

    let p = &out.pipeline;
    let last_refurbish = p.rounds.iter().rev().find(|r| r.phase == Phase::Refurbish);
    let per_model: Vec<f64> = p.rounds.iter().rev().take(2).rev().map(|r| r.test_accuracy).collect();
    let report = RunReport {
        config: serde_json::to_value(&config)?,
        per_epoch: p
            .rounds
            .iter()
            .map(serde_json::to_value)
            .collect::<Result<_, _>>()?,
        final_metrics: json!({
            "test_accuracy": p.final_test_accuracy,
            "warmup_test_accuracy": p.warmup_test_accuracy,
            "per_model_test_accuracy": per_model,
            "noise_f1": last_refurbish.and_then(|r| r.noise_f1),
            "skipped_rounds": p.rounds.iter().filter(|r| r.phase == Phase::Skipped).count(),
        }),
        timings: BTreeMap::from([("total_seconds".to_string(), elapsed)]),
    };
    match &a.out {
        Some(path) => dataio::write_report(path, &report)?,
        None => write_json(None, &report)?,
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(CliError::Usage(format!(
            "--threshold must lie in [0, 1], got {}",
            a.threshold
        )));
    }
    let w = dataio::read_confidence_csv(&a.confidence).map_err(|e| CliError::loading(&a.confidence, e))?;
    let truth = load_labels(&a.truth_labels)?;
    let noisy = load_labels(&a.noisy_labels)?;
    if truth.len() != noisy.len() || truth.len() != w.len() {
        return Err(CliError::Data(format!(
            "lengths differ: {} confidences, {} true labels, {} noisy labels",
            w.len(),
            truth.len(),
            noisy.len()
        )));
    }
    let mask: Vec<bool> = truth.iter().zip(&noisy).map(|(t, y)| t == y).collect();
    let scores = noise_detection_scores(&w, &mask, a.threshold)?;
    let report = json!({
        "n": w.len(),
        "clean": mask.iter().filter(|c| **c).count(),
        "threshold": a.threshold,
        "scores": scores,
        "mean_confidence_clean": w.masked_mean(&mask, true),
        "mean_confidence_noisy": w.masked_mean(&mask, false),
    });
    write_json(a.out.as_deref(), &report)
}
