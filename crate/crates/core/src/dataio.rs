//! File formats.
//!
//! `.lcf` embedding files are little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LCF1"
//! 4       8     n (u64)
//! 12      8     d (u64)
//! 20      1     dtype (0 = f32)
//! 21      4·n·d payload, row-major f32
//! ```
//!
//! Values are widened to `f64` on load. Labels and confidences are CSV, run
//! reports are JSON.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::csv_error;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::reduce::{PcaModel, PcaSidecar};
use crate::types::{ConfidenceVector, FeatureMatrix};

pub const MAGIC: &[u8; 4] = b"LCF1";
pub const HEADER_LEN: usize = 21;
pub const DTYPE_F32: u8 = 0;

/// Encode as `.lcf` bytes. Values must survive narrowing to `f32`.
pub fn encode_embeddings(features: &FeatureMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * features.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(features.n() as u64).to_le_bytes());
    out.extend_from_slice(&(features.d() as u64).to_le_bytes());
    out.push(DTYPE_F32);
    for (i, &v) in features.as_slice().iter().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::input(format!(
                "value {v} at flat index {i} overflows 32-bit float"
            )));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<FeatureMatrix> {
    let fmt = |offset: usize, message: String| Error::Format {
        offset: offset as u64,
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fmt(
            bytes.len(),
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(fmt(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (n, d) = (read_u64(4), read_u64(12));
    let dtype = bytes[20];
    if dtype != DTYPE_F32 {
        return Err(fmt(20, format!("unknown dtype {dtype}")));
    }
    if n == 0 || d == 0 {
        return Err(fmt(4, format!("empty matrix {n}x{d}")));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(4))
        .and_then(|p| p.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| fmt(4, format!("shape {n}x{d} overflows")))?;
    if bytes.len() as u64 != expected {
        return Err(fmt(
            bytes.len().min(expected as usize),
            format!("expected {expected} bytes for {n}x{d}, found {}", bytes.len()),
        ));
    }
    let mut data = Vec::with_capacity((n * d) as usize);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(fmt(HEADER_LEN + 4 * i, format!("non-finite value {v}")));
        }
        data.push(f64::from(v));
    }
    FeatureMatrix::new(n as usize, d as usize, data)
}

pub fn write_embeddings(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    fs::write(path, encode_embeddings(features)?)?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    decode_embeddings(&fs::read(path)?)
}

/// Non-empty records with their 1-based line numbers, minus an optional header.
fn parse_rows(reader: impl std::io::Read, header: &str) -> Result<Vec<(u64, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        if k == 0 && record.get(0) == Some(header) {
            continue;
        }
        if record.iter().all(str::is_empty) {
            continue;
        }
        let line = record.position().map_or(k as u64 + 1, |p| p.line());
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    Ok(rows)
}

/// Single-column labels, optional `label` header.
pub fn parse_labels_csv(reader: impl std::io::Read) -> Result<Vec<usize>> {
    parse_rows(reader, "label")?
        .into_iter()
        .map(|(line, fields)| {
            if fields.len() != 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected one column, found {}", fields.len()),
                });
            }
            fields[0].parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("'{}' is not a nonnegative integer", fields[0]),
            })
        })
        .collect()
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    parse_labels_csv(fs::File::open(path)?)
}

pub fn write_labels_csv(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "label")?;
    for y in labels {
        writeln!(w, "{y}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_confidence_csv(path: impl AsRef<Path>, w: &ConfidenceVector) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "index,confidence")?;
    for (i, v) in w.values().iter().enumerate() {
        writeln!(out, "{i},{v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `index,confidence` rows; indices must run 0..N in order.
pub fn parse_confidence_csv(reader: impl std::io::Read) -> Result<ConfidenceVector> {
    let mut values = Vec::new();
    for (line, fields) in parse_rows(reader, "index")? {
        let parse_err = |message: String| Error::Parse { line, message };
        if fields.len() != 2 {
            return Err(parse_err(format!(
                "expected 2 columns, found {}",
                fields.len()
            )));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad index '{}'", fields[0])))?;
        if idx != values.len() {
            return Err(parse_err(format!(
                "index {idx} out of order, expected {}",
                values.len()
            )));
        }
        let v: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("bad confidence '{}'", fields[1])))?;
        values.push(v);
    }
    ConfidenceVector::new(values)
}

pub fn read_confidence_csv(path: impl AsRef<Path>) -> Result<ConfidenceVector> {
    parse_confidence_csv(fs::File::open(path)?)
}

/// Upper-triangle edge list `i,j,weight` of the adjacency.
pub fn write_graph_csv(path: impl AsRef<Path>, graph: &SparseGraph) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "i,j,weight")?;
    let a = graph.adjacency();
    for i in 0..a.n() {
        for (j, w) in a.row(i).filter(|&(j, _)| j > i) {
            writeln!(out, "{i},{j},{w}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Components go to `<stem>.lcf`, mean and variances to `<stem>.json`.
pub fn write_pca(stem: impl AsRef<Path>, model: &PcaModel) -> Result<()> {
    let stem = stem.as_ref();
    write_embeddings(stem.with_extension("lcf"), &model.components())?;
    let file = fs::File::create(stem.with_extension("json"))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &model.sidecar())?;
    Ok(())
}

pub fn read_pca(stem: impl AsRef<Path>) -> Result<PcaModel> {
    let stem = stem.as_ref();
    let components = read_embeddings(stem.with_extension("lcf"))?;
    let sidecar: PcaSidecar = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
    PcaModel::from_parts(sidecar.mean, &components, sidecar.explained_variance)
}

/// JSON run summary shared by the CLI commands.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    pub per_epoch: Vec<serde_json::Value>,
    #[serde(rename = "final")]
    pub final_metrics: serde_json::Value,
    /// Wall-clock seconds by phase.
    pub timings: BTreeMap<String, f64>,
}

pub fn write_report(path: impl AsRef<Path>, report: &RunReport) -> Result<()> {
    if let Some((k, v)) = report.timings.iter().find(|(_, v)| v.is_nan() || **v < 0.0) {
        return Err(Error::input(format!("timing '{k}' is negative or NaN: {v}")));
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
