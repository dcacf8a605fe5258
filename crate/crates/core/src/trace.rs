//! Computational traces and their on-disk format.
//!
//! A trace directory holds `manifest.json` plus one headerless tensor file
//! per recorded layer (`layer_00.bin`, `layer_01.bin`, ...) and `labels.bin`.
//! Tensors are row-major little-endian `f32`. The manifest mirrors the shapes
//! so a loader can reject short or oversized files before decoding anything.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelKind {
    Binary,
    Categorical { classes: u32 },
    Real,
    RealVector,
}

impl LabelKind {
    pub fn is_classification(&self) -> bool {
        matches!(self, LabelKind::Binary | LabelKind::Categorical { .. })
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            LabelKind::Binary => Some(2),
            LabelKind::Categorical { classes } => Some(*classes as usize),
            _ => None,
        }
    }
}

/// Per-layer pooled activations and labels for a sample of inputs.
///
/// `activations[l]` is `n_samples × d_model`; layer 0 holds the embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub activations: Vec<DMatrix<f32>>,
    pub labels: DMatrix<f32>,
    pub label_kind: LabelKind,
    pub provenance: String,
}

impl TraceSet {
    pub fn new(
        activations: Vec<DMatrix<f32>>,
        labels: DMatrix<f32>,
        label_kind: LabelKind,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let t = TraceSet {
            activations,
            labels,
            label_kind,
            provenance: provenance.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.nrows()
    }

    pub fn n_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn d_model(&self) -> usize {
        self.activations.first().map_or(0, |m| m.ncols())
    }

    pub fn label_dim(&self) -> usize {
        self.labels.ncols()
    }

    /// Layer `layer` upcast to `f64`.
    pub fn layer_f64(&self, layer: usize) -> Result<DMatrix<f64>> {
        let m = self.activations.get(layer).ok_or_else(|| {
            Error::Input(format!("layer {layer} out of range (n_layers = {})", self.n_layers()))
        })?;
        Ok(m.map(|v| v as f64))
    }

    pub fn labels_f64(&self) -> DMatrix<f64> {
        self.labels.map(|v| v as f64)
    }

    /// First label column as class indices (classification kinds only).
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        if !self.label_kind.is_classification() {
            return Err(Error::Input(format!(
                "label kind {:?} has no class labels",
                self.label_kind
            )));
        }
        Ok(self.labels.column(0).iter().map(|&v| v as usize).collect())
    }

    /// Checks every documented invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.nrows();
        if n == 0 {
            return Err(Error::Validation("n_samples must be positive".into()));
        }
        if self.activations.is_empty() {
            return Err(Error::Validation("n_layers must be positive".into()));
        }
        let d = self.activations[0].ncols();
        if d == 0 {
            return Err(Error::Validation("d_model must be positive".into()));
        }
        if self.labels.ncols() == 0 {
            return Err(Error::Validation("label_dim must be positive".into()));
        }
        for (l, m) in self.activations.iter().enumerate() {
            if m.nrows() != n || m.ncols() != d {
                return Err(Error::Validation(format!(
                    "layer {l} has shape {}x{}, expected {n}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "layer {l} has a non-finite entry at flat index {pos}"
                )));
            }
        }
        if self.labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("labels contain a non-finite entry".into()));
        }
        match self.label_kind {
            LabelKind::Binary | LabelKind::Categorical { .. } | LabelKind::Real
                if self.labels.ncols() != 1 =>
            {
                return Err(Error::Validation(format!(
                    "label kind {:?} requires exactly one label column, got {}",
                    self.label_kind,
                    self.labels.ncols()
                )));
            }
            LabelKind::Binary => {
                if self.labels.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Validation("binary labels must be 0.0 or 1.0".into()));
                }
            }
            LabelKind::Categorical { classes } => {
                if classes == 0 {
                    return Err(Error::Validation("categorical label kind needs k >= 1".into()));
                }
                let bad = self
                    .labels
                    .iter()
                    .any(|&v| v < 0.0 || v.fract() != 0.0 || v >= classes as f32);
                if bad {
                    return Err(Error::Validation(format!(
                        "categorical labels must be integers in [0, {classes})"
                    )));
                }
            }
            LabelKind::Real | LabelKind::RealVector => {}
        }
        Ok(())
    }
}

/// Contents of `manifest.json`. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceManifest {
    pub format_version: u32,
    pub dtype: String,
    pub byte_order: String,
    pub n_samples: usize,
    pub n_layers: usize,
    pub d_model: usize,
    pub label_dim: usize,
    pub label_kind: LabelKind,
    pub layer_files: Vec<String>,
    pub labels_file: String,
    pub provenance: String,
}

pub fn layer_file_name(layer: usize) -> String {
    format!("layer_{layer:02}.bin")
}

fn encode_row_major(m: &DMatrix<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.len() * 4);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

fn decode_row_major(bytes: &[u8], rows: usize, cols: usize) -> DMatrix<f32> {
    let mut vals = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut m = DMatrix::<f32>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = vals.next().unwrap_or(f32::NAN);
        }
    }
    m
}

/// Writes `traces` into `directory`, creating it if needed. Validation runs
/// before anything touches the filesystem.
pub fn write_traces(traces: &TraceSet, directory: &Path) -> Result<()> {
    traces.validate()?;
    fs::create_dir_all(directory).map_err(|e| Error::io(directory, e))?;

    let layer_files: Vec<String> = (0..traces.n_layers()).map(layer_file_name).collect();
    let manifest = TraceManifest {
        format_version: FORMAT_VERSION,
        dtype: "f32".into(),
        byte_order: "little".into(),
        n_samples: traces.n_samples(),
        n_layers: traces.n_layers(),
        d_model: traces.d_model(),
        label_dim: traces.label_dim(),
        label_kind: traces.label_kind,
        layer_files: layer_files.clone(),
        labels_file: LABELS_FILE.into(),
        provenance: traces.provenance.clone(),
    };

    for (m, name) in traces.activations.iter().zip(&layer_files) {
        let path = directory.join(name);
        fs::write(&path, encode_row_major(m)).map_err(|e| Error::io(&path, e))?;
    }
    let path = directory.join(LABELS_FILE);
    fs::write(&path, encode_row_major(&traces.labels)).map_err(|e| Error::io(&path, e))?;

    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(MANIFEST_FILE, e.to_string()))?;
    json.push('\n');
    let path = directory.join(MANIFEST_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn read_tensor(directory: &Path, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f32>> {
    if name.contains('/') || name.contains('\\') || name == ".." {
        return Err(Error::format(name, "tensor file names must be plain relative names"));
    }
    let path = directory.join(name);
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::format(name, "file is missing"),
        _ => Error::io(&path, e),
    })?;
    let expected = rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            name,
            format!(
                "expected {expected} bytes ({rows}x{cols} f32), found {}",
                bytes.len()
            ),
        ));
    }
    Ok(decode_row_major(&bytes, rows, cols))
}

pub fn read_manifest(directory: &Path) -> Result<TraceManifest> {
    let path = directory.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::format(MANIFEST_FILE, "file is missing"),
        _ => Error::io(&path, e),
    })?;
    // Version is checked before the full schema so future manifests get the
    // precise error.
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::format(MANIFEST_FILE, e.to_string()))?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(Error::UnsupportedVersion(v.min(u32::MAX as u64) as u32)),
        None => return Err(Error::format(MANIFEST_FILE, "missing integer format_version")),
    }
    let manifest: TraceManifest =
        serde_json::from_value(raw).map_err(|e| Error::format(MANIFEST_FILE, e.to_string()))?;
    if manifest.dtype != "f32" {
        return Err(Error::format(MANIFEST_FILE, format!("unsupported dtype {:?}", manifest.dtype)));
    }
    if manifest.byte_order != "little" {
        return Err(Error::format(
            MANIFEST_FILE,
            format!("unsupported byte order {:?}", manifest.byte_order),
        ));
    }
    if manifest.layer_files.len() != manifest.n_layers {
        return Err(Error::format(
            MANIFEST_FILE,
            format!(
                "n_layers = {} but {} layer files listed",
                manifest.n_layers,
                manifest.layer_files.len()
            ),
        ));
    }
    Ok(manifest)
}

/// Loads a trace directory written by [`write_traces`] or an external
/// exporter honoring the same format.
pub fn read_traces(directory: &Path) -> Result<TraceSet> {
    let manifest = read_manifest(directory)?;
    let activations = manifest
        .layer_files
        .iter()
        .map(|name| read_tensor(directory, name, manifest.n_samples, manifest.d_model))
        .collect::<Result<Vec<_>>>()?;
    let labels = read_tensor(
        directory,
        &manifest.labels_file,
        manifest.n_samples,
        manifest.label_dim,
    )?;
    TraceSet::new(activations, labels, manifest.label_kind, manifest.provenance)
}
