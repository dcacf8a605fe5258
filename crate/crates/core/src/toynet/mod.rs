//! A deterministic, seeded pre-layer-norm transformer encoder.
//!
//! The model is never trained. It plays three roles: the system whose
//! activations are probed, the generator of weight-randomized null models,
//! and a substrate for activation patching.
//!
//! # Initialization
//!
//! Weights are drawn i.i.d. `N(0, init_std²)` from a single xoshiro256**
//! stream seeded with the init seed, visiting groups in this order and each
//! group in row-major order:
//!
//! 1. `token_embedding` (`vocab_size × d_model`)
//! 2. `position_embedding` (`max_seq_len × d_model`)
//! 3. for each block: `w_q`, `w_k`, `w_v`, `w_o` (`d_model × d_model`),
//!    `w_in` (`d_model × d_ff`), `w_out` (`d_ff × d_model`)
//! 4. the planted write table, if any (`vocab_size × d_model`)
//!
//! Layer-norm scales start at 1 and shifts at 0; they consume no draws.
//! There are no bias terms.

mod forward;
mod task;

pub use forward::{gelu, layer_norm, ForwardTrace, Intervention, SiteComponent, LN_EPS};
pub use task::{generate_traces, record_traces, SyntheticTask, TaskKind};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Gaussian, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_init_std() -> f64 {
    0.02
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        ToyModelConfig {
            vocab_size: 100,
            d_model: 32,
            n_layers: 4,
            n_heads: 4,
            d_ff: 64,
            max_seq_len: 16,
            init_std: 0.02,
        }
    }
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be >= 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Validation(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Validation("init_std must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Which parameter groups a weight randomization re-draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomizationScope {
    All,
    /// Transformer blocks re-drawn, token and position embeddings kept.
    BlocksOnly,
    EmbeddingsOnly,
}

impl RandomizationScope {
    fn covers_embeddings(self) -> bool {
        matches!(self, RandomizationScope::All | RandomizationScope::EmbeddingsOnly)
    }

    fn covers_blocks(self) -> bool {
        matches!(self, RandomizationScope::All | RandomizationScope::BlocksOnly)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1_scale: DVector<f64>,
    pub ln1_shift: DVector<f64>,
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
    pub w_o: DMatrix<f64>,
    pub ln2_scale: DVector<f64>,
    pub ln2_shift: DVector<f64>,
    pub w_in: DMatrix<f64>,
    pub w_out: DMatrix<f64>,
}

/// A per-token vector added to the residual stream after block `layer` and
/// subtracted again before block `layer + 1` reads it. Linear read-outs of
/// layer `layer` see the table; no other layer does.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedWrite {
    pub layer: usize,
    pub table: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ToyModelConfig,
    pub token_embedding: DMatrix<f64>,
    pub position_embedding: DMatrix<f64>,
    pub blocks: Vec<Block>,
    pub planted: Option<PlantedWrite>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Embedding,
    Weight,
    LayerNormScale,
    LayerNormShift,
    Planted,
}

/// A named view of one parameter tensor.
pub struct ParamGroup<'a> {
    pub name: String,
    pub kind: GroupKind,
    pub values: &'a [f64],
}

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut Stream, g: &mut Gaussian) -> DMatrix<f64> {
    let mut data = vec![0.0; rows * cols];
    g.fill(rng, &mut data, std);
    DMatrix::from_row_slice(rows, cols, &data)
}

impl Block {
    fn fresh(cfg: &ToyModelConfig, rng: &mut Stream, g: &mut Gaussian) -> Block {
        let (d, f, s) = (cfg.d_model, cfg.d_ff, cfg.init_std);
        Block {
            ln1_scale: DVector::from_element(d, 1.0),
            ln1_shift: DVector::zeros(d),
            w_q: gaussian_matrix(d, d, s, rng, g),
            w_k: gaussian_matrix(d, d, s, rng, g),
            w_v: gaussian_matrix(d, d, s, rng, g),
            w_o: gaussian_matrix(d, d, s, rng, g),
            ln2_scale: DVector::from_element(d, 1.0),
            ln2_shift: DVector::zeros(d),
            w_in: gaussian_matrix(d, f, s, rng, g),
            w_out: gaussian_matrix(f, d, s, rng, g),
        }
    }
}

/// Builds a model with all weights drawn from the documented stream.
pub fn init_model(config: ToyModelConfig, seed: u64) -> Result<ToyModel> {
    config.validate()?;
    let mut rng = rng::stream(seed);
    let mut g = Gaussian::new();
    let s = config.init_std;
    let token_embedding = gaussian_matrix(config.vocab_size, config.d_model, s, &mut rng, &mut g);
    let position_embedding = gaussian_matrix(config.max_seq_len, config.d_model, s, &mut rng, &mut g);
    let blocks = (0..config.n_layers)
        .map(|_| Block::fresh(&config, &mut rng, &mut g))
        .collect();
    Ok(ToyModel {
        config,
        token_embedding,
        position_embedding,
        blocks,
        planted: None,
        seed,
    })
}

/// Re-draws the parameter groups inside `scope` from a fresh stream seeded
/// by `seed`; groups outside the scope are copied bit-for-bit.
///
/// Weight matrices (and the planted write table, which lives inside the
/// blocks) are re-drawn `N(0, init_std²)` in the documented init order.
/// Layer-norm parameters inside the scope are reset to their initial values.
pub fn randomize(model: &ToyModel, scope: RandomizationScope, seed: u64) -> ToyModel {
    let cfg = model.config;
    let mut rng = rng::stream(seed);
    let mut g = Gaussian::new();
    let mut out = model.clone();
    if scope.covers_embeddings() {
        out.token_embedding = gaussian_matrix(cfg.vocab_size, cfg.d_model, cfg.init_std, &mut rng, &mut g);
        out.position_embedding =
            gaussian_matrix(cfg.max_seq_len, cfg.d_model, cfg.init_std, &mut rng, &mut g);
    }
    if scope.covers_blocks() {
        out.blocks = (0..cfg.n_layers)
            .map(|_| Block::fresh(&cfg, &mut rng, &mut g))
            .collect();
        if let Some(p) = &mut out.planted {
            p.table = gaussian_matrix(cfg.vocab_size, cfg.d_model, cfg.init_std, &mut rng, &mut g);
        }
    }
    out
}

impl ToyModel {
    /// All parameter tensors in the documented order.
    pub fn parameter_groups(&self) -> Vec<ParamGroup<'_>> {
        let mut out = vec![
            ParamGroup {
                name: "token_embedding".into(),
                kind: GroupKind::Embedding,
                values: self.token_embedding.as_slice(),
            },
            ParamGroup {
                name: "position_embedding".into(),
                kind: GroupKind::Embedding,
                values: self.position_embedding.as_slice(),
            },
        ];
        for (l, b) in self.blocks.iter().enumerate() {
            let named: [(&str, GroupKind, &[f64]); 10] = [
                ("ln1_scale", GroupKind::LayerNormScale, b.ln1_scale.as_slice()),
                ("ln1_shift", GroupKind::LayerNormShift, b.ln1_shift.as_slice()),
                ("w_q", GroupKind::Weight, b.w_q.as_slice()),
                ("w_k", GroupKind::Weight, b.w_k.as_slice()),
                ("w_v", GroupKind::Weight, b.w_v.as_slice()),
                ("w_o", GroupKind::Weight, b.w_o.as_slice()),
                ("ln2_scale", GroupKind::LayerNormScale, b.ln2_scale.as_slice()),
                ("ln2_shift", GroupKind::LayerNormShift, b.ln2_shift.as_slice()),
                ("w_in", GroupKind::Weight, b.w_in.as_slice()),
                ("w_out", GroupKind::Weight, b.w_out.as_slice()),
            ];
            out.extend(named.into_iter().map(|(name, kind, values)| ParamGroup {
                name: format!("blocks.{l}.{name}"),
                kind,
                values,
            }));
        }
        if let Some(p) = &self.planted {
            out.push(ParamGroup {
                name: format!("planted.{}", p.layer),
                kind: GroupKind::Planted,
                values: p.table.as_slice(),
            });
        }
        out
    }

    /// SHA-256 over every parameter (little-endian `f64`) in documented order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for group in self.parameter_groups() {
            h.update(group.name.as_bytes());
            for v in group.values {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checksum of a single named group.
    pub fn group_checksum(&self, name: &str) -> Option<String> {
        self.parameter_groups().into_iter().find(|g| g.name == name).map(|g| {
            let mut h = Sha256::new();
            for v in g.values {
                h.update(v.to_le_bytes());
            }
            h.finalize().iter().map(|b| format!("{b:02x}")).collect()
        })
    }

    pub fn n_recorded_layers(&self) -> usize {
        self.config.n_layers + 1
    }
}

/// Plants label-informative structure for `task` at `layer`.
///
/// The task's per-token features are mapped into `d_model` through random
/// orthonormal directions (drawn from `seed`) and scaled to the typical norm
/// of an embedding row, giving a table `D`. At layer 0 the token embeddings
/// become `(1 - alpha) * E + alpha * D`; at a block layer `alpha * D` is
/// installed as a [`PlantedWrite`].
pub fn plant_signal(
    model: &ToyModel,
    task: &SyntheticTask,
    layer: usize,
    alpha: f64,
    seed: u64,
) -> Result<ToyModel> {
    let cfg = model.config;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if layer > cfg.n_layers {
        return Err(Error::Input(format!(
            "plant layer {layer} out of range (model records layers 0..={})",
            cfg.n_layers
        )));
    }
    if task.vocab_size != cfg.vocab_size {
        return Err(Error::Input(format!(
            "task vocabulary {} does not match model vocabulary {}",
            task.vocab_size, cfg.vocab_size
        )));
    }
    let features = task.token_features();
    let f = features.ncols();
    if f > cfg.d_model {
        return Err(Error::Input(format!(
            "task has {f} token features but d_model is {}",
            cfg.d_model
        )));
    }
    let mut rng = rng::stream(seed);
    let basis = linalg::haar_orthogonal(cfg.d_model, &mut rng);
    let directions = basis.rows(0, f).into_owned();
    // unit-variance features land at the norm of a typical embedding row
    let scale = cfg.init_std.max(f64::MIN_POSITIVE) * (cfg.d_model as f64).sqrt();
    let table = features * directions * scale;

    let mut out = model.clone();
    if layer == 0 {
        out.token_embedding = &model.token_embedding * (1.0 - alpha) + table * alpha;
    } else {
        out.planted = Some(PlantedWrite {
            layer,
            table: table * alpha,
        });
    }
    Ok(out)
}
