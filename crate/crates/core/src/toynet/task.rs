//! Synthetic labelled input generators.
//!
//! Labels are a deterministic function of the task seed and the input
//! tokens; the seed passed to [`SyntheticTask::sample_inputs`] only decides
//! which inputs are drawn.
//!
//! * `token_sentiment`: a lexicon of positive and negative tokens is drawn
//!   from the task seed. Each position is a lexicon token with probability
//!   `sentiment_rate` (positive and negative equally likely), otherwise a
//!   uniform neutral token. Sequences with equal positive and negative
//!   counts are redrawn. Label = 1 when positive tokens outnumber negative.
//! * `token_tag`: every token type gets a tag in `0..n_tags`. Each token
//!   position is one sample row labelled with its tag, except that with
//!   probability `noise` (decided by hashing the task seed with the previous
//!   and current token) it takes the previous token's tag instead.
//! * `token_coords`: every token type gets latent 2-D coordinates drawn
//!   `N(0, I)`. Label = mean coordinates of the sequence's tokens plus
//!   `N(0, noise_sd²)` noise seeded by hashing the task seed with the tokens.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ToyModel;
use crate::error::{Error, Result};
use crate::rng::{self, Gaussian};
use crate::trace::{LabelKind, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskKind {
    TokenSentiment {
        #[serde(default = "d_ten")]
        n_positive: usize,
        #[serde(default = "d_ten")]
        n_negative: usize,
        #[serde(default = "d_rate")]
        sentiment_rate: f64,
    },
    TokenTag {
        #[serde(default = "d_tags")]
        n_tags: usize,
        #[serde(default = "d_noise")]
        noise: f64,
    },
    TokenCoords {
        #[serde(default = "d_noise")]
        noise_sd: f64,
    },
}

fn d_ten() -> usize {
    10
}
fn d_rate() -> f64 {
    0.25
}
fn d_tags() -> usize {
    5
}
fn d_noise() -> f64 {
    0.1
}

impl TaskKind {
    pub fn sentiment() -> Self {
        TaskKind::TokenSentiment {
            n_positive: d_ten(),
            n_negative: d_ten(),
            sentiment_rate: d_rate(),
        }
    }

    pub fn tag() -> Self {
        TaskKind::TokenTag {
            n_tags: d_tags(),
            noise: d_noise(),
        }
    }

    pub fn coords() -> Self {
        TaskKind::TokenCoords { noise_sd: d_noise() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::TokenSentiment { .. } => "token_sentiment",
            TaskKind::TokenTag { .. } => "token_tag",
            TaskKind::TokenCoords { .. } => "token_coords",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub seed: u64,
    /// +1 positive, -1 negative, 0 neutral (sentiment only)
    polarity: Vec<i8>,
    tags: Vec<u32>,
    coords: DMatrix<f64>,
}

impl SyntheticTask {
    pub fn new(kind: TaskKind, vocab_size: usize, seq_len: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 || seq_len == 0 {
            return Err(Error::Validation("vocab_size and seq_len must be >= 1".into()));
        }
        let mut r = rng::stream(rng::tagged_seed(seed, kind.name()));
        let mut polarity = vec![0i8; vocab_size];
        let mut tags = Vec::new();
        let mut coords = DMatrix::zeros(0, 2);
        match kind {
            TaskKind::TokenSentiment {
                n_positive,
                n_negative,
                sentiment_rate,
            } => {
                if n_positive == 0 || n_negative == 0 {
                    return Err(Error::Validation("sentiment lexicon needs positive and negative tokens".into()));
                }
                if n_positive + n_negative >= vocab_size {
                    return Err(Error::Validation(format!(
                        "lexicon of {} tokens leaves no neutral tokens in a vocabulary of {vocab_size}",
                        n_positive + n_negative
                    )));
                }
                if !(sentiment_rate > 0.0 && sentiment_rate <= 1.0) {
                    return Err(Error::Validation("sentiment_rate must lie in (0, 1]".into()));
                }
                let mut ids: Vec<usize> = (0..vocab_size).collect();
                ids.shuffle(&mut r);
                for &t in &ids[..n_positive] {
                    polarity[t] = 1;
                }
                for &t in &ids[n_positive..n_positive + n_negative] {
                    polarity[t] = -1;
                }
            }
            TaskKind::TokenTag { n_tags, noise } => {
                if n_tags < 2 {
                    return Err(Error::Validation("token_tag needs n_tags >= 2".into()));
                }
                if !(0.0..=1.0).contains(&noise) {
                    return Err(Error::Validation("tag noise must lie in [0, 1]".into()));
                }
                tags = (0..vocab_size).map(|_| r.random_range(0..n_tags as u32)).collect();
            }
            TaskKind::TokenCoords { noise_sd } => {
                if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
                    return Err(Error::Validation("noise_sd must be finite and >= 0".into()));
                }
                let mut g = Gaussian::new();
                coords = DMatrix::from_fn(vocab_size, 2, |_, _| 0.0);
                for t in 0..vocab_size {
                    for c in 0..2 {
                        coords[(t, c)] = g.sample(&mut r);
                    }
                }
            }
        }
        Ok(SyntheticTask {
            kind,
            vocab_size,
            seq_len,
            seed,
            polarity,
            tags,
            coords,
        })
    }

    pub fn label_kind(&self) -> LabelKind {
        match self.kind {
            TaskKind::TokenSentiment { .. } => LabelKind::Binary,
            TaskKind::TokenTag { n_tags, .. } => LabelKind::Categorical {
                classes: n_tags as u32,
            },
            TaskKind::TokenCoords { .. } => LabelKind::RealVector,
        }
    }

    /// Whether each token position is its own sample row.
    pub fn per_token(&self) -> bool {
        matches!(self.kind, TaskKind::TokenTag { .. })
    }

    pub fn polarity(&self, token: u32) -> i8 {
        self.polarity.get(token as usize).copied().unwrap_or(0)
    }

    /// Label-informative feature vector of every token type
    /// (`vocab_size × f`): polarity, one-hot tag, or latent coordinates.
    pub fn token_features(&self) -> DMatrix<f64> {
        match self.kind {
            TaskKind::TokenSentiment { .. } => {
                DMatrix::from_fn(self.vocab_size, 1, |t, _| self.polarity[t] as f64)
            }
            TaskKind::TokenTag { n_tags, .. } => {
                DMatrix::from_fn(self.vocab_size, n_tags, |t, c| (self.tags[t] as usize == c) as u8 as f64)
            }
            TaskKind::TokenCoords { .. } => self.coords.clone(),
        }
    }

    pub fn sample_inputs(&self, n: usize, seed: u64) -> Vec<Vec<u32>> {
        let mut r = rng::stream(seed);
        match self.kind {
            TaskKind::TokenSentiment { sentiment_rate, .. } => {
                let pos: Vec<u32> = (0..self.vocab_size as u32).filter(|&t| self.polarity(t) > 0).collect();
                let neg: Vec<u32> = (0..self.vocab_size as u32).filter(|&t| self.polarity(t) < 0).collect();
                let neutral: Vec<u32> = (0..self.vocab_size as u32).filter(|&t| self.polarity(t) == 0).collect();
                (0..n)
                    .map(|_| loop {
                        let seq: Vec<u32> = (0..self.seq_len)
                            .map(|_| {
                                if rng::uniform(&mut r) < sentiment_rate {
                                    let pool = if r.random_bool(0.5) { &pos } else { &neg };
                                    pool[r.random_range(0..pool.len())]
                                } else {
                                    neutral[r.random_range(0..neutral.len())]
                                }
                            })
                            .collect();
                        let balance: i32 = seq.iter().map(|&t| self.polarity(t) as i32).sum();
                        if balance != 0 {
                            break seq;
                        }
                    })
                    .collect()
            }
            _ => (0..n)
                .map(|_| {
                    (0..self.seq_len)
                        .map(|_| r.random_range(0..self.vocab_size as u32))
                        .collect()
                })
                .collect(),
        }
    }

    /// Label rows for one input sequence (one row, or one per token).
    pub fn labels_for(&self, tokens: &[u32]) -> Vec<Vec<f32>> {
        match self.kind {
            TaskKind::TokenSentiment { .. } => {
                let balance: i32 = tokens.iter().map(|&t| self.polarity(t) as i32).sum();
                // ties cannot be sampled; for hand-built inputs they count as negative
                vec![vec![(balance > 0) as u8 as f32]]
            }
            TaskKind::TokenTag { noise, .. } => tokens
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let own = self.tags[t as usize];
                    let tag = match i.checked_sub(1).map(|j| tokens[j]) {
                        Some(prev) if self.context_flip(prev, t) < noise => self.tags[prev as usize],
                        _ => own,
                    };
                    vec![tag as f32]
                })
                .collect(),
            TaskKind::TokenCoords { noise_sd } => {
                let n = tokens.len() as f64;
                let mut h = rng::tagged_seed(self.seed, "coords-noise");
                for &t in tokens {
                    h = rng::derive_seed(h, t as u64 + 1);
                }
                let mut r = rng::stream(h);
                let mut g = Gaussian::new();
                let row = (0..2)
                    .map(|c| {
                        let mean = tokens.iter().map(|&t| self.coords[(t as usize, c)]).sum::<f64>() / n;
                        (mean + noise_sd * g.sample(&mut r)) as f32
                    })
                    .collect();
                vec![row]
            }
        }
    }

    fn context_flip(&self, prev: u32, token: u32) -> f64 {
        let key = ((prev as u64) << 32) | token as u64;
        let h = rng::derive_seed(rng::tagged_seed(self.seed, "tag-noise"), key);
        (h >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Runs `model` on `inputs` and records every layer with the task's labels.
pub fn record_traces(model: &ToyModel, task: &SyntheticTask, inputs: &[Vec<u32>]) -> Result<TraceSet> {
    if task.vocab_size != model.config.vocab_size {
        return Err(Error::Input(format!(
            "task vocabulary {} does not match model vocabulary {}",
            task.vocab_size, model.config.vocab_size
        )));
    }
    if inputs.is_empty() {
        return Err(Error::Input("no inputs to record".into()));
    }
    let reps = model.batch_representations(inputs, task.per_token())?;
    let label_rows: Vec<Vec<f32>> = inputs.iter().flat_map(|s| task.labels_for(s)).collect();
    let dim = label_rows[0].len();
    let labels = DMatrix::from_fn(label_rows.len(), dim, |i, j| label_rows[i][j]);
    let activations = reps.iter().map(|m| m.map(|v| v as f32)).collect();
    let provenance = format!(
        "toynet model_seed={} model_sha256={} task={} task_seed={} n_inputs={}",
        model.seed,
        &model.checksum()[..16],
        task.kind.name(),
        task.seed,
        inputs.len()
    );
    TraceSet::new(activations, labels, task.label_kind(), provenance)
}

/// Samples `n_samples` inputs from `task` with `seed`, runs the model and
/// mean-pools over positions (per-token rows for `token_tag`).
pub fn generate_traces(model: &ToyModel, task: &SyntheticTask, n_samples: usize, seed: u64) -> Result<TraceSet> {
    if task.seq_len > model.config.max_seq_len {
        return Err(Error::Input(format!(
            "task seq_len {} exceeds model max_seq_len {}",
            task.seq_len, model.config.max_seq_len
        )));
    }
    let inputs = task.sample_inputs(n_samples, seed);
    record_traces(model, task, &inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toynet::{init_model, ToyModelConfig};

    fn sentiment(seed: u64) -> SyntheticTask {
        SyntheticTask::new(TaskKind::sentiment(), 100, 16, seed).unwrap()
    }

    #[test]
    fn sentiment_lexicon_sizes() {
        let t = sentiment(1);
        let pos = (0..100).filter(|&i| t.polarity(i) > 0).count();
        let neg = (0..100).filter(|&i| t.polarity(i) < 0).count();
        assert_eq!((pos, neg), (10, 10));
    }

    #[test]
    fn sentiment_inputs_never_tie() {
        let t = sentiment(2);
        for seq in t.sample_inputs(500, 3) {
            let b: i32 = seq.iter().map(|&x| t.polarity(x) as i32).sum();
            assert_ne!(b, 0);
            assert_eq!(seq.len(), 16);
        }
    }

    #[test]
    fn sentiment_label_marginal_is_balanced() {
        // simulate the generator and count
        let t = sentiment(4);
        let inputs = t.sample_inputs(1000, 5);
        let ones: usize = inputs.iter().map(|s| t.labels_for(s)[0][0] as usize).sum();
        let frac = ones as f64 / 1000.0;
        assert!((frac - 0.5).abs() <= 0.05, "positive fraction {frac}");
    }

    #[test]
    fn labels_depend_only_on_seed_and_tokens() {
        for kind in [TaskKind::sentiment(), TaskKind::tag(), TaskKind::coords()] {
            let a = SyntheticTask::new(kind, 50, 8, 9).unwrap();
            let b = SyntheticTask::new(kind, 50, 8, 9).unwrap();
            let seq = vec![1, 5, 7, 7, 2, 40, 3, 3];
            assert_eq!(a.labels_for(&seq), b.labels_for(&seq));
        }
    }

    #[test]
    fn tag_noise_takes_previous_tag() {
        let kind = TaskKind::TokenTag { n_tags: 4, noise: 1.0 };
        let t = SyntheticTask::new(kind, 30, 5, 2).unwrap();
        let seq = vec![3, 8, 13, 21, 4];
        let labels = t.labels_for(&seq);
        assert_eq!(labels[0][0], t.tags[3] as f32);
        for i in 1..5 {
            assert_eq!(labels[i][0], t.tags[seq[i - 1] as usize] as f32);
        }
        let clean = SyntheticTask::new(TaskKind::TokenTag { n_tags: 4, noise: 0.0 }, 30, 5, 2).unwrap();
        for (i, l) in clean.labels_for(&seq).iter().enumerate() {
            assert_eq!(l[0], clean.tags[seq[i] as usize] as f32);
        }
    }

    #[test]
    fn coords_label_is_mean_without_noise() {
        let t = SyntheticTask::new(TaskKind::TokenCoords { noise_sd: 0.0 }, 20, 3, 1).unwrap();
        let seq = vec![0, 1, 2];
        let want = (t.coords[(0, 0)] + t.coords[(1, 0)] + t.coords[(2, 0)]) / 3.0;
        assert!((t.labels_for(&seq)[0][0] as f64 - want).abs() < 1e-6);
    }

    #[test]
    fn generate_traces_shapes() {
        let model = init_model(ToyModelConfig::default(), 1).unwrap();
        let task = sentiment(1);
        let tr = generate_traces(&model, &task, 300, 2).unwrap();
        assert_eq!(tr.n_samples(), 300);
        assert_eq!(tr.n_layers(), 5);
        assert_eq!(tr.d_model(), 32);
        assert_eq!(tr.label_kind, LabelKind::Binary);
        let again = generate_traces(&model, &task, 300, 2).unwrap();
        assert_eq!(tr, again);
    }

    #[test]
    fn tag_traces_have_one_row_per_token() {
        let cfg = ToyModelConfig {
            max_seq_len: 8,
            ..ToyModelConfig::default()
        };
        let model = init_model(cfg, 1).unwrap();
        let task = SyntheticTask::new(TaskKind::tag(), 100, 8, 3).unwrap();
        let tr = generate_traces(&model, &task, 20, 4).unwrap();
        assert_eq!(tr.n_samples(), 160);
        assert_eq!(tr.label_kind, LabelKind::Categorical { classes: 5 });
    }

    #[test]
    fn mismatched_vocab_is_rejected() {
        let model = init_model(ToyModelConfig::default(), 1).unwrap();
        let task = SyntheticTask::new(TaskKind::sentiment(), 50, 16, 1).unwrap();
        assert!(generate_traces(&model, &task, 10, 1).is_err());
    }
}
