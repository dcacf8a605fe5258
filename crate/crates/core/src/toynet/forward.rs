use nalgebra::{DMatrix, DVector};

use super::ToyModel;
use crate::error::{Error, Result};

/// Variance floor inside layer norm. Small enough that normalized rows have
/// unit variance to ~1e-9 at the default init scale, large enough that an
/// all-zero row normalizes to zeros instead of NaN.
pub const LN_EPS: f64 = 1e-12;

/// Tanh-approximated GELU.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + tanh(C * (x + 0.044_715 * x * x * x)))
}

// One `exp` instead of libm's `tanh`; absolute error stays near 1e-16.
fn tanh(y: f64) -> f64 {
    if y.abs() > 20.0 {
        return y.signum();
    }
    let t = 1.0 - 2.0 / ((2.0 * y.abs()).exp() + 1.0);
    t.copysign(y)
}

/// Layer norm without the affine part: zero mean, unit (population)
/// variance.
pub fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter().map(|v| (v - mean) * inv).collect()
}

/// Where an activation patch lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteComponent {
    /// The residual stream recorded at `layer` (0 = embeddings).
    Residual,
    /// One attention head's context vectors inside block `layer` (1-based),
    /// before the output projection.
    HeadOutput { head: usize },
}

/// A hard intervention: the selected activation rows are replaced by
/// `values` (`positions.len() × width`) and everything downstream is
/// recomputed from the patched state.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub layer: usize,
    pub positions: Vec<usize>,
    pub component: SiteComponent,
    pub values: DMatrix<f64>,
}

impl Intervention {
    pub fn residual(layer: usize, positions: Vec<usize>, values: DMatrix<f64>) -> Self {
        Intervention {
            layer,
            positions,
            component: SiteComponent::Residual,
            values,
        }
    }

    pub fn head(layer: usize, head: usize, positions: Vec<usize>, values: DMatrix<f64>) -> Self {
        Intervention {
            layer,
            positions,
            component: SiteComponent::HeadOutput { head },
            values,
        }
    }
}

/// Everything a single-sequence forward pass can expose.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `n_layers + 1` matrices, each `seq_len × d_model`.
    pub layers: Vec<DMatrix<f64>>,
    /// `[block][head]`, each `seq_len × seq_len`, rows are query positions.
    pub attention: Vec<Vec<DMatrix<f64>>>,
    /// Pre-affine layer-norm outputs (two per block), each `seq_len × d_model`.
    pub normalized: Vec<DMatrix<f64>>,
}

struct Run {
    // feature-major: d_model × total_tokens
    residuals: Vec<DMatrix<f64>>,
    attention: Vec<Vec<DMatrix<f64>>>,
    normalized: Vec<DMatrix<f64>>,
}

/// Layer norm of every column; returns the pre-affine values when `keep`
/// is set, and the affine output.
fn layer_norm_columns(
    x: &DMatrix<f64>,
    scale: &DVector<f64>,
    shift: &DVector<f64>,
    keep: bool,
) -> (Option<DMatrix<f64>>, DMatrix<f64>) {
    let d = x.nrows();
    let mut normed = keep.then(|| DMatrix::<f64>::zeros(d, x.ncols()));
    let mut out = DMatrix::<f64>::zeros(d, x.ncols());
    for (c, col) in x.column_iter().enumerate() {
        let col = col.as_slice();
        let mean = col.iter().sum::<f64>() / d as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        let dst = &mut out.as_mut_slice()[c * d..(c + 1) * d];
        for (k, (o, v)) in dst.iter_mut().zip(col).enumerate() {
            let z = (v - mean) * inv;
            if let Some(n) = normed.as_mut() {
                n[(k, c)] = z;
            }
            *o = z * scale[k] + shift[k];
        }
    }
    (normed, out)
}

impl ToyModel {
    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Input("token sequence is empty".into()));
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::Input(format!(
                "sequence length {} exceeds max_seq_len {}",
                tokens.len(),
                self.config.max_seq_len
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Input(format!(
                "token id {t} out of range (vocab_size = {})",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn check_intervention(&self, iv: &Intervention, seq_len: usize) -> Result<()> {
        let cfg = &self.config;
        let width = match iv.component {
            SiteComponent::Residual => {
                if iv.layer > cfg.n_layers {
                    return Err(Error::Input(format!(
                        "residual site layer {} out of range 0..={}",
                        iv.layer, cfg.n_layers
                    )));
                }
                cfg.d_model
            }
            SiteComponent::HeadOutput { head } => {
                if iv.layer == 0 || iv.layer > cfg.n_layers {
                    return Err(Error::Input(format!(
                        "head site layer {} out of range 1..={}",
                        iv.layer, cfg.n_layers
                    )));
                }
                if head >= cfg.n_heads {
                    return Err(Error::Input(format!("head {head} out of range")));
                }
                cfg.d_head()
            }
        };
        let mut seen = vec![false; seq_len];
        for &p in &iv.positions {
            if p >= seq_len || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Input(format!(
                    "site position {p} is out of range or repeated (seq_len {seq_len})"
                )));
            }
        }
        if iv.values.nrows() != iv.positions.len() || iv.values.ncols() != width {
            return Err(Error::Input(format!(
                "intervention values are {}x{}, site expects {}x{width}",
                iv.values.nrows(),
                iv.values.ncols(),
                iv.positions.len()
            )));
        }
        if iv.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("intervention values must be finite".into()));
        }
        Ok(())
    }

    fn run(&self, seqs: &[&[u32]], intervention: Option<&Intervention>, capture: bool) -> Result<Run> {
        for s in seqs {
            self.check_tokens(s)?;
        }
        if let Some(iv) = intervention {
            if seqs.len() != 1 {
                return Err(Error::Input("interventions apply to a single sequence".into()));
            }
            self.check_intervention(iv, seqs[0].len())?;
        }
        let cfg = &self.config;
        let d = cfg.d_model;
        let dh = cfg.d_head();
        let total: usize = seqs.iter().map(|s| s.len()).sum();
        let mut offsets = Vec::with_capacity(seqs.len());
        let mut acc = 0;
        for s in seqs {
            offsets.push(acc);
            acc += s.len();
        }
        let flat_tokens: Vec<usize> = seqs.iter().flat_map(|s| s.iter().map(|&t| t as usize)).collect();

        let patch_residual = |layer: usize, h: &mut DMatrix<f64>| {
            if let Some(iv) = intervention {
                if iv.component == SiteComponent::Residual && iv.layer == layer {
                    for (r, &p) in iv.positions.iter().enumerate() {
                        for c in 0..d {
                            h[(c, p)] = iv.values[(r, c)];
                        }
                    }
                }
            }
        };
        let planted_rows = |h: &mut DMatrix<f64>, layer: usize, sign: f64| {
            if let Some(p) = &self.planted {
                if p.layer == layer {
                    for (t, &tok) in flat_tokens.iter().enumerate() {
                        for c in 0..d {
                            h[(c, t)] += sign * p.table[(tok, c)];
                        }
                    }
                }
            }
        };

        let mut h0 = DMatrix::<f64>::zeros(d, total);
        for (s, seq) in seqs.iter().enumerate() {
            for (pos, &tok) in seq.iter().enumerate() {
                let t = offsets[s] + pos;
                for c in 0..d {
                    h0[(c, t)] =
                        self.token_embedding[(tok as usize, c)] + self.position_embedding[(pos, c)];
                }
            }
        }
        patch_residual(0, &mut h0);

        let mut residuals = vec![h0];
        let mut attention = Vec::new();
        let mut normalized = Vec::new();
        let inv_sqrt = 1.0 / (dh as f64).sqrt();

        for (bi, block) in self.blocks.iter().enumerate() {
            let layer = bi + 1;
            let mut x = residuals[bi].clone();
            planted_rows(&mut x, bi, -1.0);

            let (n1, a) = layer_norm_columns(&x, &block.ln1_scale, &block.ln1_shift, capture);
            normalized.extend(n1);
            let q = block.w_q.transpose() * &a;
            let k = block.w_k.transpose() * &a;
            let v = block.w_v.transpose() * &a;
            let mut ctx = DMatrix::<f64>::zeros(d, total);
            let mut block_attn: Vec<DMatrix<f64>> = Vec::new();

            let (qs, ks, vs) = (q.as_slice(), k.as_slice(), v.as_slice());
            let cs = ctx.as_mut_slice();
            for (s, seq) in seqs.iter().enumerate() {
                let (o, n) = (offsets[s], seq.len());
                for head in 0..cfg.n_heads {
                    let r0 = head * dh;
                    let mut probs = DMatrix::<f64>::zeros(n, n);
                    let mut row = vec![0.0; n];
                    for i in 0..n {
                        let qi = &qs[(o + i) * d + r0..][..dh];
                        let mut max = f64::NEG_INFINITY;
                        for (j, r) in row.iter_mut().enumerate() {
                            let kj = &ks[(o + j) * d + r0..][..dh];
                            let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                            *r = dot * inv_sqrt;
                            max = max.max(*r);
                        }
                        let mut z = 0.0;
                        for r in row.iter_mut() {
                            *r = (*r - max).exp();
                            z += *r;
                        }
                        let out = &mut cs[(o + i) * d + r0..][..dh];
                        for (j, r) in row.iter_mut().enumerate() {
                            *r /= z;
                            let vj = &vs[(o + j) * d + r0..][..dh];
                            for (c, x) in out.iter_mut().zip(vj) {
                                *c += *r * x;
                            }
                        }
                        if capture {
                            probs.row_mut(i).copy_from_slice(&row);
                        }
                    }
                    if capture {
                        block_attn.push(probs);
                    }
                }
            }
            if let Some(iv) = intervention {
                if let SiteComponent::HeadOutput { head } = iv.component {
                    if iv.layer == layer {
                        let r0 = head * dh;
                        for (r, &p) in iv.positions.iter().enumerate() {
                            for c in 0..dh {
                                ctx[(r0 + c, p)] = iv.values[(r, c)];
                            }
                        }
                    }
                }
            }
            if capture {
                attention.push(block_attn);
            }

            let x1 = x + block.w_o.transpose() * &ctx;
            let (n2, b) = layer_norm_columns(&x1, &block.ln2_scale, &block.ln2_shift, capture);
            normalized.extend(n2);
            let hidden = (block.w_in.transpose() * &b).map(gelu);
            let mut out = x1 + block.w_out.transpose() * &hidden;
            planted_rows(&mut out, layer, 1.0);
            patch_residual(layer, &mut out);
            residuals.push(out);
        }

        Ok(Run {
            residuals,
            attention,
            normalized,
        })
    }

    /// Per-layer representations (`n_layers + 1` matrices of
    /// `seq_len × d_model`; layer 0 is token plus position embedding).
    pub fn forward(&self, tokens: &[u32]) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.forward_traced(tokens, None)?.layers)
    }

    /// Forward pass with one activation patch applied. Layers below the site
    /// are identical to [`ToyModel::forward`].
    pub fn forward_with_intervention(
        &self,
        tokens: &[u32],
        intervention: &Intervention,
    ) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.forward_traced(tokens, Some(intervention))?.layers)
    }

    pub fn forward_traced(&self, tokens: &[u32], intervention: Option<&Intervention>) -> Result<ForwardTrace> {
        let run = self.run(&[tokens], intervention, true)?;
        Ok(ForwardTrace {
            layers: run.residuals.iter().map(|h| h.transpose()).collect(),
            attention: run.attention,
            normalized: run.normalized.iter().map(|h| h.transpose()).collect(),
        })
    }

    /// Runs a batch and returns, per recorded layer, one row per sequence
    /// (mean over positions) or, with `per_token`, one row per token.
    pub fn batch_representations(&self, seqs: &[Vec<u32>], per_token: bool) -> Result<Vec<DMatrix<f64>>> {
        let refs: Vec<&[u32]> = seqs.iter().map(|s| s.as_slice()).collect();
        let run = self.run(&refs, None, false)?;
        if per_token {
            return Ok(run.residuals.iter().map(|h| h.transpose()).collect());
        }
        let d = self.config.d_model;
        Ok(run
            .residuals
            .iter()
            .map(|h| {
                let mut pooled = DMatrix::<f64>::zeros(seqs.len(), d);
                let mut t = 0;
                for (s, seq) in seqs.iter().enumerate() {
                    let n = seq.len();
                    for c in 0..d {
                        let mut sum = 0.0;
                        for i in 0..n {
                            sum += h[(c, t + i)];
                        }
                        pooled[(s, c)] = sum / n as f64;
                    }
                    t += n;
                }
                pooled
            })
            .collect())
    }
}
