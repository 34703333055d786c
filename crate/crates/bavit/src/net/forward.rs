//! Forward pass with activation caching for the manual backward pass.
//!
//! Shapes follow one convention throughout: token-major matrices of
//! `[batch * tokens, width]`, row-major. Per-head attention work happens in
//! `[tokens, head_dim]` scratch buffers gathered out of the fused QKV
//! activation, which keeps every matmul dense and contiguous.

use super::{BavitModel, ModelConfig, LN_EPS};
use crate::linalg::{add_bias_rows, matmul, matmul_nt, softmax_rows_inplace, Real};
use crate::loss::NUM_CLASSES;

/// Everything the backward pass needs from one block's forward run.
#[derive(Debug, Clone)]
pub struct LayerCache<F> {
    /// Block input, `[B*M, S]`.
    pub x_in: Vec<F>,
    /// First LayerNorm: normalized-but-unscaled activations and 1/std.
    pub ln1_nhat: Vec<F>,
    pub ln1_rstd: Vec<F>,
    /// First LayerNorm output after scale and shift, `[B*M, S]`.
    pub ln1_out: Vec<F>,
    /// Fused QKV activation, `[B*M, 3S]`.
    pub qkv: Vec<F>,
    /// Attention weights per image and head, `[B, heads, M, M]`.
    pub probs: Vec<F>,
    /// Head-merged attention context before the output projection.
    pub ctx_merged: Vec<F>,
    /// After the attention residual, `[B*M, S]`.
    pub x_mid: Vec<F>,
    pub ln2_nhat: Vec<F>,
    pub ln2_rstd: Vec<F>,
    pub ln2_out: Vec<F>,
    /// MLP pre-activation, `[B*M, hidden]`.
    pub m1: Vec<F>,
    /// MLP post-GELU activation, `[B*M, hidden]`.
    pub g: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    pub batch: usize,
    /// The input patches, kept for the embedding weight gradient.
    pub x: Vec<F>,
    pub layers: Vec<LayerCache<F>>,
    pub final_nhat: Vec<F>,
    pub final_rstd: Vec<F>,
    /// Final LayerNorm output — the head's input, `[B*M, S]`.
    pub final_out: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<F> {
    /// `[B*M, 2]` token logits.
    pub logits: Vec<F>,
    pub cache: ForwardCache<F>,
}

/// y = scale * (x - mean)/std + bias per row; returns (y, nhat, rstd).
pub(super) fn layer_norm_forward<F: Real>(
    x: &[F],
    scale: &[F],
    bias: &[F],
    dim: usize,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let rows = x.len() / dim;
    let eps = F::from_f64(LN_EPS);
    let inv_dim = F::one() / F::from_f64(dim as f64);
    let mut out = vec![F::zero(); x.len()];
    let mut nhat = vec![F::zero(); x.len()];
    let mut rstd = vec![F::zero(); rows];
    for r in 0..rows {
        let row = &x[r * dim..(r + 1) * dim];
        let mut mean = F::zero();
        for &v in row {
            mean += v;
        }
        mean *= inv_dim;
        let mut var = F::zero();
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_dim;
        let r_std = F::one() / (var + eps).sqrt();
        rstd[r] = r_std;
        let n_row = &mut nhat[r * dim..(r + 1) * dim];
        let o_row = &mut out[r * dim..(r + 1) * dim];
        for i in 0..dim {
            let n = (row[i] - mean) * r_std;
            n_row[i] = n;
            o_row[i] = scale[i] * n + bias[i];
        }
    }
    (out, nhat, rstd)
}

/// GELU, tanh approximation: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
pub(super) fn gelu<F: Real>(x: F) -> F {
    let c = F::from_f64(std::f64::consts::FRAC_2_PI.sqrt());
    let a = F::from_f64(0.044715);
    let inner = c * (x + a * x * x * x);
    F::half() * x * (F::one() + inner.tanh())
}

/// d gelu(x) / dx for the same tanh form.
pub(super) fn gelu_grad<F: Real>(x: F) -> F {
    let c = F::from_f64(std::f64::consts::FRAC_2_PI.sqrt());
    let a = F::from_f64(0.044715);
    let three = F::from_f64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = F::one() - t * t;
    F::half() * (F::one() + t) + F::half() * x * sech2 * c * (F::one() + three * a * x * x)
}

/// Gathers one head's Q, K, or V block (`section` 0/1/2) for image `b` into
/// a dense `[M, head_dim]` scratch matrix.
pub(super) fn gather_head<F: Real>(
    qkv: &[F],
    cfg: &ModelConfig,
    b: usize,
    head: usize,
    section: usize,
    out: &mut [F],
) {
    let m = cfg.tokens();
    let s = cfg.embed_dim;
    let d = cfg.head_dim();
    for t in 0..m {
        let row = &qkv[(b * m + t) * 3 * s + section * s + head * d..];
        out[t * d..(t + 1) * d].copy_from_slice(&row[..d]);
    }
}

impl<F: Real> BavitModel<F> {
    /// Runs the network on `x` = `[batch, tokens, patch_dim]` flattened
    /// row-major; returns token logits and the activation cache.
    pub fn forward(&self, x: &[F], batch: usize) -> ForwardOutput<F> {
        let cfg = &self.cfg;
        let p = &self.params;
        let m = cfg.tokens();
        let s = cfg.embed_dim;
        let n = batch * m;
        assert_eq!(
            x.len(),
            n * cfg.patch_dim(),
            "input is not [batch, tokens, patch_dim]"
        );

        // Patch embedding plus the learned position table (broadcast over
        // the batch).
        let mut h = matmul(x, &p.patch_embed_w, n, cfg.patch_dim(), s);
        add_bias_rows(&mut h, &p.patch_embed_b, s);
        for b in 0..batch {
            let span = &mut h[b * m * s..(b + 1) * m * s];
            for (v, &pe) in span.iter_mut().zip(&p.pos_embed) {
                *v += pe;
            }
        }

        let d = cfg.head_dim();
        let scale = F::from_f64(1.0 / (d as f64).sqrt());
        let hidden = cfg.mlp_hidden();
        let mut layers = Vec::with_capacity(cfg.depth);
        let mut q = vec![F::zero(); m * d];
        let mut k = vec![F::zero(); m * d];
        let mut v = vec![F::zero(); m * d];

        for lp in &p.layers {
            let x_in = h.clone();
            // Attention branch.
            let (ln1_out, ln1_nhat, ln1_rstd) =
                layer_norm_forward(&x_in, &lp.norm1_scale, &lp.norm1_bias, s);
            let mut qkv = matmul(&ln1_out, &lp.qkv_w, n, s, 3 * s);
            add_bias_rows(&mut qkv, &lp.qkv_b, 3 * s);

            let mut probs = vec![F::zero(); batch * cfg.heads * m * m];
            let mut ctx_merged = vec![F::zero(); n * s];
            for b in 0..batch {
                for head in 0..cfg.heads {
                    gather_head(&qkv, cfg, b, head, 0, &mut q);
                    gather_head(&qkv, cfg, b, head, 1, &mut k);
                    gather_head(&qkv, cfg, b, head, 2, &mut v);
                    let mut scores = matmul_nt(&q, &k, m, d, m);
                    for sc in scores.iter_mut() {
                        *sc *= scale;
                    }
                    softmax_rows_inplace(&mut scores, m);
                    let ctx = matmul(&scores, &v, m, m, d);
                    probs[(b * cfg.heads + head) * m * m..][..m * m].copy_from_slice(&scores);
                    for t in 0..m {
                        ctx_merged[(b * m + t) * s + head * d..][..d]
                            .copy_from_slice(&ctx[t * d..(t + 1) * d]);
                    }
                }
            }
            let mut attn_out = matmul(&ctx_merged, &lp.proj_w, n, s, s);
            add_bias_rows(&mut attn_out, &lp.proj_b, s);
            let mut x_mid = x_in.clone();
            for (xm, ao) in x_mid.iter_mut().zip(&attn_out) {
                *xm += *ao;
            }

            // MLP branch.
            let (ln2_out, ln2_nhat, ln2_rstd) =
                layer_norm_forward(&x_mid, &lp.norm2_scale, &lp.norm2_bias, s);
            let mut m1 = matmul(&ln2_out, &lp.fc1_w, n, s, hidden);
            add_bias_rows(&mut m1, &lp.fc1_b, hidden);
            let g: Vec<F> = m1.iter().map(|&v| gelu(v)).collect();
            let mut mlp_out = matmul(&g, &lp.fc2_w, n, hidden, s);
            add_bias_rows(&mut mlp_out, &lp.fc2_b, s);
            h = x_mid.clone();
            for (hv, mo) in h.iter_mut().zip(&mlp_out) {
                *hv += *mo;
            }

            layers.push(LayerCache {
                x_in,
                ln1_nhat,
                ln1_rstd,
                ln1_out,
                qkv,
                probs,
                ctx_merged,
                x_mid,
                ln2_nhat,
                ln2_rstd,
                ln2_out,
                m1,
                g,
            });
        }

        let (final_out, final_nhat, final_rstd) =
            layer_norm_forward(&h, &p.final_norm_scale, &p.final_norm_bias, s);
        let mut logits = matmul(&final_out, &p.head_w, n, s, NUM_CLASSES);
        add_bias_rows(&mut logits, &p.head_b, NUM_CLASSES);

        ForwardOutput {
            logits,
            cache: ForwardCache {
                batch,
                x: x.to_vec(),
                layers,
                final_nhat,
                final_rstd,
                final_out,
            },
        }
    }
}
