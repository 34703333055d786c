//! Manual backpropagation through the full network.
//!
//! Mirrors `forward.rs` step for step in reverse, consuming the activation
//! cache. Residual connections mean every block input gradient is the sum
//! of the skip path and the LayerNorm-backward of its branch; attention is
//! differentiated per head with the same gather/scatter scheme the forward
//! pass uses. The whole thing is validated against central finite
//! differences in `gradcheck.rs` — any edit here should be re-checked
//! there first.

use super::forward::{gather_head, gelu_grad};
use super::{BavitModel, ForwardCache, Params};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Real};
use crate::loss::NUM_CLASSES;

fn add_assign<F: Real>(acc: &mut [F], inc: &[F]) {
    debug_assert_eq!(acc.len(), inc.len());
    for (a, b) in acc.iter_mut().zip(inc) {
        *a += *b;
    }
}

fn col_sums<F: Real>(x: &[F], cols: usize, out: &mut [F]) {
    debug_assert_eq!(out.len(), cols);
    for row in x.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Backward through `y = scale * nhat + bias` and the normalization itself.
/// Accumulates the scale/bias gradients, returns dx.
fn layer_norm_backward<F: Real>(
    dy: &[F],
    nhat: &[F],
    rstd: &[F],
    scale: &[F],
    dim: usize,
    dscale: &mut [F],
    dbias: &mut [F],
) -> Vec<F> {
    let rows = dy.len() / dim;
    let inv_dim = F::one() / F::from_f64(dim as f64);
    let mut dx = vec![F::zero(); dy.len()];
    for r in 0..rows {
        let dy_row = &dy[r * dim..(r + 1) * dim];
        let n_row = &nhat[r * dim..(r + 1) * dim];
        let mut mean_g = F::zero();
        let mut mean_gn = F::zero();
        for i in 0..dim {
            let g = dy_row[i] * scale[i];
            mean_g += g;
            mean_gn += g * n_row[i];
            dscale[i] += dy_row[i] * n_row[i];
            dbias[i] += dy_row[i];
        }
        mean_g *= inv_dim;
        mean_gn *= inv_dim;
        let dx_row = &mut dx[r * dim..(r + 1) * dim];
        for i in 0..dim {
            let g = dy_row[i] * scale[i];
            dx_row[i] = rstd[r] * (g - mean_g - n_row[i] * mean_gn);
        }
    }
    dx
}

impl<F: Real> BavitModel<F> {
    /// Gradients of the scalar loss with respect to every parameter, given
    /// the loss gradient at the logits (`[batch * tokens, 2]`).
    pub fn backward(&self, cache: &ForwardCache<F>, d_logits: &[F]) -> Params<F> {
        let cfg = &self.cfg;
        let p = &self.params;
        let m = cfg.tokens();
        let s = cfg.embed_dim;
        let batch = cache.batch;
        let n = batch * m;
        let hidden = cfg.mlp_hidden();
        let d = cfg.head_dim();
        assert_eq!(d_logits.len(), n * NUM_CLASSES, "bad d_logits shape");
        let mut grads = Params::zeros(cfg);

        // Head: logits = final_out @ head_w + head_b.
        add_assign(
            &mut grads.head_w,
            &matmul_tn(&cache.final_out, d_logits, s, n, NUM_CLASSES),
        );
        col_sums(d_logits, NUM_CLASSES, &mut grads.head_b);
        let d_final_out = matmul_nt(d_logits, &p.head_w, n, NUM_CLASSES, s);

        let mut dh = layer_norm_backward(
            &d_final_out,
            &cache.final_nhat,
            &cache.final_rstd,
            &p.final_norm_scale,
            s,
            &mut grads.final_norm_scale,
            &mut grads.final_norm_bias,
        );

        let scale = F::from_f64(1.0 / (d as f64).sqrt());
        let mut q = vec![F::zero(); m * d];
        let mut k = vec![F::zero(); m * d];
        let mut v = vec![F::zero(); m * d];
        let mut d_ctx = vec![F::zero(); m * d];

        for (li, (lp, lc)) in p.layers.iter().zip(&cache.layers).enumerate().rev() {
            let lg = &mut grads.layers[li];

            // x_out = x_mid + fc2(gelu(fc1(LN2(x_mid)))): dh reaches the
            // MLP branch directly and the skip via the sum below.
            add_assign(&mut lg.fc2_w, &matmul_tn(&lc.g, &dh, hidden, n, s));
            col_sums(&dh, s, &mut lg.fc2_b);
            let mut dm1 = matmul_nt(&dh, &lp.fc2_w, n, s, hidden);
            for (dv, &mv) in dm1.iter_mut().zip(&lc.m1) {
                *dv *= gelu_grad(mv);
            }
            add_assign(&mut lg.fc1_w, &matmul_tn(&lc.ln2_out, &dm1, s, n, hidden));
            col_sums(&dm1, hidden, &mut lg.fc1_b);
            let d_ln2_out = matmul_nt(&dm1, &lp.fc1_w, n, hidden, s);
            let d_from_ln2 = layer_norm_backward(
                &d_ln2_out,
                &lc.ln2_nhat,
                &lc.ln2_rstd,
                &lp.norm2_scale,
                s,
                &mut lg.norm2_scale,
                &mut lg.norm2_bias,
            );
            let mut dx_mid = dh;
            add_assign(&mut dx_mid, &d_from_ln2);

            // x_mid = x_in + proj(attn(LN1(x_in))).
            add_assign(&mut lg.proj_w, &matmul_tn(&lc.ctx_merged, &dx_mid, s, n, s));
            col_sums(&dx_mid, s, &mut lg.proj_b);
            let d_ctx_merged = matmul_nt(&dx_mid, &lp.proj_w, n, s, s);

            let mut d_qkv = vec![F::zero(); n * 3 * s];
            for b in 0..batch {
                for head in 0..cfg.heads {
                    gather_head(&lc.qkv, cfg, b, head, 0, &mut q);
                    gather_head(&lc.qkv, cfg, b, head, 1, &mut k);
                    gather_head(&lc.qkv, cfg, b, head, 2, &mut v);
                    for t in 0..m {
                        d_ctx[t * d..(t + 1) * d]
                            .copy_from_slice(&d_ctx_merged[(b * m + t) * s + head * d..][..d]);
                    }
                    let probs = &lc.probs[(b * cfg.heads + head) * m * m..][..m * m];

                    // ctx = probs @ V.
                    let dv_mat = matmul_tn(probs, &d_ctx, m, m, d);
                    let mut d_scores = matmul_nt(&d_ctx, &v, m, d, m);
                    // Softmax backward per query row, then undo the 1/sqrt(d)
                    // scaling applied to the raw scores.
                    for t in 0..m {
                        let p_row = &probs[t * m..(t + 1) * m];
                        let ds_row = &mut d_scores[t * m..(t + 1) * m];
                        let mut dot = F::zero();
                        for i in 0..m {
                            dot += ds_row[i] * p_row[i];
                        }
                        for i in 0..m {
                            ds_row[i] = p_row[i] * (ds_row[i] - dot) * scale;
                        }
                    }
                    // scores_raw = Q @ K^T.
                    let dq_mat = matmul(&d_scores, &k, m, m, d);
                    let dk_mat = matmul_tn(&d_scores, &q, m, m, d);

                    for t in 0..m {
                        let base = (b * m + t) * 3 * s + head * d;
                        d_qkv[base..base + d].copy_from_slice(&dq_mat[t * d..(t + 1) * d]);
                        d_qkv[base + s..base + s + d]
                            .copy_from_slice(&dk_mat[t * d..(t + 1) * d]);
                        d_qkv[base + 2 * s..base + 2 * s + d]
                            .copy_from_slice(&dv_mat[t * d..(t + 1) * d]);
                    }
                }
            }

            add_assign(&mut lg.qkv_w, &matmul_tn(&lc.ln1_out, &d_qkv, s, n, 3 * s));
            col_sums(&d_qkv, 3 * s, &mut lg.qkv_b);
            let d_ln1_out = matmul_nt(&d_qkv, &lp.qkv_w, n, 3 * s, s);
            let d_from_ln1 = layer_norm_backward(
                &d_ln1_out,
                &lc.ln1_nhat,
                &lc.ln1_rstd,
                &lp.norm1_scale,
                s,
                &mut lg.norm1_scale,
                &mut lg.norm1_bias,
            );
            dh = dx_mid;
            add_assign(&mut dh, &d_from_ln1);
        }

        // Embeddings: the position table sums over the batch, the patch
        // projection is one more linear backward against the raw patches.
        for b in 0..batch {
            let span = &dh[b * m * s..(b + 1) * m * s];
            add_assign(&mut grads.pos_embed, span);
        }
        add_assign(
            &mut grads.patch_embed_w,
            &matmul_tn(&cache.x, &dh, cfg.patch_dim(), n, s),
        );
        col_sums(&dh, s, &mut grads.patch_embed_b);
        grads
    }
}
