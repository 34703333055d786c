//! Parameter and compute accounting.
//!
//! `count_params` is a closed-form count, independent of the allocation
//! code, so the two can cross-check each other in tests. `estimate_flops`
//! prices one single-image forward pass under an explicit cost model:
//!
//! * linear `[m,k] x [k,n]`: `2*m*k*n` multiply-add FLOPs plus `m*n` bias adds
//! * attention scores and context: `2*M*M*S` each per layer (all heads),
//!   plus `M*M*heads` scale multiplies and `5*M*M*heads` softmax FLOPs
//! * LayerNorm: 8 FLOPs per element
//! * GELU: 14 FLOPs per element (tanh priced at 4)
//! * residual adds and the position add: 1 FLOP per element
//!
//! The matmul terms dominate by three orders of magnitude; the elementwise
//! prices only keep the estimate honest.

use super::ModelConfig;

/// Exact learnable-parameter count for a configuration.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let s = cfg.embed_dim;
    let h = cfg.mlp_hidden();
    let m = cfg.tokens();
    let pd = cfg.patch_dim();
    let embed = pd * s + s + m * s;
    let per_layer = 2 * s            // norm1
        + s * 3 * s + 3 * s          // qkv
        + s * s + s                  // proj
        + 2 * s                      // norm2
        + s * h + h                  // fc1
        + h * s + s; // fc2
    let tail = 2 * s + s * crate::loss::NUM_CLASSES + crate::loss::NUM_CLASSES;
    embed + cfg.depth * per_layer + tail
}

/// Where the forward-pass compute goes, in FLOPs for one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopBreakdown {
    pub patch_embed: u64,
    pub attention: u64,
    pub mlp: u64,
    pub norms: u64,
    pub head: u64,
    pub elementwise: u64,
    pub total: u64,
}

fn linear(m: u64, k: u64, n: u64) -> u64 {
    2 * m * k * n + m * n
}

/// Single-image forward FLOPs under the documented cost model.
pub fn estimate_flops(cfg: &ModelConfig) -> FlopBreakdown {
    let m = cfg.tokens() as u64;
    let s = cfg.embed_dim as u64;
    let h = cfg.mlp_hidden() as u64;
    let pd = cfg.patch_dim() as u64;
    let heads = cfg.heads as u64;
    let depth = cfg.depth as u64;

    let patch_embed = linear(m, pd, s);

    let qkv = linear(m, s, 3 * s);
    let scores = 2 * m * m * s + m * m * heads; // QK^T plus scaling
    let softmax = 5 * m * m * heads;
    let context = 2 * m * m * s;
    let proj = linear(m, s, s);
    let attention = depth * (qkv + scores + softmax + context + proj);

    let mlp = depth * (linear(m, s, h) + 14 * m * h + linear(m, h, s));

    let norms = (2 * depth + 1) * 8 * m * s;

    let head = linear(m, s, crate::loss::NUM_CLASSES as u64);

    // Position add and the two residual adds per layer.
    let elementwise = m * s + depth * 2 * m * s;

    let total = patch_embed + attention + mlp + norms + head + elementwise;
    FlopBreakdown {
        patch_embed,
        attention,
        mlp,
        norms,
        head,
        elementwise,
        total,
    }
}
