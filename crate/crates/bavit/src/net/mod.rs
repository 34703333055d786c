//! The background-aware vision transformer itself.
//!
//! The architecture is a standard pre-norm ViT encoder with the CLS token
//! removed: patch embedding, learned position embeddings, `depth` blocks of
//! multi-head self-attention plus a GELU MLP, a final LayerNorm, and a
//! two-way linear head applied to every token. No pooling anywhere — each
//! of the `M` tokens keeps its own foreground/background logits, which is
//! what makes the output usable as a per-patch pruning mask.
//!
//! Forward and backward passes are written out by hand against the
//! [`crate::linalg`] kernels; there is no autograd. The backward pass is
//! validated against central finite differences in [`gradcheck`].

mod accounting;
mod backward;
mod forward;
pub mod gradcheck;

pub use accounting::{count_params, estimate_flops, FlopBreakdown};
pub use forward::{ForwardCache, ForwardOutput, LayerCache};

use crate::grid::{GridError, PatchGrid};
use crate::linalg::Real;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// LayerNorm variance epsilon.
pub const LN_EPS: f64 = 1e-5;
/// Initialization standard deviation for all weight matrices.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("embed dim {embed_dim} is not divisible by {heads} heads")]
    HeadsDontDivide { embed_dim: usize, heads: usize },
    #[error("{0} must be positive")]
    ZeroDim(&'static str),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Shape of the model. `grid` fixes the token count, `embed_dim` the width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub grid: PatchGrid,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

impl ModelConfig {
    pub fn new(
        grid: PatchGrid,
        embed_dim: usize,
        depth: usize,
        heads: usize,
        mlp_ratio: usize,
    ) -> Result<Self, ModelError> {
        if embed_dim == 0 {
            return Err(ModelError::ZeroDim("embed_dim"));
        }
        if depth == 0 {
            return Err(ModelError::ZeroDim("depth"));
        }
        if heads == 0 {
            return Err(ModelError::ZeroDim("heads"));
        }
        if mlp_ratio == 0 {
            return Err(ModelError::ZeroDim("mlp_ratio"));
        }
        if !embed_dim.is_multiple_of(heads) {
            return Err(ModelError::HeadsDontDivide { embed_dim, heads });
        }
        Ok(Self {
            grid,
            embed_dim,
            depth,
            heads,
            mlp_ratio,
        })
    }

    /// The two-block variant: 1.15M parameters at 384x384 / 16.
    pub fn small(grid: PatchGrid) -> Result<Self, ModelError> {
        Self::new(grid, 192, 2, 3, 4)
    }

    /// The ten-block variant from the same family.
    pub fn large(grid: PatchGrid) -> Result<Self, ModelError> {
        Self::new(grid, 192, 10, 3, 4)
    }

    /// A narrow configuration sized for CPU experiments (64-wide, 2 blocks).
    pub fn desk(grid: PatchGrid) -> Result<Self, ModelError> {
        Self::new(grid, 64, 2, 4, 4)
    }

    pub fn tokens(&self) -> usize {
        self.grid.tokens()
    }

    /// Flattened RGB patch length, the input width of the embedding.
    pub fn patch_dim(&self) -> usize {
        3 * self.grid.patch_size as usize * self.grid.patch_size as usize
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }
}

/// Parameters of one transformer block. Weight matrices are stored
/// `[input_dim, output_dim]` row-major so `y = x W + b` is a plain matmul.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub norm1_scale: Vec<F>,
    pub norm1_bias: Vec<F>,
    pub qkv_w: Vec<F>,
    pub qkv_b: Vec<F>,
    pub proj_w: Vec<F>,
    pub proj_b: Vec<F>,
    pub norm2_scale: Vec<F>,
    pub norm2_bias: Vec<F>,
    pub fc1_w: Vec<F>,
    pub fc1_b: Vec<F>,
    pub fc2_w: Vec<F>,
    pub fc2_b: Vec<F>,
}

/// Every learnable tensor of the model. The same struct doubles as the
/// gradient and the optimizer-moment container, so one canonical tensor
/// order (the one [`tensor_specs`] describes and [`Params::tensors`] yields)
/// is shared by the optimizer, the checkpoint format, and the gradient
/// checker.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub patch_embed_w: Vec<F>,
    pub patch_embed_b: Vec<F>,
    pub pos_embed: Vec<F>,
    pub layers: Vec<LayerParams<F>>,
    pub final_norm_scale: Vec<F>,
    pub final_norm_bias: Vec<F>,
    pub head_w: Vec<F>,
    pub head_b: Vec<F>,
}

/// Name and shape of one tensor in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The canonical tensor listing: embedding, blocks in order, final norm,
/// head. [`Params::tensors`] yields data in exactly this order.
pub fn tensor_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let s = cfg.embed_dim;
    let h = cfg.mlp_hidden();
    let mut specs = vec![
        TensorSpec {
            name: "patch_embed.weight".into(),
            shape: vec![cfg.patch_dim(), s],
        },
        TensorSpec {
            name: "patch_embed.bias".into(),
            shape: vec![s],
        },
        TensorSpec {
            name: "pos_embed".into(),
            shape: vec![cfg.tokens(), s],
        },
    ];
    for i in 0..cfg.depth {
        let layer = |field: &str, shape: Vec<usize>| TensorSpec {
            name: format!("layers.{i}.{field}"),
            shape,
        };
        specs.extend([
            layer("norm1.scale", vec![s]),
            layer("norm1.bias", vec![s]),
            layer("qkv.weight", vec![s, 3 * s]),
            layer("qkv.bias", vec![3 * s]),
            layer("proj.weight", vec![s, s]),
            layer("proj.bias", vec![s]),
            layer("norm2.scale", vec![s]),
            layer("norm2.bias", vec![s]),
            layer("fc1.weight", vec![s, h]),
            layer("fc1.bias", vec![h]),
            layer("fc2.weight", vec![h, s]),
            layer("fc2.bias", vec![s]),
        ]);
    }
    specs.extend([
        TensorSpec {
            name: "final_norm.scale".into(),
            shape: vec![s],
        },
        TensorSpec {
            name: "final_norm.bias".into(),
            shape: vec![s],
        },
        TensorSpec {
            name: "head.weight".into(),
            shape: vec![s, crate::loss::NUM_CLASSES],
        },
        TensorSpec {
            name: "head.bias".into(),
            shape: vec![crate::loss::NUM_CLASSES],
        },
    ]);
    specs
}

/// Normal(0, std) truncated to two standard deviations, drawn in f64
/// regardless of the model scalar so f32 and f64 models built from one seed
/// hold bitwise-castable weights.
fn trunc_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

impl<F: Real> Params<F> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let specs = tensor_specs(cfg);
        let mut iter = specs.iter().map(|t| vec![F::zero(); t.len()]);
        let mut next = || iter.next().expect("spec covers every tensor");
        let patch_embed_w = next();
        let patch_embed_b = next();
        let pos_embed = next();
        let layers = (0..cfg.depth)
            .map(|_| LayerParams {
                norm1_scale: next(),
                norm1_bias: next(),
                qkv_w: next(),
                qkv_b: next(),
                proj_w: next(),
                proj_b: next(),
                norm2_scale: next(),
                norm2_bias: next(),
                fc1_w: next(),
                fc1_b: next(),
                fc2_w: next(),
                fc2_b: next(),
            })
            .collect();
        Self {
            patch_embed_w,
            patch_embed_b,
            pos_embed,
            layers,
            final_norm_scale: next(),
            final_norm_bias: next(),
            head_w: next(),
            head_b: next(),
        }
    }

    /// Random initialization: truncated normal on every weight matrix and
    /// the position table, zeros on biases, ones on LayerNorm scales. Draws
    /// happen in canonical tensor order, so a seed fully determines the
    /// model.
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(cfg);
        {
            let specs = tensor_specs(cfg);
            for (spec, tensor) in specs.iter().zip(p.tensors_mut()) {
                let name = spec.name.as_str();
                if name.ends_with(".bias") {
                    continue;
                }
                if name.ends_with("norm1.scale")
                    || name.ends_with("norm2.scale")
                    || name.ends_with("final_norm.scale")
                {
                    tensor.fill(F::one());
                    continue;
                }
                for v in tensor.iter_mut() {
                    *v = F::from_f64(trunc_normal(rng, INIT_STD));
                }
            }
        }
        p
    }

    /// All tensors in canonical order; parallel to [`tensor_specs`].
    pub fn tensors(&self) -> Vec<&Vec<F>> {
        let mut out = vec![&self.patch_embed_w, &self.patch_embed_b, &self.pos_embed];
        for l in &self.layers {
            out.extend([
                &l.norm1_scale,
                &l.norm1_bias,
                &l.qkv_w,
                &l.qkv_b,
                &l.proj_w,
                &l.proj_b,
                &l.norm2_scale,
                &l.norm2_bias,
                &l.fc1_w,
                &l.fc1_b,
                &l.fc2_w,
                &l.fc2_b,
            ]);
        }
        out.extend([
            &self.final_norm_scale,
            &self.final_norm_bias,
            &self.head_w,
            &self.head_b,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<F>> {
        let mut out = vec![
            &mut self.patch_embed_w,
            &mut self.patch_embed_b,
            &mut self.pos_embed,
        ];
        for l in &mut self.layers {
            out.extend([
                &mut l.norm1_scale,
                &mut l.norm1_bias,
                &mut l.qkv_w,
                &mut l.qkv_b,
                &mut l.proj_w,
                &mut l.proj_b,
                &mut l.norm2_scale,
                &mut l.norm2_bias,
                &mut l.fc1_w,
                &mut l.fc1_b,
                &mut l.fc2_w,
                &mut l.fc2_b,
            ]);
        }
        out.extend([
            &mut self.final_norm_scale,
            &mut self.final_norm_bias,
            &mut self.head_w,
            &mut self.head_b,
        ]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zero_all(&mut self) {
        for t in self.tensors_mut() {
            t.fill(F::zero());
        }
    }

    /// Euclidean norm over every element, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0f64;
        for t in self.tensors() {
            for &v in t.iter() {
                let x = v.as_f64();
                sq += x * x;
            }
        }
        sq.sqrt()
    }

    /// Scales every element, e.g. for gradient clipping.
    pub fn scale_all(&mut self, factor: F) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Element-by-element cast through f64.
    pub fn cast<G: Real>(&self, cfg: &ModelConfig) -> Params<G> {
        let mut out = Params::<G>::zeros(cfg);
        for (src, dst) in self.tensors().into_iter().zip(out.tensors_mut()) {
            for (s, d) in src.iter().zip(dst.iter_mut()) {
                *d = G::from_f64(s.as_f64());
            }
        }
        out
    }
}

/// Config plus parameters; the unit the trainer, checkpoints, and the
/// pruning pipeline all pass around.
#[derive(Debug, Clone)]
pub struct BavitModel<F> {
    pub cfg: ModelConfig,
    pub params: Params<F>,
}

impl<F: Real> BavitModel<F> {
    pub fn init(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let params = Params::init(&cfg, rng);
        Self { cfg, params }
    }

    pub fn zeros(cfg: ModelConfig) -> Self {
        let params = Params::zeros(&cfg);
        Self { cfg, params }
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    pub fn cast<G: Real>(&self) -> BavitModel<G> {
        BavitModel {
            cfg: self.cfg,
            params: self.params.cast(&self.cfg),
        }
    }

    /// Per-token class probabilities for a batch, `[batch * tokens, 2]`.
    pub fn predict_probs(&self, x: &[F], batch: usize) -> Vec<F> {
        let out = self.forward(x, batch);
        crate::loss::softmax_tokens(&out.logits)
    }
}
