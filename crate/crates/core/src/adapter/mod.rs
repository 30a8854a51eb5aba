//! Residual bottleneck adapter on top of frozen embeddings.
//!
//! ```text
//! y = x + alpha * (W_up * drop(gelu(W_down * LN(x) + b_down)) + b_up)
//! ```
//!
//! Trained with a four-term objective (invariance to the in-batch table
//! centroid, per-dimension variance floor, covariance decorrelation, cosine
//! identity anchor) using hand-derived gradients and AdamW.

mod checkpoint;
mod forward;
mod loss;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{backward, dropout_mask, forward, forward_batch, gelu, gelu_grad, ForwardCache, Mode};
pub use loss::{
    batch_centroids, loss_and_grads, normalize_rows, vicreg_loss, vicreg_loss_with_centroids, LossBreakdown, LossEval,
};
pub use optim::{adamw_step, clip_global_norm, OptimizerState};
pub use train::{adapt_store, build_dataset, train, train_with_hook, LogRow, MultiViewSet, TrainBatch, TrainOutcome};

use ndarray::{Array1, Array2, Zip};
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::store::StoreError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("invalid adapter config: {0}")]
    BadConfig(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("cache was produced by parameters at version {cache}, current version is {params}")]
    StaleCache { cache: u64, params: u64 },
    #[error("no table has two or more views")]
    NoMultiViewTables,
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint truncated")]
    TruncatedFile,
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<std::io::Error> for AdapterError {
    fn from(e: std::io::Error) -> Self {
        AdapterError::Io(e.to_string())
    }
}

/// Training and architecture settings. Defaults follow the published
/// hyperparameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterConfig {
    pub dimension: usize,
    /// Bottleneck width.
    pub bottleneck: usize,
    pub alpha: f64,
    pub dropout: f64,
    pub use_bias: bool,
    /// Variance floor on per-dimension standard deviation.
    pub gamma: f64,
    pub lambda_inv: f64,
    pub lambda_var: f64,
    pub lambda_cov: f64,
    pub lambda_id: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub steps: usize,
    /// Tables per minibatch; every sampled table contributes all its views.
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub log_every: usize,
    pub ckpt_every: usize,
    /// Cap on views per table; `None` keeps all of them.
    pub max_views: Option<usize>,
    /// Carried for completeness; the single bottleneck is sized by `bottleneck`.
    pub hidden_mult: usize,
    pub seed: u64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            dimension: 256,
            bottleneck: 512,
            alpha: 0.01,
            dropout: 0.05,
            use_bias: true,
            gamma: 0.05,
            lambda_inv: 100.0,
            lambda_var: 25.0,
            lambda_cov: 1.0,
            lambda_id: 100.0,
            lr: 3e-4,
            weight_decay: 1e-4,
            steps: 20_000,
            batch_size: 512,
            grad_clip_norm: 1.0,
            log_every: 200,
            ckpt_every: 200,
            max_views: None,
            hidden_mult: 4,
            seed: 0,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<(), AdapterError> {
        let bad = |m: &str| Err(AdapterError::BadConfig(m.to_string()));
        if self.dimension < 2 {
            return bad("dimension must be >= 2");
        }
        if self.bottleneck < 1 {
            return bad("bottleneck must be >= 1");
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be > 0");
        }
        let weights = [
            self.lambda_inv,
            self.lambda_var,
            self.lambda_cov,
            self.lambda_id,
            self.lr,
            self.weight_decay,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("loss weights, lr and weight decay must be finite and >= 0");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be > 0");
        }
        if self.batch_size < 1 || self.log_every < 1 || self.ckpt_every < 1 {
            return bad("batch_size, log_every and ckpt_every must be >= 1");
        }
        if self.max_views.is_some_and(|m| m < 2) {
            return bad("max_views must be >= 2");
        }
        Ok(())
    }
}

/// The trainable tensors. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
    /// `bottleneck x dimension`.
    pub w_down: Array2<f64>,
    pub b_down: Array1<f64>,
    /// `dimension x bottleneck`.
    pub w_up: Array2<f64>,
    pub b_up: Array1<f64>,
}

/// Names in checkpoint order.
pub const TENSOR_NAMES: [&str; 6] = ["ln_gain", "ln_bias", "w_down", "b_down", "w_up", "b_up"];

impl Tensors {
    pub fn zeros(dimension: usize, bottleneck: usize) -> Self {
        Self {
            ln_gain: Array1::zeros(dimension),
            ln_bias: Array1::zeros(dimension),
            w_down: Array2::zeros((bottleneck, dimension)),
            b_down: Array1::zeros(bottleneck),
            w_up: Array2::zeros((dimension, bottleneck)),
            b_up: Array1::zeros(dimension),
        }
    }

    pub fn dimension(&self) -> usize {
        self.ln_gain.len()
    }

    pub fn bottleneck(&self) -> usize {
        self.b_down.len()
    }

    /// Flat read-only views in checkpoint order.
    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.ln_gain.as_slice().expect("contiguous"),
            self.ln_bias.as_slice().expect("contiguous"),
            self.w_down.as_slice().expect("contiguous"),
            self.b_down.as_slice().expect("contiguous"),
            self.w_up.as_slice().expect("contiguous"),
            self.b_up.as_slice().expect("contiguous"),
        ]
    }

    /// Flat mutable views in checkpoint order.
    pub fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.ln_gain.as_slice_mut().expect("contiguous"),
            self.ln_bias.as_slice_mut().expect("contiguous"),
            self.w_down.as_slice_mut().expect("contiguous"),
            self.b_down.as_slice_mut().expect("contiguous"),
            self.w_up.as_slice_mut().expect("contiguous"),
            self.b_up.as_slice_mut().expect("contiguous"),
        ]
    }

    pub fn global_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

/// Adapter parameters plus the architecture scalars needed by `forward`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    pub alpha: f64,
    pub dropout: f64,
    pub weights: Tensors,
    /// Number of optimizer updates applied; caches record it.
    pub version: u64,
}

impl AdapterParams {
    pub fn dimension(&self) -> usize {
        self.weights.dimension()
    }

    pub fn bottleneck(&self) -> usize {
        self.weights.bottleneck()
    }
}

/// Identity-initialized adapter: LN gain 1, all biases 0, `W_up = 0`, and
/// `W_down` uniform in `±sqrt(1/d)` drawn row-major from `SplitMix64(seed)`.
pub fn init_adapter(cfg: &AdapterConfig) -> Result<AdapterParams, AdapterError> {
    cfg.validate()?;
    let (d, r) = (cfg.dimension, cfg.bottleneck);
    let mut weights = Tensors::zeros(d, r);
    weights.ln_gain.fill(1.0);
    let bound = (1.0 / d as f64).sqrt();
    let mut rng = SplitMix64::new(cfg.seed);
    weights.w_down.iter_mut().for_each(|w| *w = rng.uniform(-bound, bound));
    Ok(AdapterParams {
        alpha: cfg.alpha,
        dropout: cfg.dropout,
        weights,
        version: 0,
    })
}

/// Applies `f` to every `(param, grad)` element pair of matching tensors.
pub(crate) fn zip_tensors(a: &mut Tensors, b: &Tensors, mut f: impl FnMut(&mut f64, f64)) {
    for (x, y) in a.slices_mut().into_iter().zip(b.slices()) {
        Zip::from(x).and(y).for_each(|p, &g| f(p, g));
    }
}
