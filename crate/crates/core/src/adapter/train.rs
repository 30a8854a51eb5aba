use ndarray::{Array2, ArrayView2};

use super::checkpoint::params_fingerprint;
use super::forward::{forward_batch, Mode};
use super::loss::{loss_and_grads, LossBreakdown};
use super::optim::{adamw_step, OptimizerState};
use super::{init_adapter, AdapterConfig, AdapterError, AdapterParams};
use crate::format::FormatId;
use crate::rng::{derive_seed, SplitMix64};
use crate::store::{EmbeddingStore, StoreMetadata};

/// Tables with at least two non-centroid views, each as an `n_t x d` matrix
/// in store format order.
#[derive(Debug, Clone)]
pub struct MultiViewSet {
    pub table_ids: Vec<String>,
    pub views: Vec<Array2<f64>>,
}

impl MultiViewSet {
    pub fn len(&self) -> usize {
        self.table_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table_ids.is_empty()
    }
}

/// Frozen embeddings of one step with a dense table label per row.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub embeddings: Array2<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: LossBreakdown,
}

impl LogRow {
    pub const CSV_HEADER: &'static str = "step,total,inv,var,cov,id,mean_cos";

    pub fn to_csv(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{},{},{},{},{},{}",
            self.step, l.total, l.inv, l.var, l.cov, l.id, l.mean_cos
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AdapterParams,
    pub opt: OptimizerState,
    pub log: Vec<LogRow>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = String::from(LogRow::CSV_HEADER);
        out.push('\n');
        for row in &self.log {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }
}

/// Groups store entries by table, dropping centroid pseudo-formats and tables
/// with fewer than two views.
pub fn build_dataset(store: &EmbeddingStore) -> Result<MultiViewSet, AdapterError> {
    let d = store.dimension();
    let mut set = MultiViewSet {
        table_ids: Vec::new(),
        views: Vec::new(),
    };
    for (table, views) in store.views_by_table() {
        let rows: Vec<&[f64]> = views
            .iter()
            .filter(|(f, _)| !f.parse::<FormatId>().is_ok_and(|f| f.is_centroid()))
            .map(|(_, v)| *v)
            .collect();
        if rows.len() < 2 {
            continue;
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        set.table_ids.push(table.to_string());
        set.views
            .push(Array2::from_shape_vec((rows.len(), d), flat).expect("rows have store dimension"));
    }
    if set.is_empty() {
        return Err(AdapterError::NoMultiViewTables);
    }
    Ok(set)
}

/// Draws `min(batch_size, tables)` distinct tables by partial Fisher-Yates and
/// stacks their views; with `max_views` set, a table contributes a random
/// subset of that size (kept in format order).
fn sample_batch(set: &MultiViewSet, cfg: &AdapterConfig, rng: &mut SplitMix64) -> TrainBatch {
    let n = set.len();
    let k = cfg.batch_size.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below_usize(n - i);
        idx.swap(i, j);
    }
    let d = set.views[0].ncols();
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for (label, &t) in idx[..k].iter().enumerate() {
        let views = &set.views[t];
        let mut rows: Vec<usize> = (0..views.nrows()).collect();
        if let Some(m) = cfg.max_views.filter(|&m| m < rows.len()) {
            for i in 0..m {
                let j = i + rng.below_usize(rows.len() - i);
                rows.swap(i, j);
            }
            rows.truncate(m);
            rows.sort_unstable();
        }
        for r in rows {
            flat.extend(views.row(r).iter().copied());
            labels.push(label);
        }
    }
    TrainBatch {
        embeddings: Array2::from_shape_vec((labels.len(), d), flat).expect("stacked rows"),
        labels,
    }
}

pub fn train(store: &EmbeddingStore, cfg: &AdapterConfig) -> Result<TrainOutcome, AdapterError> {
    train_with_hook(store, cfg, |_, _, _| Ok(()))
}

/// Runs `cfg.steps` updates. Table sampling uses `derive_seed(seed, 1)`; the
/// dropout mask of step `s` uses `derive_seed(derive_seed(seed, 2), s)`.
/// A row is logged when `s % log_every == 0`, and `hook` runs after every
/// update with `(s + 1) % ckpt_every == 0`.
pub fn train_with_hook(
    store: &EmbeddingStore,
    cfg: &AdapterConfig,
    mut hook: impl FnMut(usize, &AdapterParams, &OptimizerState) -> Result<(), AdapterError>,
) -> Result<TrainOutcome, AdapterError> {
    if store.dimension() != cfg.dimension {
        return Err(AdapterError::DimensionMismatch {
            expected: cfg.dimension,
            found: store.dimension(),
        });
    }
    let set = build_dataset(store)?;
    let mut params = init_adapter(cfg)?;
    let mut opt = OptimizerState::new(cfg.dimension, cfg.bottleneck);
    let mut rng = SplitMix64::new(derive_seed(cfg.seed, 1));
    let dropout_base = derive_seed(cfg.seed, 2);
    let mut log = Vec::new();

    for step in 0..cfg.steps {
        let batch = sample_batch(&set, cfg, &mut rng);
        let mode = Mode::Train {
            dropout_seed: derive_seed(dropout_base, step as u64),
        };
        let cache = forward_batch(&params, batch.embeddings.view(), mode)?;
        let (loss, grads) = loss_and_grads(&params, &cache, batch.embeddings.view(), &batch.labels, cfg)?;
        if step % cfg.log_every == 0 {
            log.push(LogRow { step, loss });
        }
        adamw_step(&mut params, grads, &mut opt, cfg)?;
        if (step + 1) % cfg.ckpt_every == 0 {
            hook(step, &params, &opt)?;
        }
    }
    Ok(TrainOutcome { params, opt, log })
}

/// Eval-mode forward over every entry. The output is not renormalized; the
/// metadata params gain `adapter=<fingerprint>`.
pub fn adapt_store(p: &AdapterParams, store: &EmbeddingStore) -> Result<EmbeddingStore, AdapterError> {
    if store.dimension() != p.dimension() {
        return Err(AdapterError::DimensionMismatch {
            expected: p.dimension(),
            found: store.dimension(),
        });
    }
    let mut meta: StoreMetadata = store.metadata.clone();
    let tag = format!("adapter={:016x}", params_fingerprint(p));
    meta.params = if meta.params.is_empty() {
        tag
    } else {
        format!("{},{tag}", meta.params)
    };
    store.map_vectors(meta, |v| {
        let view = ArrayView2::from_shape((1, v.len()), v).expect("row vector");
        let cache = forward_batch(p, view, Mode::Eval)?;
        Ok::<_, AdapterError>(cache.y.into_raw_vec_and_offset().0)
    })
}
