use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::forward::ForwardCache;
use super::{backward, AdapterConfig, AdapterError, AdapterParams, Tensors};

/// Added to the biased per-dimension variance before the square root.
pub const STD_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub inv: f64,
    pub var: f64,
    pub cov: f64,
    pub id: f64,
    /// Mean cosine between adapted and frozen vectors.
    pub mean_cos: f64,
    /// Set when the batch has fewer than two rows and var/cov were forced to 0.
    pub var_cov_skipped: bool,
}

/// Loss plus its gradient with respect to the (already normalized) `z`.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub breakdown: LossBreakdown,
    pub grad_z: Array2<f64>,
}

/// Rows divided by their L2 norms; returns the norms too.
pub fn normalize_rows(y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>), AdapterError> {
    let norms = y.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if norms.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
        return Err(AdapterError::NonFiniteInput);
    }
    let z = &y / &norms.view().insert_axis(Axis(1));
    Ok((z, norms))
}

/// Within-batch mean of each label's rows; row `t` is the centroid of label `t`
/// (zero for labels absent from the batch).
pub fn batch_centroids(z: ArrayView2<f64>, labels: &[usize]) -> Array2<f64> {
    let groups = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = Array2::zeros((groups, z.ncols()));
    let mut counts = vec![0usize; groups];
    for (row, &t) in z.rows().into_iter().zip(labels) {
        let mut s = sums.row_mut(t);
        s += &row;
        counts[t] += 1;
    }
    for (mut s, &c) in sums.rows_mut().into_iter().zip(&counts) {
        if c > 0 {
            s /= c as f64;
        }
    }
    sums
}

fn check_batch(z: &ArrayView2<f64>, e: &ArrayView2<f64>, labels: &[usize]) -> Result<(), AdapterError> {
    if e.dim() != z.dim() {
        return Err(AdapterError::DimensionMismatch {
            expected: z.ncols(),
            found: e.ncols(),
        });
    }
    if labels.len() != z.nrows() {
        return Err(AdapterError::DimensionMismatch {
            expected: z.nrows(),
            found: labels.len(),
        });
    }
    if z.nrows() == 0 {
        return Err(AdapterError::NoMultiViewTables);
    }
    if z.iter().chain(e.iter()).any(|v| !v.is_finite()) {
        return Err(AdapterError::NonFiniteInput);
    }
    Ok(())
}

/// The four-term objective on a batch. `z` is used as given (callers pass the
/// normalized adapted vectors); centroids are the within-batch label means.
pub fn vicreg_loss(
    z: ArrayView2<f64>,
    e: ArrayView2<f64>,
    labels: &[usize],
    cfg: &AdapterConfig,
) -> Result<LossBreakdown, AdapterError> {
    check_batch(&z, &e, labels)?;
    let c = batch_centroids(z, labels);
    Ok(vicreg_loss_with_centroids(z, e, labels, c.view(), cfg)?.breakdown)
}

/// Loss and `dL/dz` with the centroid rows `centroids[label]` held constant.
pub fn vicreg_loss_with_centroids(
    z: ArrayView2<f64>,
    e: ArrayView2<f64>,
    labels: &[usize],
    centroids: ArrayView2<f64>,
    cfg: &AdapterConfig,
) -> Result<LossEval, AdapterError> {
    check_batch(&z, &e, labels)?;
    let (n, d) = z.dim();
    let nf = n as f64;
    let df = d as f64;
    if labels.iter().any(|&t| t >= centroids.nrows()) || centroids.ncols() != d {
        return Err(AdapterError::DimensionMismatch {
            expected: labels.iter().max().map_or(0, |m| m + 1),
            found: centroids.nrows(),
        });
    }

    let mut counts = vec![0usize; centroids.nrows()];
    labels.iter().for_each(|&t| counts[t] += 1);
    let groups = counts.iter().filter(|&&c| c > 0).count() as f64;

    // invariance
    let mut inv = 0.0;
    let mut g_inv = Array2::zeros((n, d));
    for (i, &t) in labels.iter().enumerate() {
        let w = 1.0 / (groups * counts[t] as f64);
        let diff = &z.row(i) - &centroids.row(t);
        inv += w * diff.dot(&diff);
        g_inv.row_mut(i).assign(&(diff * (2.0 * w)));
    }

    // variance and covariance
    let skipped = n < 2;
    let (mut var, mut cov) = (0.0, 0.0);
    let mut g_var = Array2::zeros((n, d));
    let mut g_cov = Array2::zeros((n, d));
    if !skipped {
        let mean = z.mean_axis(Axis(0)).expect("n >= 1");
        let zc = &z - &mean;
        let var_j = zc.map_axis(Axis(0), |col| col.dot(&col) / nf);
        let std_j = var_j.mapv(|v| (v + STD_EPS).sqrt());
        let hinge = std_j.mapv(|s| (cfg.gamma - s).max(0.0));
        var = hinge.mapv(|h| h * h).sum() / df;
        let coef = Zip::from(&hinge)
            .and(&std_j)
            .map_collect(|&h, &s| -2.0 * h / (df * nf * s));
        g_var = &zc * &coef;

        let c = zc.t().dot(&zc) / (nf - 1.0);
        let scale = 1.0 / (df * (df - 1.0));
        let mut g_c = c.clone();
        g_c.diag_mut().fill(0.0);
        cov = scale * g_c.iter().map(|v| v * v).sum::<f64>();
        g_c *= 2.0 * scale;
        // dL/dZc = 2 Zc G / (n-1); Zc has zero column means so centering is a no-op.
        g_cov = zc.dot(&g_c) * (2.0 / (nf - 1.0));
    }

    // identity
    let mut id = 0.0;
    let mut cos_sum = 0.0;
    let mut g_id = Array2::zeros((n, d));
    for i in 0..n {
        let (zi, ei) = (z.row(i), e.row(i));
        let (nz, ne) = (zi.dot(&zi).sqrt(), ei.dot(&ei).sqrt());
        if nz == 0.0 || ne == 0.0 {
            return Err(AdapterError::NonFiniteInput);
        }
        let cos = zi.dot(&ei) / (nz * ne);
        cos_sum += cos;
        id += (1.0 - cos) / nf;
        let dcos = &ei / (nz * ne) - &zi * (cos / (nz * nz));
        g_id.row_mut(i).assign(&(dcos * (-1.0 / nf)));
    }

    let total = cfg.lambda_inv * inv + cfg.lambda_var * var + cfg.lambda_cov * cov + cfg.lambda_id * id;
    let grad_z = g_inv * cfg.lambda_inv + g_var * cfg.lambda_var + g_cov * cfg.lambda_cov + g_id * cfg.lambda_id;
    Ok(LossEval {
        breakdown: LossBreakdown {
            total,
            inv,
            var,
            cov,
            id,
            mean_cos: cos_sum / nf,
            var_cov_skipped: skipped,
        },
        grad_z,
    })
}

/// Full objective on a cached forward pass and the gradient for every
/// parameter. `e` holds the frozen inputs aligned with the cache rows.
pub fn loss_and_grads(
    p: &AdapterParams,
    cache: &ForwardCache,
    e: ArrayView2<f64>,
    labels: &[usize],
    cfg: &AdapterConfig,
) -> Result<(LossBreakdown, Tensors), AdapterError> {
    let (z, norms) = normalize_rows(cache.y.view())?;
    let (e_hat, _) = normalize_rows(e)?;
    let c = batch_centroids(z.view(), labels);
    let eval = vicreg_loss_with_centroids(z.view(), e_hat.view(), labels, c.view(), cfg)?;
    // through z = y / |y|
    let gz = eval.grad_z;
    let along = (&gz * &z).sum_axis(Axis(1));
    let grad_y = (&gz - &(&z * &along.insert_axis(Axis(1)))) / &norms.insert_axis(Axis(1));
    let grads = backward(p, cache, &grad_y)?;
    if !grads.all_finite() {
        return Err(AdapterError::NonFiniteGradient);
    }
    Ok((eval.breakdown, grads))
}
