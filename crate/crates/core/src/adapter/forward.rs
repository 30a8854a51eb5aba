use libm::erf;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::{AdapterError, AdapterParams, Tensors};
use crate::rng::SplitMix64;

pub const LN_EPS: f64 = 1e-5;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; the mask is drawn from this seed.
    Train {
        dropout_seed: u64,
    },
    Eval,
}

/// Standard normal CDF.
fn phi_cdf(u: f64) -> f64 {
    0.5 * (1.0 + erf(u * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad_from_cdf(u: f64, cdf: f64) -> f64 {
    cdf + u * FRAC_1_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Exact GELU, `0.5 u (1 + erf(u / sqrt 2))`.
pub fn gelu(u: f64) -> f64 {
    u * phi_cdf(u)
}

/// `Phi(u) + u phi(u)`.
pub fn gelu_grad(u: f64) -> f64 {
    gelu_grad_from_cdf(u, phi_cdf(u))
}

/// Inverted-dropout mask of shape `rows x cols`, drawn row-major from
/// `SplitMix64(seed)`: an element is kept (value `1/(1-p)`) when its uniform
/// draw is `>= p`, else 0. With `p = 0` every element is 1 and nothing is drawn.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, seed: u64) -> Array2<f64> {
    if p == 0.0 {
        return Array2::ones((rows, cols));
    }
    let keep = 1.0 / (1.0 - p);
    let mut rng = SplitMix64::new(seed);
    Array2::from_shape_fn((rows, cols), |_| if rng.unit_f64() >= p { keep } else { 0.0 })
}

/// Intermediates of a batched forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub x: Array2<f64>,
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub ln: Array2<f64>,
    pub pre: Array2<f64>,
    /// `Phi(pre)`.
    pub cdf: Array2<f64>,
    pub mask: Array2<f64>,
    pub hidden: Array2<f64>,
    pub y: Array2<f64>,
    pub version: u64,
}

/// Batched forward over the rows of `x`.
pub fn forward_batch(p: &AdapterParams, x: ArrayView2<f64>, mode: Mode) -> Result<ForwardCache, AdapterError> {
    let d = p.dimension();
    if x.ncols() != d {
        return Err(AdapterError::DimensionMismatch {
            expected: d,
            found: x.ncols(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AdapterError::NonFiniteInput);
    }
    let w = &p.weights;
    let n = x.nrows();
    let x = x.to_owned();

    let mean = x.mean_axis(Axis(1)).expect("d >= 2");
    let mut xhat = &x - &mean.view().insert_axis(Axis(1));
    let var = xhat.map_axis(Axis(1), |r| r.dot(&r) / d as f64);
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    xhat *= &inv_std.view().insert_axis(Axis(1));
    let ln = &xhat * &w.ln_gain + &w.ln_bias;

    let pre = ln.dot(&w.w_down.t()) + &w.b_down;
    let mask = match mode {
        Mode::Train { dropout_seed } => dropout_mask(n, p.bottleneck(), p.dropout, dropout_seed),
        Mode::Eval => Array2::ones((n, p.bottleneck())),
    };
    let cdf = pre.mapv(phi_cdf);
    let mut hidden = &pre * &cdf;
    hidden *= &mask;
    let update = hidden.dot(&w.w_up.t()) + &w.b_up;
    let y = &x + &(update * p.alpha);

    Ok(ForwardCache {
        x,
        xhat,
        inv_std,
        ln,
        pre,
        cdf,
        mask,
        hidden,
        y,
        version: p.version,
    })
}

/// Single-vector forward.
pub fn forward(p: &AdapterParams, x: &[f64], mode: Mode) -> Result<(Vec<f64>, ForwardCache), AdapterError> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    let cache = forward_batch(p, view, mode)?;
    Ok((cache.y.row(0).to_vec(), cache))
}

/// Gradients of a scalar loss with respect to every parameter, given
/// `grad_y = dL/dy` for the cached batch. Dropout masks are constants.
pub fn backward(p: &AdapterParams, cache: &ForwardCache, grad_y: &Array2<f64>) -> Result<Tensors, AdapterError> {
    if cache.version != p.version {
        return Err(AdapterError::StaleCache {
            cache: cache.version,
            params: p.version,
        });
    }
    if grad_y.dim() != cache.y.dim() {
        return Err(AdapterError::DimensionMismatch {
            expected: cache.y.ncols(),
            found: grad_y.ncols(),
        });
    }
    let w = &p.weights;
    let g_update = grad_y * p.alpha;

    let grad_w_up = g_update.t().dot(&cache.hidden);
    let grad_b_up = g_update.sum_axis(Axis(0));

    let mut g_pre = g_update.dot(&w.w_up);
    Zip::from(&mut g_pre)
        .and(&cache.mask)
        .and(&cache.pre)
        .and(&cache.cdf)
        .for_each(|g, &m, &a, &c| *g *= m * gelu_grad_from_cdf(a, c));

    let grad_w_down = g_pre.t().dot(&cache.ln);
    let grad_b_down = g_pre.sum_axis(Axis(0));

    let g_ln = g_pre.dot(&w.w_down);
    let grad_ln_gain = (&g_ln * &cache.xhat).sum_axis(Axis(0));
    let grad_ln_bias = g_ln.sum_axis(Axis(0));

    Ok(Tensors {
        ln_gain: grad_ln_gain,
        ln_bias: grad_ln_bias,
        w_down: grad_w_down,
        b_down: grad_b_down,
        w_up: grad_w_up,
        b_up: grad_b_up,
    })
}
