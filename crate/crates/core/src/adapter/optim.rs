use super::{zip_tensors, AdapterConfig, AdapterError, AdapterParams, Tensors};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Tensors,
    pub v: Tensors,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(dimension: usize, bottleneck: usize) -> Self {
        Self {
            m: Tensors::zeros(dimension, bottleneck),
            v: Tensors::zeros(dimension, bottleneck),
            step: 0,
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Tensors, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// One AdamW update: clip, then decoupled decay on `w_down`/`w_up`, then the
/// bias-corrected Adam step. With `use_bias` off the two linear biases stay put.
/// Returns the pre-clip gradient norm.
pub fn adamw_step(
    p: &mut AdapterParams,
    mut grads: Tensors,
    opt: &mut OptimizerState,
    cfg: &AdapterConfig,
) -> Result<f64, AdapterError> {
    if !grads.all_finite() {
        return Err(AdapterError::NonFiniteGradient);
    }
    if grads.dimension() != p.dimension() || grads.bottleneck() != p.bottleneck() {
        return Err(AdapterError::DimensionMismatch {
            expected: p.dimension(),
            found: grads.dimension(),
        });
    }
    let norm = clip_global_norm(&mut grads, cfg.grad_clip_norm);
    if !cfg.use_bias {
        grads.b_down.fill(0.0);
        grads.b_up.fill(0.0);
    }

    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    zip_tensors(&mut opt.m, &grads, |m, g| *m = BETA1 * *m + (1.0 - BETA1) * g);
    zip_tensors(&mut opt.v, &grads, |v, g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);

    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    p.weights.w_down.mapv_inplace(|w| w * decay);
    p.weights.w_up.mapv_inplace(|w| w * decay);

    let frozen_bias = !cfg.use_bias;
    let params = p.weights.slices_mut();
    for (k, ((theta, m), v)) in params.into_iter().zip(opt.m.slices()).zip(opt.v.slices()).enumerate() {
        // slots 3 and 5 are b_down and b_up
        if frozen_bias && (k == 3 || k == 5) {
            continue;
        }
        for ((w, &mk), &vk) in theta.iter_mut().zip(m).zip(v) {
            *w -= cfg.lr * (mk / bc1) / ((vk / bc2).sqrt() + ADAM_EPS);
        }
    }
    p.version += 1;
    Ok(norm)
}
