use serde::{Deserialize, Serialize};

use super::{Real, Rng, Tensor};
use crate::error::{invalid, Error, Result};

/// Half-width `sqrt(6 / (fan_in + fan_out))` of the Glorot uniform range.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `fan_out × fan_in` matrix with entries i.i.d. uniform strictly inside
/// `(-L, L)`, `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init<S: Real>(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<S> {
    assert!(fan_in >= 1 && fan_out >= 1, "glorot_init needs positive fans");
    let bound = glorot_bound(fan_in, fan_out);
    let limit = S::of(bound);
    let data = (0..fan_in * fan_out)
        .map(|_| loop {
            let x = S::of(rng.uniform_range(-bound, bound));
            // Rounding into S may land on the boundary; redraw those.
            if x.abs() < limit {
                break x;
            }
        })
        .collect();
    Tensor::from_vec(&[fan_out, fan_in], data).expect("glorot dims")
}

/// Adam moment hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S: Real = f32> {
    pub m: Tensor<S>,
    pub v: Tensor<S>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<S: Real> AdamState<S> {
    pub fn new(dims: &[usize], config: AdamConfig) -> Self {
        AdamState { m: Tensor::zeros(dims), v: Tensor::zeros(dims), t: 0, config }
    }
}

/// One bias-corrected Adam update of `param` in place.
///
/// `lr = 0` is accepted and leaves `param` bit-identical (moments still advance).
pub fn adam_step<S: Real>(param: &mut Tensor<S>, grad: &Tensor<S>, state: &mut AdamState<S>, lr: f64) -> Result<()> {
    grad.expect_dims("adam_step", param.dims())?;
    state.m.expect_dims("adam_step", param.dims())?;
    state.v.expect_dims("adam_step", param.dims())?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(invalid(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    grad.ensure_finite("adam gradient")?;

    let AdamConfig { beta1, beta2, eps } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = S::of(1.0 - beta1.powi(t));
    let bc2 = S::of(1.0 - beta2.powi(t));
    let (b1, b2) = (S::of(beta1), S::of(beta2));
    let (one, lr, eps) = (S::one(), S::of(lr), S::of(eps));

    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((p, &g), m), v) in param.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `threshold`.
///
/// Returns the applied factor (1 when no clipping was needed). An infinite
/// threshold never clips.
pub fn clip_global_norm<S: Real>(grads: &mut [&mut Tensor<S>], threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(invalid(format!("clip threshold must be positive, got {threshold}")));
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient {bad} before clipping")));
    }
    let norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
    if norm <= threshold {
        return Ok(1.0);
    }
    let scale = threshold / norm;
    let s = S::of(scale);
    for g in grads.iter_mut() {
        g.as_mut_slice().iter_mut().for_each(|x| *x *= s);
    }
    Ok(scale)
}
