use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{Real, Tensor};

/// Regression window for Δ features.
///
/// `d_t = Σ_{θ=1..Θ} θ·(c_{t+θ} − c_{t−θ}) / (2·Σ θ²)`, frames outside the
/// sequence replaced by the nearest edge frame. ΔΔ applies the same operator
/// to Δ. The map is linear in the input; its backward pass is the transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaWindow {
    pub theta: usize,
}

impl Default for DeltaWindow {
    fn default() -> Self {
        DeltaWindow { theta: 2 }
    }
}

impl DeltaWindow {
    pub fn new(theta: usize) -> Result<Self> {
        if theta == 0 {
            return Err(invalid("delta window must be at least 1"));
        }
        Ok(DeltaWindow { theta })
    }

    fn denom(&self) -> f64 {
        2.0 * (1..=self.theta).map(|k| (k * k) as f64).sum::<f64>()
    }

    fn check(seq: &Tensor<impl Real>) -> Result<()> {
        if seq.rank() != 2 {
            return Err(Error::Shape { op: "delta", expected: vec![0, 0], actual: seq.dims().to_vec() });
        }
        Ok(())
    }

    /// Δ of a `[T × D]` sequence.
    pub fn forward<S: Real>(&self, seq: &Tensor<S>) -> Result<Tensor<S>> {
        Self::check(seq)?;
        let (t_len, d) = (seq.rows(), seq.cols());
        let denom = S::of(self.denom());
        let mut out = Tensor::zeros(seq.dims());
        let mut acc = vec![S::zero(); d];
        for t in 0..t_len {
            acc.iter_mut().for_each(|a| *a = S::zero());
            for k in 1..=self.theta {
                let ahead = seq.row((t + k).min(t_len - 1));
                let behind = seq.row(t.saturating_sub(k));
                let w = S::of(k as f64);
                for ((a, &x), &y) in acc.iter_mut().zip(ahead).zip(behind) {
                    *a += w * (x - y);
                }
            }
            for (o, &a) in out.row_mut(t).iter_mut().zip(&acc) {
                *o = a / denom;
            }
        }
        Ok(out)
    }

    /// Gradient w.r.t. the input of [`forward`](Self::forward).
    pub fn backward<S: Real>(&self, d_out: &Tensor<S>) -> Result<Tensor<S>> {
        Self::check(d_out)?;
        let t_len = d_out.rows();
        let mut d_seq = Tensor::zeros(d_out.dims());
        for t in 0..t_len {
            for k in 1..=self.theta {
                let w = S::of(k as f64 / self.denom());
                let ahead = (t + k).min(t_len - 1);
                let behind = t.saturating_sub(k);
                for j in 0..d_out.cols() {
                    let g = w * d_out.row(t)[j];
                    d_seq.row_mut(ahead)[j] += g;
                    d_seq.row_mut(behind)[j] -= g;
                }
            }
        }
        Ok(d_seq)
    }

    /// `[c, Δc, ΔΔc]` as a `[T × 3D]` sequence.
    pub fn append_derivatives<S: Real>(&self, seq: &Tensor<S>) -> Result<Tensor<S>> {
        let d1 = self.forward(seq)?;
        let d2 = self.forward(&d1)?;
        Tensor::concat_cols(&[seq, &d1, &d2])
    }

    /// Backward of [`append_derivatives`](Self::append_derivatives).
    pub fn append_derivatives_backward<S: Real>(&self, d_feat: &Tensor<S>) -> Result<Tensor<S>> {
        let d = d_feat.cols() / 3;
        if d * 3 != d_feat.cols() {
            return Err(Error::Shape { op: "delta features backward", expected: vec![d_feat.rows(), 3 * d], actual: d_feat.dims().to_vec() });
        }
        let parts = d_feat.split_cols(&[d, d, d])?;
        let mut d_delta = self.backward(&parts[2])?;
        d_delta.add_scaled(S::one(), &parts[1])?;
        let mut d_seq = self.backward(&d_delta)?;
        d_seq.add_scaled(S::one(), &parts[0])?;
        Ok(d_seq)
    }
}
