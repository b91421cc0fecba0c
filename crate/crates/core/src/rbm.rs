//! Greedy layer-wise encoder pretraining with Gaussian-visible RBMs.
//!
//! Visible units are real valued with unit variance (inputs are
//! z-normalised) and are reconstructed mean-field. Hidden units are either
//! noisy rectified linear or linear. Each RBM is trained with CD-1; the
//! hidden means of a trained layer become the training data of the next.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::layers::{Activation, FcLayer};
use crate::numerics::{gemm, sigmoid, NoiseSource, Real, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenKind {
    Rectified,
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianRbm<S: Real = f32> {
    /// `[hidden × visible]`
    pub weight: Tensor<S>,
    pub vbias: Tensor<S>,
    pub hbias: Tensor<S>,
    pub hidden_kind: HiddenKind,
}

/// Pretraining hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { epochs: 20, batch: 100, lr: 0.001, l2: 0.0002, seed: 0 }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || !(self.lr >= 0.0) || !(self.l2 >= 0.0) {
            return Err(invalid(format!("bad pretraining config {self:?}")));
        }
        Ok(())
    }
}

impl<S: Real> GaussianRbm<S> {
    /// Weights drawn from `Normal(0, 0.01)`, zero biases.
    pub fn random(visible: usize, hidden: usize, hidden_kind: HiddenKind, rng: &mut Rng) -> Self {
        let weight = (0..visible * hidden).map(|_| S::of(rng.normal(0.0, 0.01))).collect();
        GaussianRbm {
            weight: Tensor::from_vec(&[hidden, visible], weight).expect("rbm dims"),
            vbias: Tensor::zeros(&[visible]),
            hbias: Tensor::zeros(&[hidden]),
            hidden_kind,
        }
    }

    pub fn visible(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn hidden(&self) -> usize {
        self.weight.dims()[0]
    }

    fn batch_dims(&self, x: &Tensor<S>, width: usize, op: &'static str) -> Result<usize> {
        if x.rank() > 2 || x.cols() != width {
            return Err(Error::Shape { op, expected: vec![width], actual: x.dims().to_vec() });
        }
        Ok(x.rows())
    }

    /// `W·v + hbias` for a vector `[V]` or batch `[B × V]`.
    pub fn pre_activation(&self, v: &Tensor<S>) -> Result<Tensor<S>> {
        let rows = self.batch_dims(v, self.visible(), "rbm visible")?;
        let dims: Vec<usize> = if v.rank() == 1 { vec![self.hidden()] } else { vec![rows, self.hidden()] };
        let mut a = Tensor::zeros(&dims);
        gemm(S::one(), v.mat(), self.weight.mat().t(), S::zero(), a.mat_mut());
        for r in 0..rows {
            for (x, &b) in a.row_mut(r).iter_mut().zip(self.hbias.as_slice()) {
                *x += b;
            }
        }
        Ok(a)
    }

    pub fn hidden_mean(&self, v: &Tensor<S>) -> Result<Tensor<S>> {
        let a = self.pre_activation(v)?;
        Ok(match self.hidden_kind {
            HiddenKind::Rectified => a.map(|x| x.max(S::zero())),
            HiddenKind::Linear => a,
        })
    }

    /// Rectified: `max(0, a + ε)`, `ε ~ Normal(0, sigmoid(a))`. Linear: `a + Normal(0, 1)`.
    pub fn sample_hidden(&self, v: &Tensor<S>, noise: &mut impl NoiseSource) -> Result<Tensor<S>> {
        let a = self.pre_activation(v)?;
        Ok(self.sample_from_pre_activation(&a, noise))
    }

    fn sample_from_pre_activation(&self, a: &Tensor<S>, noise: &mut impl NoiseSource) -> Tensor<S> {
        let mut h = a.clone();
        for x in h.as_mut_slice() {
            let n = noise.standard_normal();
            *x = match self.hidden_kind {
                HiddenKind::Rectified => {
                    let std = sigmoid(x.f64()).sqrt();
                    S::of(x.f64() + std * n).max(S::zero())
                }
                HiddenKind::Linear => S::of(x.f64() + n),
            };
        }
        h
    }

    /// Mean-field visible reconstruction `Wᵀ·h + vbias`.
    pub fn reconstruct_visible(&self, h: &Tensor<S>) -> Result<Tensor<S>> {
        let rows = self.batch_dims(h, self.hidden(), "rbm hidden")?;
        let dims: Vec<usize> = if h.rank() == 1 { vec![self.visible()] } else { vec![rows, self.visible()] };
        let mut v = Tensor::zeros(&dims);
        gemm(S::one(), h.mat(), self.weight.mat(), S::zero(), v.mat_mut());
        for r in 0..rows {
            for (x, &b) in v.row_mut(r).iter_mut().zip(self.vbias.as_slice()) {
                *x += b;
            }
        }
        Ok(v)
    }

    /// One CD-1 step on `batch: [B × V]`; returns the mean squared
    /// reconstruction error per visible entry.
    ///
    /// Positive phase uses hidden means of the data; the negative phase
    /// samples hiddens, reconstructs visibles mean-field and takes their
    /// hidden means. L2 decay applies to weights only.
    pub fn cd1_update(&mut self, batch: &Tensor<S>, cfg: &PretrainConfig, noise: &mut impl NoiseSource) -> Result<f64> {
        let b = self.batch_dims(batch, self.visible(), "cd1 batch")?;
        if batch.rank() != 2 {
            return Err(Error::Shape { op: "cd1 batch", expected: vec![b, self.visible()], actual: batch.dims().to_vec() });
        }
        let a0 = self.pre_activation(batch)?;
        let h0 = match self.hidden_kind {
            HiddenKind::Rectified => a0.map(|x| x.max(S::zero())),
            HiddenKind::Linear => a0.clone(),
        };
        let hs = self.sample_from_pre_activation(&a0, noise);
        let v1 = self.reconstruct_visible(&hs)?;
        let h1 = self.hidden_mean(&v1)?;
        for (t, what) in [(&h0, "rbm positive hiddens"), (&v1, "rbm reconstruction"), (&h1, "rbm negative hiddens")] {
            t.ensure_finite(what)?;
        }

        let inv_b = S::of(1.0 / b as f64);
        let mut stats = Tensor::zeros(self.weight.dims());
        gemm(inv_b, h0.mat().t(), batch.mat(), S::zero(), stats.mat_mut());
        gemm(-inv_b, h1.mat().t(), v1.mat(), S::one(), stats.mat_mut());

        let lr = S::of(cfg.lr);
        let l2 = S::of(cfg.l2);
        for (w, &g) in self.weight.as_mut_slice().iter_mut().zip(stats.as_slice()) {
            *w += lr * (g - l2 * *w);
        }
        let mut sq_err = 0.0f64;
        let mut dv = vec![S::zero(); self.visible()];
        for r in 0..b {
            for ((acc, &x), &y) in dv.iter_mut().zip(batch.row(r)).zip(v1.row(r)) {
                *acc += x - y;
                sq_err += (x - y).f64().powi(2);
            }
        }
        for (vb, &d) in self.vbias.as_mut_slice().iter_mut().zip(&dv) {
            *vb += lr * d * inv_b;
        }
        let mut dh = vec![S::zero(); self.hidden()];
        for r in 0..b {
            for ((acc, &x), &y) in dh.iter_mut().zip(h0.row(r)).zip(h1.row(r)) {
                *acc += x - y;
            }
        }
        for (hb, &d) in self.hbias.as_mut_slice().iter_mut().zip(&dh) {
            *hb += lr * d * inv_b;
        }
        let err = sq_err / (b * self.visible()) as f64;
        if !err.is_finite() {
            return Err(Error::NonFinite("rbm reconstruction error".into()));
        }
        Ok(err)
    }

    /// The encoder layer this RBM initialises: `W`, `hbias`, with relu for
    /// rectified hiddens and identity for linear ones.
    pub fn to_fc_layer(&self) -> FcLayer<S> {
        let activation = match self.hidden_kind {
            HiddenKind::Rectified => Activation::Relu,
            HiddenKind::Linear => Activation::Linear,
        };
        FcLayer { weight: self.weight.clone(), bias: self.hbias.clone(), activation }
    }
}

/// Result of greedy pretraining.
#[derive(Clone, Debug)]
pub struct PretrainedStack<S: Real = f32> {
    pub rbms: Vec<GaussianRbm<S>>,
    /// Mean reconstruction error per layer, per epoch.
    pub errors: Vec<Vec<f64>>,
}

impl<S: Real> PretrainedStack<S> {
    pub fn encoder_layers(&self) -> Vec<FcLayer<S>> {
        self.rbms.iter().map(GaussianRbm::to_fc_layer).collect()
    }
}

/// Trains one RBM on `data: [N × V]`, shuffling all rows every epoch.
/// Returns the per-epoch mean reconstruction error.
pub fn train_rbm<S: Real>(rbm: &mut GaussianRbm<S>, data: &Tensor<S>, cfg: &PretrainConfig, rng: &mut Rng) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = data.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut rows = Vec::with_capacity(chunk.len() * data.cols());
            for &i in chunk {
                rows.extend_from_slice(data.row(i));
            }
            let batch = Tensor::from_vec(&[chunk.len(), data.cols()], rows)?;
            weighted += rbm.cd1_update(&batch, cfg, rng)? * chunk.len() as f64;
        }
        history.push(weighted / n as f64);
    }
    Ok(history)
}

/// Greedy pretraining of an encoder with sizes `[input, h1, ..., bottleneck]`.
///
/// All layers but the last use rectified hiddens, the last is linear. Layer
/// `k` trains on the hidden means of the already trained layer `k-1`.
pub fn pretrain_stack<S: Real>(layer_sizes: &[usize], data: &Tensor<S>, cfg: &PretrainConfig) -> Result<PretrainedStack<S>> {
    if layer_sizes.len() < 2 {
        return Err(invalid("pretraining needs at least an input and one hidden size"));
    }
    if data.rank() != 2 || data.cols() != layer_sizes[0] {
        return Err(Error::Shape { op: "pretrain data", expected: vec![layer_sizes[0]], actual: data.dims().to_vec() });
    }
    data.ensure_finite("pretraining data")?;
    let mut rng = Rng::new(cfg.seed);
    let last = layer_sizes.len() - 2;
    let mut rbms = Vec::new();
    let mut errors = Vec::new();
    let mut current = data.clone();
    for (k, pair) in layer_sizes.windows(2).enumerate() {
        let kind = if k == last { HiddenKind::Linear } else { HiddenKind::Rectified };
        let mut rbm = GaussianRbm::random(pair[0], pair[1], kind, &mut rng);
        errors.push(train_rbm(&mut rbm, &current, cfg, &mut rng)?);
        if k != last {
            current = rbm.hidden_mean(&current)?;
        }
        rbms.push(rbm);
    }
    Ok(PretrainedStack { rbms, errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ZeroNoise;
    impl NoiseSource for ZeroNoise {
        fn standard_normal(&mut self) -> f64 {
            0.0
        }
    }

    fn rbm_1x1(w: f64, vb: f64, hb: f64) -> GaussianRbm<f64> {
        GaussianRbm {
            weight: Tensor::from_vec(&[1, 1], vec![w]).unwrap(),
            vbias: Tensor::from_vec(&[1], vec![vb]).unwrap(),
            hbias: Tensor::from_vec(&[1], vec![hb]).unwrap(),
            hidden_kind: HiddenKind::Linear,
        }
    }

    #[test]
    fn hidden_mean_cases() {
        let mut rng = Rng::new(1);
        let zero = GaussianRbm::<f64> { weight: Tensor::zeros(&[3, 2]), ..GaussianRbm::random(2, 3, HiddenKind::Rectified, &mut rng) };
        let v = Tensor::from_vec(&[2], vec![1.0, -4.0]).unwrap();
        assert!(zero.hidden_mean(&v).unwrap().as_slice().iter().all(|&x| x == 0.0));

        let rect = GaussianRbm {
            weight: Tensor::from_vec(&[2, 1], vec![-1.0, 2.0]).unwrap(),
            vbias: Tensor::zeros(&[1]),
            hbias: Tensor::zeros(&[2]),
            hidden_kind: HiddenKind::Rectified,
        };
        let one = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        assert_eq!(rect.hidden_mean(&one).unwrap().as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn linear_hidden_mean_is_affine_map() {
        let mut rng = Rng::new(2);
        let mut rbm = GaussianRbm::<f64>::random(4, 3, HiddenKind::Linear, &mut rng);
        rbm.hbias = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.3]).unwrap();
        let v = Tensor::from_vec(&[4], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let h = rbm.hidden_mean(&v).unwrap();
        for j in 0..3 {
            let direct: f64 = (0..4).map(|i| rbm.weight.row(j)[i] * v.as_slice()[i]).sum::<f64>() + rbm.hbias.as_slice()[j];
            assert!((h.as_slice()[j] - direct).abs() < 1e-14);
        }
        let r = rbm.reconstruct_visible(&h).unwrap();
        for i in 0..4 {
            let direct: f64 = (0..3).map(|j| rbm.weight.row(j)[i] * h.as_slice()[j]).sum();
            assert!((r.as_slice()[i] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn sampling_reductions() {
        let mut rng = Rng::new(3);
        let rbm = GaussianRbm::<f64>::random(5, 4, HiddenKind::Rectified, &mut rng);
        let v = Tensor::from_vec(&[5], vec![3.0, -1.0, 0.5, 2.0, -2.0]).unwrap();
        assert_eq!(rbm.sample_hidden(&v, &mut ZeroNoise).unwrap(), rbm.hidden_mean(&v).unwrap());

        let deep = GaussianRbm {
            weight: Tensor::from_vec(&[1, 1], vec![1.0]).unwrap(),
            vbias: Tensor::zeros(&[1]),
            hbias: Tensor::zeros(&[1]),
            hidden_kind: HiddenKind::Rectified,
        };
        let minus_ten = Tensor::from_vec(&[1], vec![-10.0]).unwrap();
        for _ in 0..1000 {
            // std = sqrt(sigmoid(-10)) ≈ 0.0067, so |ε| < 10 with certainty here.
            assert_eq!(deep.sample_hidden(&minus_ten, &mut rng).unwrap().as_slice(), &[0.0]);
        }
    }

    #[test]
    fn linear_samples_are_centred_on_the_mean() {
        let rbm = rbm_1x1(0.5, 0.0, 0.25);
        let v = Tensor::from_vec(&[1], vec![1.5]).unwrap();
        let mut rng = Rng::new(4);
        let n = 100_000;
        let mean = (0..n).map(|_| rbm.sample_hidden(&v, &mut rng).unwrap().as_slice()[0]).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn reconstruction_bias_only() {
        let rbm = GaussianRbm::<f64> {
            weight: Tensor::zeros(&[2, 3]),
            vbias: Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap(),
            hbias: Tensor::zeros(&[2]),
            hidden_kind: HiddenKind::Linear,
        };
        let h = Tensor::from_vec(&[2], vec![5.0, -5.0]).unwrap();
        assert_eq!(rbm.reconstruct_visible(&h).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn cd1_hand_trace() {
        // h0 = 0.5*2 - 0.2 = 0.8, v1 = 0.5*0.8 + 0.1 = 0.5, h1 = 0.5*0.5 - 0.2 = 0.05
        // dW = 0.1 * (0.8*2 - 0.05*0.5 - 0.0002*0.5) = 0.15749
        let mut rbm = rbm_1x1(0.5, 0.1, -0.2);
        let cfg = PretrainConfig { lr: 0.1, ..Default::default() };
        let batch = Tensor::from_vec(&[1, 1], vec![2.0]).unwrap();
        let err = rbm.cd1_update(&batch, &cfg, &mut ZeroNoise).unwrap();
        assert!((err - 2.25).abs() < 1e-12);
        assert!((rbm.weight.as_slice()[0] - (0.5 + 0.15749)).abs() < 1e-12);
        assert!((rbm.vbias.as_slice()[0] - (0.1 + 0.15)).abs() < 1e-12);
        assert!((rbm.hbias.as_slice()[0] - (-0.2 + 0.075)).abs() < 1e-12);
    }

    #[test]
    fn cd1_zero_lr_is_noop() {
        let mut rng = Rng::new(5);
        let mut rbm = GaussianRbm::<f64>::random(6, 4, HiddenKind::Rectified, &mut rng);
        let before = rbm.clone();
        let batch = Tensor::from_vec(&[3, 6], (0..18).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let cfg = PretrainConfig { lr: 0.0, ..Default::default() };
        let err = rbm.cd1_update(&batch, &cfg, &mut rng).unwrap();
        assert_eq!(rbm, before);
        assert!(err.is_finite() && err >= 0.0);
    }

    #[test]
    fn cd1_matched_statistics_do_not_move_weights() {
        let rbm0 = GaussianRbm::<f64> {
            weight: Tensor::zeros(&[2, 3]),
            vbias: Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap(),
            hbias: Tensor::zeros(&[2]),
            hidden_kind: HiddenKind::Rectified,
        };
        let mut rbm = rbm0.clone();
        let batch = Tensor::from_vec(&[2, 3], vec![0.5, -1.0, 2.0, 0.5, -1.0, 2.0]).unwrap();
        let cfg = PretrainConfig { lr: 0.5, l2: 0.0, ..Default::default() };
        let err = rbm.cd1_update(&batch, &cfg, &mut ZeroNoise).unwrap();
        assert_eq!(err, 0.0);
        assert_eq!(rbm, rbm0);
    }

    #[test]
    fn stack_shapes_and_zero_epochs() {
        let mut rng = Rng::new(6);
        let data = Tensor::<f32>::from_vec(&[10, 12], (0..120).map(|_| rng.normal(0.0, 1.0) as f32).collect()).unwrap();
        let cfg = PretrainConfig { epochs: 0, seed: 9, ..Default::default() };
        let stack = pretrain_stack(&[12, 8, 6, 4, 2], &data, &cfg).unwrap();
        let dims: Vec<_> = stack.rbms.iter().map(|r| r.weight.dims().to_vec()).collect();
        assert_eq!(dims, vec![vec![8, 12], vec![6, 8], vec![4, 6], vec![2, 4]]);
        let kinds: Vec<_> = stack.rbms.iter().map(|r| r.hidden_kind).collect();
        assert_eq!(kinds, vec![HiddenKind::Rectified, HiddenKind::Rectified, HiddenKind::Rectified, HiddenKind::Linear]);

        // No training: the stack is exactly the seeded random initialisation.
        let mut init_rng = Rng::new(9);
        let first = GaussianRbm::<f32>::random(12, 8, HiddenKind::Rectified, &mut init_rng);
        assert_eq!(stack.rbms[0], first);
        assert!(stack.errors.iter().all(|e| e.is_empty()));
    }

    #[test]
    fn pretraining_is_reproducible() {
        let mut rng = Rng::new(7);
        let data = Tensor::<f32>::from_vec(&[40, 8], (0..320).map(|_| rng.normal(0.0, 1.0) as f32).collect()).unwrap();
        let cfg = PretrainConfig { epochs: 3, batch: 16, seed: 1, ..Default::default() };
        let a = pretrain_stack(&[8, 6, 3], &data, &cfg).unwrap();
        let b = pretrain_stack(&[8, 6, 3], &data, &cfg).unwrap();
        assert_eq!(a.rbms, b.rbms);
        assert_eq!(a.errors, b.errors);
    }

    #[test]
    fn empty_or_mismatched_data_is_rejected() {
        let data = Tensor::<f32>::zeros(&[4, 5]);
        assert!(pretrain_stack(&[6, 3], &data, &PretrainConfig::default()).is_err());
        assert!(pretrain_stack(&[5], &data, &PretrainConfig::default()).is_err());
    }
}
