use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, glorot_init, Real, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// Fully connected layer `act(W·x + b)`, `W: [out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FcLayer<S: Real = f32> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub activation: Activation,
}

/// Gradients of one FC backward pass.
#[derive(Clone, Debug)]
pub struct FcGrads<S: Real> {
    pub dx: Tensor<S>,
    pub dw: Tensor<S>,
    pub db: Tensor<S>,
}

impl<S: Real> FcLayer<S> {
    pub fn new(weight: Tensor<S>, bias: Tensor<S>, activation: Activation) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(Error::Shape { op: "fc weight", expected: vec![0, 0], actual: weight.dims().to_vec() });
        }
        bias.expect_dims("fc bias", &[weight.dims()[0]])?;
        Ok(FcLayer { weight, bias, activation })
    }

    /// Glorot-initialised weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        FcLayer { weight: glorot_init(fan_in, fan_out, rng), bias: Tensor::zeros(&[fan_out]), activation }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        FcLayer { weight: Tensor::zeros(&[fan_out, fan_in]), bias: Tensor::zeros(&[fan_out]), activation }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.out_dim(), self.activation)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        if x.rank() > 2 || x.cols() != self.in_dim() {
            return Err(Error::Shape { op: "fc input", expected: vec![self.in_dim()], actual: x.dims().to_vec() });
        }
        Ok(())
    }

    /// `x` is one vector `[in]` or a batch of rows `[N × in]`.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let n = x.rows();
        let out = self.out_dim();
        let dims: Vec<usize> = if x.rank() == 1 { vec![out] } else { vec![n, out] };
        let mut y = Tensor::zeros(&dims);
        gemm(S::one(), x.mat(), self.weight.mat().t(), S::zero(), y.mat_mut());
        let b = self.bias.as_slice();
        for r in 0..n {
            let row = y.row_mut(r);
            for (v, &bj) in row.iter_mut().zip(b) {
                *v += bj;
                if self.activation == Activation::Relu && *v < S::zero() {
                    *v = S::zero();
                }
            }
        }
        Ok(y)
    }

    /// Accumulates `dW`, `db` into `grads` and returns `dX` when `want_dx`.
    ///
    /// `y` must be this layer's forward output for `x`; relu'(0) is taken as 0.
    pub fn backward(
        &self,
        x: &Tensor<S>,
        y: &Tensor<S>,
        d_out: &Tensor<S>,
        grads: &mut FcLayer<S>,
        want_dx: bool,
    ) -> Result<Option<Tensor<S>>> {
        self.check_input(x)?;
        d_out.expect_dims("fc backward", y.dims())?;
        if y.rows() != x.rows() || y.cols() != self.out_dim() {
            return Err(Error::Shape { op: "fc backward", expected: vec![x.rows(), self.out_dim()], actual: y.dims().to_vec() });
        }
        let mut da = d_out.clone();
        if self.activation == Activation::Relu {
            for (g, &v) in da.as_mut_slice().iter_mut().zip(y.as_slice()) {
                if v <= S::zero() {
                    *g = S::zero();
                }
            }
        }
        gemm(S::one(), da.mat().t(), x.mat(), S::one(), grads.weight.mat_mut());
        let db = grads.bias.as_mut_slice();
        for r in 0..da.rows() {
            for (acc, &g) in db.iter_mut().zip(da.row(r)) {
                *acc += g;
            }
        }
        if !want_dx {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(x.dims());
        gemm(S::one(), da.mat(), self.weight.mat(), S::zero(), dx.mat_mut());
        Ok(Some(dx))
    }

    /// Stand-alone gradients `(dX, dW, db)` for a single backward pass.
    pub fn gradients(&self, x: &Tensor<S>, d_out: &Tensor<S>) -> Result<FcGrads<S>> {
        let y = self.forward(x)?;
        let mut g = self.zeros_like();
        let dx = self.backward(x, &y, d_out, &mut g, true)?.expect("dx requested");
        Ok(FcGrads { dx, dw: g.weight, db: g.bias })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(act: Activation) -> FcLayer<f64> {
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        FcLayer::new(w, Tensor::zeros(&[2]), act).unwrap()
    }

    #[test]
    fn identity_forward() {
        let x = Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap();
        assert_eq!(identity(Activation::Linear).forward(&x).unwrap().as_slice(), &[1.0, -2.0]);
        assert_eq!(identity(Activation::Relu).forward(&x).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn relu_gradient_at_zero_is_zero() {
        let layer = identity(Activation::Relu);
        let x = Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap();
        let g = layer.gradients(&x, &Tensor::full(&[2], 1.0)).unwrap();
        assert_eq!(g.dx.as_slice(), &[0.0, 1.0]);
        assert_eq!(g.db.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn input_width_is_checked() {
        let layer = identity(Activation::Linear);
        let x = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(layer.forward(&x), Err(Error::Shape { .. })));
    }

    #[test]
    fn batch_rows_match_single_rows() {
        let mut rng = Rng::new(11);
        let layer = FcLayer::<f64>::glorot(3, 4, Activation::Relu, &mut rng);
        let xs = Tensor::from_vec(&[2, 3], (0..6).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let batch = layer.forward(&xs).unwrap();
        for r in 0..2 {
            let single = layer.forward(&Tensor::from_vec(&[3], xs.row(r).to_vec()).unwrap()).unwrap();
            assert_eq!(single.as_slice(), batch.row(r));
        }
    }
}
