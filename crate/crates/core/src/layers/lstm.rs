use crate::error::{Error, Result};
use crate::numerics::{gemm, glorot_init, sigmoid, Real, Rng, Tensor};

/// One LSTM direction. Gate blocks are stacked in the order input, forget,
/// candidate, output: rows `[0,H)`, `[H,2H)`, `[2H,3H)`, `[3H,4H)`.
///
/// No peepholes; sigmoid gates, tanh candidate and cell output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<S: Real = f32> {
    /// `[4H × D]`
    pub w_ih: Tensor<S>,
    /// `[4H × H]`
    pub w_hh: Tensor<S>,
    /// `[4H]`
    pub bias: Tensor<S>,
}

/// Forward activations kept for backpropagation through time.
#[derive(Clone, Debug)]
pub struct LstmCache<S: Real> {
    input: Tensor<S>,
    /// Activated gates per time index, `[T × 4H]`.
    gates: Tensor<S>,
    cell: Tensor<S>,
    tanh_cell: Tensor<S>,
    hidden: Tensor<S>,
    reverse: bool,
}

impl<S: Real> LstmParams<S> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_ih: Tensor::zeros(&[4 * hidden, input]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Glorot weights; forget-gate bias 1, other biases 0.
    pub fn glorot(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.as_mut_slice()[hidden..2 * hidden].iter_mut().for_each(|b| *b = S::one());
        LstmParams { w_ih: glorot_init(input, 4 * hidden, rng), w_hh: glorot_init(hidden, 4 * hidden, rng), bias }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden())
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.dims()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.dims()[1]
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        let d = self.input_dim();
        self.w_ih.expect_dims("lstm w_ih", &[4 * h, d])?;
        self.w_hh.expect_dims("lstm w_hh", &[4 * h, h])?;
        self.bias.expect_dims("lstm bias", &[4 * h])
    }

    /// Runs the recurrence over `seq: [T × D]` from zero state. With `reverse`
    /// the sequence is processed back to front; outputs stay at their time index.
    pub fn forward(&self, seq: &Tensor<S>, reverse: bool) -> Result<(Tensor<S>, LstmCache<S>)> {
        self.check()?;
        if seq.rank() != 2 || seq.cols() != self.input_dim() {
            return Err(Error::Shape { op: "lstm input", expected: vec![seq.rows(), self.input_dim()], actual: seq.dims().to_vec() });
        }
        let t_len = seq.rows();
        let h = self.hidden();
        let g4 = 4 * h;

        // Input projections for all steps at once.
        let mut gates = Tensor::zeros(&[t_len, g4]);
        gemm(S::one(), seq.mat(), self.w_ih.mat().t(), S::zero(), gates.mat_mut());
        for t in 0..t_len {
            for (z, &b) in gates.row_mut(t).iter_mut().zip(self.bias.as_slice()) {
                *z += b;
            }
        }
        // `w_hh` transposed so the recurrent product is a sequence of contiguous axpys.
        let w_hh_t = self.w_hh.transpose();

        let mut cell = Tensor::zeros(&[t_len, h]);
        let mut tanh_cell = Tensor::zeros(&[t_len, h]);
        let mut hidden = Tensor::zeros(&[t_len, h]);
        let mut h_prev = vec![S::zero(); h];
        let mut c_prev = vec![S::zero(); h];

        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            let z = gates.row_mut(t);
            for (k, &hk) in h_prev.iter().enumerate() {
                if hk != S::zero() {
                    for (zj, &w) in z.iter_mut().zip(w_hh_t.row(k)) {
                        *zj += hk * w;
                    }
                }
            }
            for j in 0..h {
                z[j] = sigmoid(z[j]);
                z[h + j] = sigmoid(z[h + j]);
                z[2 * h + j] = z[2 * h + j].tanh();
                z[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            let (i, f, g, o) = (&z[..h], &z[h..2 * h], &z[2 * h..3 * h], &z[3 * h..]);
            let c_row = cell.row_mut(t);
            for j in 0..h {
                c_row[j] = f[j] * c_prev[j] + i[j] * g[j];
            }
            let tc_row = tanh_cell.row_mut(t);
            for j in 0..h {
                tc_row[j] = c_row[j].tanh();
            }
            let h_row = hidden.row_mut(t);
            for j in 0..h {
                h_row[j] = o[j] * tc_row[j];
            }
            h_prev.copy_from_slice(h_row);
            c_prev.copy_from_slice(c_row);
        }
        hidden.ensure_finite("lstm hidden state")?;
        let out = hidden.clone();
        Ok((out, LstmCache { input: seq.clone(), gates, cell, tanh_cell, hidden, reverse }))
    }

    /// Backpropagation through time. Accumulates parameter gradients into
    /// `grads` and returns the gradient w.r.t. the input sequence.
    pub fn backward(&self, cache: &LstmCache<S>, d_out: &Tensor<S>, grads: &mut LstmParams<S>) -> Result<Tensor<S>> {
        d_out.expect_dims("lstm backward", cache.hidden.dims())?;
        let t_len = d_out.rows();
        let h = self.hidden();
        let g4 = 4 * h;
        let one = S::one();

        let mut d_gates = Tensor::zeros(&[t_len, g4]);
        let mut h_prev_all = Tensor::zeros(&[t_len, h]);
        let mut dh_rec = vec![S::zero(); h];
        let mut dc_rec = vec![S::zero(); h];
        let zeros = vec![S::zero(); h];

        for step in (0..t_len).rev() {
            let (t, prev) = if cache.reverse {
                (t_len - 1 - step, if step == 0 { None } else { Some(t_len - step) })
            } else {
                (step, step.checked_sub(1))
            };
            let c_prev = prev.map_or(&zeros[..], |p| cache.cell.row(p));
            if let Some(p) = prev {
                h_prev_all.row_mut(t).copy_from_slice(cache.hidden.row(p));
            }
            let z = cache.gates.row(t);
            let (i, f, g, o) = (&z[..h], &z[h..2 * h], &z[2 * h..3 * h], &z[3 * h..]);
            let tc = cache.tanh_cell.row(t);
            let dz = d_gates.row_mut(t);
            for j in 0..h {
                let dh = d_out.row(t)[j] + dh_rec[j];
                let dc = dc_rec[j] + dh * o[j] * (one - tc[j] * tc[j]);
                dz[j] = dc * g[j] * i[j] * (one - i[j]);
                dz[h + j] = dc * c_prev[j] * f[j] * (one - f[j]);
                dz[2 * h + j] = dc * i[j] * (one - g[j] * g[j]);
                dz[3 * h + j] = dh * tc[j] * o[j] * (one - o[j]);
                dc_rec[j] = dc * f[j];
            }
            dh_rec.iter_mut().for_each(|x| *x = S::zero());
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr != S::zero() {
                    for (acc, &w) in dh_rec.iter_mut().zip(self.w_hh.row(r)) {
                        *acc += dzr * w;
                    }
                }
            }
        }

        gemm(one, d_gates.mat().t(), cache.input.mat(), one, grads.w_ih.mat_mut());
        gemm(one, d_gates.mat().t(), h_prev_all.mat(), one, grads.w_hh.mat_mut());
        let db = grads.bias.as_mut_slice();
        for t in 0..t_len {
            for (acc, &g) in db.iter_mut().zip(d_gates.row(t)) {
                *acc += g;
            }
        }
        let mut dx = Tensor::zeros(cache.input.dims());
        gemm(one, d_gates.mat(), self.w_ih.mat(), S::zero(), dx.mat_mut());
        Ok(dx)
    }
}

/// Bidirectional LSTM; output at `t` is `[h_fwd(t) ; h_bwd(t)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Blstm<S: Real = f32> {
    pub forward: LstmParams<S>,
    pub backward: LstmParams<S>,
}

#[derive(Clone, Debug)]
pub struct BlstmCache<S: Real> {
    fwd: LstmCache<S>,
    bwd: LstmCache<S>,
}

impl<S: Real> Blstm<S> {
    pub fn glorot(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let forward = LstmParams::glorot(input, hidden, rng);
        let backward = LstmParams::glorot(input, hidden, rng);
        Blstm { forward, backward }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Blstm { forward: LstmParams::zeros(input, hidden), backward: LstmParams::zeros(input, hidden) }
    }

    pub fn zeros_like(&self) -> Self {
        Blstm { forward: self.forward.zeros_like(), backward: self.backward.zeros_like() }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden() + self.backward.hidden()
    }

    pub fn run(&self, seq: &Tensor<S>) -> Result<(Tensor<S>, BlstmCache<S>)> {
        let (hf, fwd) = self.forward.forward(seq, false)?;
        let (hb, bwd) = self.backward.forward(seq, true)?;
        Ok((Tensor::concat_cols(&[&hf, &hb])?, BlstmCache { fwd, bwd }))
    }

    pub fn backprop(&self, cache: &BlstmCache<S>, d_out: &Tensor<S>, grads: &mut Blstm<S>) -> Result<Tensor<S>> {
        let parts = d_out.split_cols(&[self.forward.hidden(), self.backward.hidden()])?;
        let mut dx = self.forward.backward(&cache.fwd, &parts[0], &mut grads.forward)?;
        let dxb = self.backward.backward(&cache.bwd, &parts[1], &mut grads.backward)?;
        dx.add_scaled(S::one(), &dxb)?;
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(dims: &[usize], rng: &mut Rng) -> Tensor<f64> {
        let n = dims.iter().product();
        Tensor::from_vec(dims, (0..n).map(|_| rng.normal(0.0, 0.7)).collect()).unwrap()
    }

    fn random_params(d: usize, h: usize, rng: &mut Rng) -> LstmParams<f64> {
        LstmParams { w_ih: random(&[4 * h, d], rng), w_hh: random(&[4 * h, h], rng), bias: random(&[4 * h], rng) }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = LstmParams::<f64>::zeros(2, 3);
        let mut rng = Rng::new(1);
        let (h, _) = p.forward(&random(&[5, 2], &mut rng), false).unwrap();
        assert!(h.as_slice().iter().all(|&x| x == 0.0));
        let b = Blstm::<f64>::zeros(2, 3);
        let (out, _) = b.run(&random(&[4, 2], &mut rng)).unwrap();
        assert_eq!(out.dims(), &[4, 6]);
        assert!(out.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_step_by_hand() {
        let mut rng = Rng::new(2);
        let (d, h) = (2, 3);
        let p = random_params(d, h, &mut rng);
        let x = random(&[1, d], &mut rng);
        let (out, _) = p.forward(&x, false).unwrap();
        for j in 0..h {
            let pre = |gate: usize| {
                let r = gate * h + j;
                p.bias.as_slice()[r] + (0..d).map(|k| p.w_ih.row(r)[k] * x.as_slice()[k]).sum::<f64>()
            };
            let s = |v: f64| 1.0 / (1.0 + (-v).exp());
            let c = s(pre(0)) * pre(2).tanh();
            let expected = s(pre(3)) * c.tanh();
            assert!((out.as_slice()[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn reverse_is_conjugated_forward() {
        let mut rng = Rng::new(3);
        let p = random_params(2, 3, &mut rng);
        let x = random(&[5, 2], &mut rng);
        let flip = |t: &Tensor<f64>| {
            let rows: Vec<Tensor<f64>> = (0..t.rows()).rev().map(|r| t.slice_rows(r, r + 1)).collect();
            Tensor::concat_rows(&rows.iter().collect::<Vec<_>>()).unwrap()
        };
        let (rev, _) = p.forward(&x, true).unwrap();
        let (fwd_of_flipped, _) = p.forward(&flip(&x), false).unwrap();
        assert_eq!(rev, flip(&fwd_of_flipped));
    }

    #[test]
    fn palindrome_with_mirrored_directions() {
        let mut rng = Rng::new(4);
        let p = random_params(2, 3, &mut rng);
        let b = Blstm { forward: p.clone(), backward: p };
        let half = random(&[2, 2], &mut rng);
        let mid = random(&[1, 2], &mut rng);
        // rows: a, b, m, b, a
        let seq = Tensor::concat_rows(&[
            &half.slice_rows(0, 1),
            &half.slice_rows(1, 2),
            &mid,
            &half.slice_rows(1, 2),
            &half.slice_rows(0, 1),
        ])
        .unwrap();
        let (out, _) = b.run(&seq).unwrap();
        let t_len = 5;
        for t in 0..t_len {
            let (f, bk) = out.row(t).split_at(3);
            let (f2, bk2) = out.row(t_len - 1 - t).split_at(3);
            assert_eq!(f, bk2);
            assert_eq!(bk, f2);
        }
    }
}
