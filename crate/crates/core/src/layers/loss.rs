use crate::error::{invalid, Error, Result};
use crate::numerics::{Real, Tensor};

/// Row-wise softmax of `[N × K]` logits, max-shifted.
pub fn softmax_rows<S: Real>(logits: &Tensor<S>) -> Tensor<S> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Masked mean cross-entropy over frames.
///
/// Returns the mean of `-log softmax(logits_t)[label_t]` over frames with
/// `mask[t]`, and `dLogits` with `(p_t - onehot_t) / count` on those frames
/// and exact zeros elsewhere. Labels of masked-out frames are ignored.
pub fn softmax_xent<S: Real>(logits: &Tensor<S>, labels: &[usize], mask: &[bool]) -> Result<(f64, Tensor<S>)> {
    let (n, k) = (logits.rows(), logits.cols());
    if logits.rank() != 2 || labels.len() != n || mask.len() != n {
        return Err(Error::Shape { op: "softmax_xent", expected: vec![labels.len(), k], actual: logits.dims().to_vec() });
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(invalid("softmax_xent: every frame is masked out"));
    }
    let inv = S::of(1.0 / count as f64);
    let mut grad = Tensor::zeros(logits.dims());
    let mut total = 0.0f64;
    for t in (0..n).filter(|&t| mask[t]) {
        let label = labels[t];
        if label >= k {
            return Err(invalid(format!("label {label} out of range for {k} classes")));
        }
        let row = logits.row(t);
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let sum: S = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += (log_z - row[label]).f64();
        let g = grad.row_mut(t);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() * inv;
        }
        g[label] -= inv;
    }
    let loss = total / count as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        let logits = Tensor::<f64>::zeros(&[3, 4]);
        let (loss, _) = softmax_xent(&logits, &[0, 1, 2], &[true; 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn saturated_correct_class() {
        let logits = Tensor::<f64>::from_vec(&[1, 3], vec![0.0, 50.0, 0.0]).unwrap();
        let (loss, _) = softmax_xent(&logits, &[1], &[true]).unwrap();
        assert!(loss < 1e-9);
    }

    #[test]
    fn masked_frames_are_ignored() {
        let logits = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, -1.0, 1e30, f64::MAX]).unwrap();
        let (loss, grad) = softmax_xent(&logits, &[0, 99], &[true, false]).unwrap();
        let (alone, _) = softmax_xent(&logits.slice_rows(0, 1), &[0], &[true]).unwrap();
        assert_eq!(loss, alone);
        assert_eq!(grad.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn error_paths() {
        let logits = Tensor::<f64>::zeros(&[2, 2]);
        assert!(softmax_xent(&logits, &[0, 0], &[false, false]).is_err());
        assert!(softmax_xent(&logits, &[0, 2], &[true, true]).is_err());
    }

    #[test]
    fn shift_invariance() {
        let logits = Tensor::<f64>::from_vec(&[2, 3], vec![0.3, -1.2, 2.0, 0.5, 0.1, -0.7]).unwrap();
        let shifted = Tensor::from_vec(&[2, 3], vec![100.3, 98.8, 102.0, -4.5, -4.9, -5.7]).unwrap();
        let (a, _) = softmax_xent(&logits, &[2, 0], &[true, true]).unwrap();
        let (b, _) = softmax_xent(&shifted, &[2, 0], &[true, true]).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}
