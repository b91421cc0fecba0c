//! Per-utterance preprocessing for the raw and diff streams.

use crate::error::{invalid, Result};
use crate::numerics::Tensor;

/// Frames whose pixel variance is at or below this are mapped to zeros.
pub const ZERO_VARIANCE: f64 = 1e-12;

/// Flattens `[T × H × W]` (or `[T × D]`) frames to `[T × D]` and subtracts
/// the utterance's mean image from every frame.
fn mean_subtracted(frames: &Tensor<f64>) -> Result<Tensor<f64>> {
    let t = frames.rows();
    if frames.rank() < 2 || t < 2 {
        return Err(invalid(format!("preprocessing needs at least 2 frames, got dims {:?}", frames.dims())));
    }
    let d = frames.cols();
    let mut out = frames.clone().reshape(&[t, d])?;
    let mut mean = vec![0.0; d];
    for i in 0..t {
        for (m, &x) in mean.iter_mut().zip(out.row(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= t as f64;
    }
    for i in 0..t {
        for (x, m) in out.row_mut(i).iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    Ok(out)
}

/// Z-normalises each row over its own entries; near-constant rows become zero.
fn z_normalize_rows(x: &mut Tensor<f64>) {
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var <= ZERO_VARIANCE {
            row.fill(0.0);
        } else {
            let std = var.sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) / std;
            }
        }
    }
}

/// Raw-stream input: mean image removed, then every frame z-normalised.
pub fn preprocess_raw(frames: &Tensor<f64>) -> Result<Tensor<f64>> {
    let mut x = mean_subtracted(frames)?;
    z_normalize_rows(&mut x);
    Ok(x)
}

/// Diff-stream input: differences of consecutive mean-subtracted frames,
/// led by an all-zero frame so the length stays `T`, then z-normalised.
pub fn preprocess_diff(frames: &Tensor<f64>) -> Result<Tensor<f64>> {
    let m = mean_subtracted(frames)?;
    let (t, d) = (m.rows(), m.cols());
    let mut out = Tensor::zeros(&[t, d]);
    for i in 1..t {
        let (prev, cur) = (m.row(i - 1), m.row(i));
        for (o, (c, p)) in out.row_mut(i).iter_mut().zip(cur.iter().zip(prev)) {
            *o = c - p;
        }
    }
    z_normalize_rows(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(t: usize, d: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[t, d, 1], data.to_vec()).unwrap()
    }

    #[test]
    fn constant_frames_give_zeros() {
        let f = frames(3, 2, &[5.0, 9.0, 5.0, 9.0, 5.0, 9.0]);
        assert!(preprocess_raw(&f).unwrap().as_slice().iter().all(|&v| v == 0.0));
        assert!(preprocess_diff(&f).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_example_with_constant_residual() {
        // Mean image [1, 3]; residuals [-1, -1] and [1, 1] have no spread.
        let out = preprocess_raw(&frames(2, 2, &[0.0, 2.0, 2.0, 4.0])).unwrap();
        assert_eq!(out.as_slice(), &[0.0; 4]);
    }

    #[test]
    fn hand_example() {
        // Mean image [1, 4]; residuals [-1, -2] and [1, 2].
        let f = frames(2, 2, &[0.0, 2.0, 2.0, 6.0]);
        assert_eq!(preprocess_raw(&f).unwrap().as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        // Single difference [2, 4] normalises to [-1, 1].
        assert_eq!(preprocess_diff(&f).unwrap().as_slice(), &[0.0, 0.0, -1.0, 1.0]);
    }

    #[test]
    fn ramp_has_equal_interior_diffs() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let data: Vec<f64> = (0..5).flat_map(|t| u.iter().map(move |x| t as f64 * x)).collect();
        let out = preprocess_diff(&frames(5, 4, &data)).unwrap();
        assert_eq!(out.rows(), 5);
        assert!(out.row(0).iter().all(|&v| v == 0.0));
        for t in 2..5 {
            for (a, b) in out.row(t).iter().zip(out.row(1)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_single_frame() {
        assert!(preprocess_raw(&frames(1, 2, &[1.0, 2.0])).is_err());
    }
}
