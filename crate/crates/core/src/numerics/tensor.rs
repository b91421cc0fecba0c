use std::fmt;

use super::{MatMut, MatRef, Real};
use crate::error::{invalid, Error, Result};

/// Dense row-major array of rank 1 to 3, last dimension fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor<S = f32> {
    dims: Vec<usize>,
    data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, S::zero())
    }

    pub fn full(dims: &[usize], value: S) -> Self {
        check_dims(dims).expect("invalid tensor dims");
        Tensor { dims: dims.to_vec(), data: vec![value; dims.iter().product()] }
    }

    pub fn from_vec(dims: &[usize], data: Vec<S>) -> Result<Self> {
        check_dims(dims)?;
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(invalid(format!(
                "tensor dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims: dims.to_vec(), data })
    }

    /// Builds a tensor from `f64` values, rounding into `S`.
    pub fn from_f64(dims: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(dims, data.iter().map(|&x| S::of(x)).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    /// Number of rows when viewed as a matrix: the first dim (1 for rank 1).
    pub fn rows(&self) -> usize {
        if self.dims.len() == 1 {
            1
        } else {
            self.dims[0]
        }
    }

    /// Row width when viewed as a matrix: product of all trailing dims.
    pub fn cols(&self) -> usize {
        if self.dims.len() == 1 {
            self.dims[0]
        } else {
            self.dims[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Copy of rows `start..end` as a rank-2 tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor<S> {
        let c = self.cols();
        Tensor { dims: vec![end - start, c], data: self.data[start * c..end * c].to_vec() }
    }

    pub fn mat(&self) -> MatRef<'_, S> {
        MatRef::new(&self.data, self.rows(), self.cols())
    }

    pub fn mat_mut(&mut self) -> MatMut<'_, S> {
        let (r, c) = (self.rows(), self.cols());
        MatMut::new(&mut self.data, r, c)
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape { op: "reshape", expected: dims.to_vec(), actual: self.dims });
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    /// Transpose of the matrix view.
    pub fn transpose(&self) -> Tensor<S> {
        let (r, c) = (self.rows(), self.cols());
        let mut data = Vec::with_capacity(r * c);
        for j in 0..c {
            data.extend((0..r).map(|i| self.data[i * c + j]));
        }
        Tensor { dims: vec![c, r], data }
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor { dims: self.dims.clone(), data: self.data.iter().map(|&x| T::of(x.f64())).collect() }
    }

    pub fn fill(&mut self, value: S) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor { dims: self.dims.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: S, other: &Tensor<S>) -> Result<()> {
        self.expect_dims("add_scaled", other.dims())?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x.f64() * x.f64()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Errors with [`Error::NonFinite`] naming `what` if any entry is NaN or infinite.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn expect_dims(&self, op: &'static str, dims: &[usize]) -> Result<()> {
        if self.dims == dims {
            Ok(())
        } else {
            Err(Error::Shape { op, expected: dims.to_vec(), actual: self.dims.clone() })
        }
    }

    /// Horizontal concatenation of rank-2 tensors with equal row counts.
    pub fn concat_cols(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
        let rows = parts.first().map(|p| p.rows()).unwrap_or(0);
        if let Some(bad) = parts.iter().find(|p| p.rows() != rows) {
            return Err(Error::Shape { op: "concat_cols", expected: vec![rows], actual: vec![bad.rows()] });
        }
        let width: usize = parts.iter().map(|p| p.cols()).sum();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Tensor::from_vec(&[rows, width], data)
    }

    /// Splits a rank-2 tensor into column blocks of the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Tensor<S>>> {
        if widths.iter().sum::<usize>() != self.cols() {
            return Err(Error::Shape { op: "split_cols", expected: widths.to_vec(), actual: self.dims.clone() });
        }
        let rows = self.rows();
        let mut out: Vec<Vec<S>> = widths.iter().map(|w| Vec::with_capacity(w * rows)).collect();
        for r in 0..rows {
            let mut off = 0;
            let row = self.row(r);
            for (w, o) in widths.iter().zip(out.iter_mut()) {
                o.extend_from_slice(&row[off..off + w]);
                off += w;
            }
        }
        widths
            .iter()
            .zip(out)
            .map(|(&w, d)| Tensor::from_vec(&[rows, w], d))
            .collect()
    }

    /// Stacks equally wide rank-2 tensors vertically.
    pub fn concat_rows(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
        let width = parts.first().map(|p| p.cols()).unwrap_or(0);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols() != width {
                return Err(Error::Shape { op: "concat_rows", expected: vec![width], actual: vec![p.cols()] });
            }
            rows += p.rows();
            data.extend_from_slice(p.as_slice());
        }
        if rows == 0 {
            return Err(invalid("concat_rows of empty input"));
        }
        Tensor::from_vec(&[rows, width], data)
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.len() > 3 {
        return Err(invalid(format!("tensor rank must be 1..=3, got {}", dims.len())));
    }
    if dims.contains(&0) {
        return Err(invalid(format!("tensor dims must be positive, got {dims:?}")));
    }
    Ok(())
}

impl<S: Real> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor<{}>{:?} [", S::NAME, self.dims)?;
        for (i, x) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", …")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_must_match_data() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(&[0], vec![]).is_err());
        assert!(Tensor::<f32>::from_vec(&[1, 1, 1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn finiteness_is_reported() {
        let t = Tensor::<f64>::from_vec(&[2], vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(t.ensure_finite("x"), Err(Error::NonFinite(_))));
    }

    #[test]
    fn concat_and_split_columns() {
        let a = Tensor::<f64>::from_vec(&[2, 1], vec![1.0, 2.0]).unwrap();
        let b = Tensor::<f64>::from_vec(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = Tensor::concat_cols(&[&a, &b]).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let parts = c.split_cols(&[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn matrix_view_of_rank3() {
        let t = Tensor::<f32>::zeros(&[4, 2, 3]);
        assert_eq!((t.rows(), t.cols()), (4, 6));
    }
}
