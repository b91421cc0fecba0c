use super::Real;

/// Strided read-only matrix view.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, S> {
    pub(crate) data: &'a [S],
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) rs: isize,
    pub(crate) cs: isize,
}

/// Strided mutable matrix view.
#[derive(Debug)]
pub struct MatMut<'a, S> {
    pub(crate) data: &'a mut [S],
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) rs: isize,
    pub(crate) cs: isize,
}

impl<'a, S> MatRef<'a, S> {
    /// Row-major `rows × cols` view.
    pub fn new(data: &'a [S], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix view out of bounds");
        MatRef { data, rows, cols, rs: cols as isize, cs: 1 }
    }

    /// Transposed view (no copy).
    pub fn t(self) -> Self {
        MatRef { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn max_index(&self) -> usize {
        extent(self.rows, self.cols, self.rs, self.cs)
    }
}

impl<'a, S> MatMut<'a, S> {
    /// Row-major `rows × cols` view.
    pub fn new(data: &'a mut [S], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix view out of bounds");
        MatMut { data, rows, cols, rs: cols as isize, cs: 1 }
    }

    /// Transposed view (no copy).
    pub fn t(self) -> Self {
        MatMut { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn max_index(&self) -> usize {
        extent(self.rows, self.cols, self.rs, self.cs)
    }
}

fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    debug_assert!(rs >= 0 && cs >= 0);
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
}

/// `C ← α·A·B + β·C`.
///
/// When `beta` is zero, `C` is overwritten and its previous contents ignored.
/// Panics if the operand dimensions disagree.
pub fn gemm<S: Real>(alpha: S, a: MatRef<'_, S>, b: MatRef<'_, S>, beta: S, c: MatMut<'_, S>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions");
    assert_eq!(a.rows, c.rows, "gemm output rows");
    assert_eq!(b.cols, c.cols, "gemm output cols");
    assert!(a.max_index() <= a.data.len());
    assert!(b.max_index() <= b.data.len());
    assert!(c.max_index() <= c.data.len());
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        // matrixmultiply handles k = 0, but scale C explicitly to keep beta semantics obvious.
        for i in 0..m {
            for j in 0..n {
                let idx = i * c.rs as usize + j * c.cs as usize;
                c.data[idx] = if beta == S::zero() { S::zero() } else { beta * c.data[idx] };
            }
        }
        return;
    }
    S::gemm_raw(m, k, n, alpha, a, b, beta, c);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_product() {
        let a: Vec<f64> = (0..6).map(|x| x as f64 - 2.0).collect();
        let b: Vec<f64> = (0..12).map(|x| (x as f64) * 0.5).collect();
        let mut c = vec![0.0; 8];
        gemm(1.0, MatRef::new(&a, 2, 3), MatRef::new(&b, 3, 4), 0.0, MatMut::new(&mut c, 2, 4));
        assert_eq!(c, naive(&a, &b, 2, 3, 4));
    }

    #[test]
    fn transposed_views_and_accumulation() {
        // A stored as 3x2, used as its transpose.
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = vec![1.0; 4];
        gemm(2.0, MatRef::new(&at, 3, 2).t(), MatRef::new(&b, 3, 2), 1.0, MatMut::new(&mut c, 2, 2));
        // A = [[1,2,3],[4,5,6]], A·B = [[4,5],[10,11]]
        assert_eq!(c, vec![9.0, 11.0, 21.0, 23.0]);
    }
}
