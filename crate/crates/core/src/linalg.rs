//! Tridiagonal storage and the Thomas algorithm.

/// Row-wise tridiagonal matrix. `lower[i]` is entry `(i, i-1)` and
/// `upper[i]` is entry `(i, i+1)`; `lower[0]` and `upper[n-1]` are unused.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.upper[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    /// Sum of absolute entries of row `i`.
    pub fn row_abs_sum(&self, i: usize) -> f64 {
        let n = self.len();
        let mut s = self.diag[i].abs();
        if i > 0 {
            s += self.lower[i].abs();
        }
        if i + 1 < n {
            s += self.upper[i].abs();
        }
        s
    }

    /// Solves `self * x = rhs` without pivoting. Returns `None` on a zero or
    /// non-finite pivot.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        if n == 0 {
            return Some(Vec::new());
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        c[0] = self.upper[0] / pivot;
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * c[i - 1];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            if i + 1 < n {
                c[i] = self.upper[i] / pivot;
            }
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / pivot;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j + 1 == i {
                self.lower[i]
            } else if i + 1 == j {
                self.upper[i]
            } else {
                0.0
            }
        })
    }
}
