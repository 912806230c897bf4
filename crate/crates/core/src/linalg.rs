//! Dense Cholesky factorization of the shifted Gauss-Newton matrix.

use nalgebra::{DMatrix, DVector};

/// Lower-triangular factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factor `a + shift * I`. Only the lower triangle of `a` is read.
    ///
    /// Returns `None` when a pivot is not strictly positive and finite.
    pub fn factor_shifted(a: &DMatrix<f64>, shift: f64) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)] + shift;
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Some(Self { l })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solve `L w = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut w = b.clone();
        for i in 0..n {
            let mut s = w[i];
            for k in 0..i {
                s -= self.l[(i, k)] * w[k];
            }
            w[i] = s / self.l[(i, i)];
        }
        w
    }

    /// Solve `L^T z = w`.
    pub fn solve_upper(&self, w: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut z = w.clone();
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    /// Solve `L L^T z = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }
}
