use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const SYMMETRY_TOL: f64 = 1e-10;

/// Cholesky factor of a symmetric positive-definite matrix, reusable across
/// right-hand sides.
pub struct SpdFactor {
    n: usize,
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(a: &Matrix) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows != cols {
            return Err(Error::dim(format!(
                "SPD solve needs a square matrix, got {rows}x{cols}"
            )));
        }
        if !a.is_finite() {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let n = rows;
        let scale = a.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let dm = DMatrix::from_row_slice(n, n, a.as_slice());
        let chol = Cholesky::new(dm).ok_or(Error::NotPositiveDefinite(""))?;
        Ok(SpdFactor { n, chol })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.n {
            return Err(Error::dim(format!(
                "right-hand side has {} rows, system has {}",
                b.rows(),
                self.n
            )));
        }
        let rhs = DMatrix::from_row_slice(b.rows(), b.cols(), b.as_slice());
        let x = self.chol.solve(&rhs);
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for r in 0..b.rows() {
            for c in 0..b.cols() {
                out[(r, c)] = x[(r, c)];
            }
        }
        if !out.is_finite() {
            return Err(Error::NotPositiveDefinite(" (solution is not finite)"));
        }
        Ok(out)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(&Matrix::column(b))?.into_vec())
    }
}

/// Solves `A X = B` for symmetric positive-definite `A`.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    SpdFactor::new(a)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let x = solve_spd(&Matrix::identity(2), &Matrix::from_rows(&[[3.0], [4.0]])).unwrap();
        assert_eq!(x, Matrix::from_rows(&[[3.0], [4.0]]));
    }

    #[test]
    fn scalar_system() {
        let x = solve_spd(&Matrix::from_rows(&[[2.0]]), &Matrix::from_rows(&[[4.0]])).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_against_explicit_inverse() {
        // inverse of [[2,1],[1,2]] is (1/3) [[2,-1],[-1,2]]
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let b = Matrix::from_rows(&[[1.0], [1.0]]);
        let x = solve_spd(&a, &b).unwrap();
        let inv_b = [(2.0 - 1.0) / 3.0, (-1.0 + 2.0) / 3.0];
        assert!((x[(0, 0)] - inv_b[0]).abs() < 1e-14);
        assert!((x[(1, 0)] - inv_b[1]).abs() < 1e-14);
        assert!((x[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(
            solve_spd(&rect, &Matrix::zeros(2, 1)),
            Err(Error::Dimension(_))
        ));
        let asym = Matrix::from_rows(&[[2.0, 1.0], [0.0, 2.0]]);
        assert!(matches!(
            solve_spd(&asym, &Matrix::zeros(2, 1)),
            Err(Error::NotSymmetric(_))
        ));
        let indefinite = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(
            solve_spd(&indefinite, &Matrix::zeros(2, 1)),
            Err(Error::NotPositiveDefinite(_))
        ));
        assert!(matches!(
            solve_spd(&Matrix::identity(2), &Matrix::zeros(3, 1)),
            Err(Error::Dimension(_))
        ));
    }
}
