//! Small dense linear-algebra helpers shared by the model and theory code.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Smallest singular value.
pub fn min_singular_value(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Minimum-norm least-squares solution of `m x = rhs`.
pub fn pseudo_solve(m: &Matrix, rhs: &Vector) -> Vector {
    let svd = m.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    svd.solve(rhs, tol)
        .unwrap_or_else(|_| Vector::zeros(m.ncols()))
}

pub(crate) fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_of_diagonal() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, -0.5, 2.0]));
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-12);
        assert!((min_singular_value(&m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pseudo_solve_singular_picks_min_norm() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let x = pseudo_solve(&m, &Vector::from_vec(vec![2.0, 2.0]));
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }
}
