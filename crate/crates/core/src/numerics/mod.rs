//! Dense linear-algebra kernel shared by every other module.
//!
//! Matrices are plain `ndarray` arrays; the routines here add the
//! factorizations the laboratory needs (symmetric Jacobi eigensolver,
//! one-sided Jacobi SVD, Cholesky) together with deterministic samplers.

mod linalg;
mod rng;

pub use linalg::{
    cholesky, complete_orthonormal, least_squares_min_norm, orthonormal_col_basis,
    power_iteration_max_eig, solve_spd, svd_thin, sym_eig, sym_eig_topk, Svd, SymEig,
};
pub use rng::SeededRng;

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Dense real matrix. Samples are stored as columns unless stated otherwise.
pub type Mat = Array2<f64>;
/// Dense real vector.
pub type Vector = Array1<f64>;

/// Default absolute tolerance for unit-scale data.
pub const DEFAULT_TOL: f64 = 1e-8;

/// iid `N(0, std^2)` entries, filled in row-major order from `rng`.
pub fn gaussian_mat(rng: &SeededRng, rows: usize, cols: usize, std: f64) -> Result<Mat> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::InvalidParam(format!("standard deviation must be >= 0, got {std}")));
    }
    let mut g = rng.generator();
    Ok(Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(&mut g);
        std * z
    }))
}

pub fn gaussian_vec(rng: &SeededRng, len: usize, std: f64) -> Result<Vector> {
    Ok(gaussian_mat(rng, 1, len, std)?.row(0).to_owned())
}

pub fn fro_norm_sq(m: &Mat) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn fro_norm(m: &Mat) -> f64 {
    fro_norm_sq(m).sqrt()
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn ensure_finite(m: &Mat, op: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

/// Checks `a * b` is defined.
pub fn check_mul(op: &'static str, a: &Mat, b: &Mat) -> Result<()> {
    if a.ncols() != b.nrows() {
        return Err(Error::Shape {
            op,
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

pub fn check_same(op: &'static str, a: &Mat, b: &Mat) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            op,
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// Largest singular value, via power iteration on `m^T m`.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = if m.nrows() < m.ncols() {
        m.dot(&m.t())
    } else {
        m.t().dot(m)
    };
    power_iteration_max_eig(&gram, 500, 1e-12).max(0.0).sqrt()
}

/// Projects the rows of `w` onto the orthogonal complement of `col(x)`.
pub fn project_rows_off_col_space(w: &Mat, x: &Mat) -> Mat {
    let q = orthonormal_col_basis(x, 1e-10);
    if q.ncols() == 0 {
        return w.clone();
    }
    w - &w.dot(&q).dot(&q.t())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_zero_std_is_zero() {
        let m = gaussian_mat(&SeededRng::new(3), 4, 5, 0.0).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_moments() {
        let m = gaussian_mat(&SeededRng::new(11), 100, 1000, 1.0).unwrap();
        let n = m.len() as f64;
        let mean = m.sum() / n;
        let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn gaussian_is_bit_identical_per_seed() {
        let r = SeededRng::with_stream(42, 9);
        let a = gaussian_mat(&r, 7, 3, 0.5).unwrap();
        let b = gaussian_mat(&r, 7, 3, 0.5).unwrap();
        let ab: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
        assert_eq!(ab, bb);
        assert!(gaussian_mat(&r, 1, 1, -1.0).is_err());
    }

    #[test]
    fn spectral_norm_of_diag() {
        let m = Mat::from_diag(&ndarray::arr1(&[3.0, -5.0, 1.0]));
        assert!((spectral_norm(&m) - 5.0).abs() < 1e-9);
    }
}
