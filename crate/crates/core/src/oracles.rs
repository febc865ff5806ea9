//! Closed-form minimizers and population test errors used to check every
//! trainer in the crate.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{
    complete_orthonormal, fro_norm_sq, solve_spd, sym_eig, sym_eig_topk, Mat, Vector,
};

/// Linear ground truth `W*` evaluated on inputs corrupted by
/// `N(0, sigma_eps^2 I)` noise, with `x ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyLinearEval {
    pub w_star: Mat,
    pub sigma_eps: f64,
}

impl NoisyLinearEval {
    pub fn new(w_star: Mat, sigma_eps: f64) -> Result<Self> {
        if !(sigma_eps >= 0.0) {
            return Err(Error::InvalidParam(format!("sigma_eps must be >= 0, got {sigma_eps}")));
        }
        Ok(Self { w_star, sigma_eps })
    }

    pub fn from_beta(beta: &Vector, sigma_eps: f64) -> Result<Self> {
        Self::new(beta.clone().insert_axis(Axis(0)), sigma_eps)
    }
}

/// Minimizer together with the conditioning of the Gram matrix it inverted.
#[derive(Debug, Clone)]
pub struct OracleFit {
    pub w: Mat,
    pub condition_number: f64,
}

fn gram_condition(gram: &Mat, what: &'static str) -> Result<f64> {
    let eig = sym_eig(gram)?;
    let top = eig.values[0].max(0.0);
    let bottom = eig.values[eig.values.len() - 1];
    if !(bottom > 1e-12 * top.max(f64::MIN_POSITIVE)) {
        return Err(Error::Singular {
            what,
            smallest_singular_value: bottom.max(0.0).sqrt(),
        });
    }
    Ok(top / bottom)
}

/// `Y Xe^T (Xe Xe^T)^{-1}` for the oversampled regime `N_s >= d_x`.
pub fn ols_minimizer(ds: &Dataset) -> Result<OracleFit> {
    if ds.n_samples() < ds.d_x() {
        return Err(Error::InvalidParam(format!(
            "ols_minimizer needs N_s >= d_x, got N_s={} d_x={}",
            ds.n_samples(),
            ds.d_x()
        )));
    }
    let gram = ds.xeps.dot(&ds.xeps.t());
    let condition_number = gram_condition(&gram, "Xe Xe^T")?;
    // (Xe Xe^T) W^T = Xe Y^T
    let wt = solve_spd(&gram, &ds.xeps.dot(&ds.y.t()))?;
    Ok(OracleFit {
        w: wt.t().to_owned(),
        condition_number,
    })
}

/// Leading `p` eigenvectors of `Y Y^T`; directions beyond `rank(Y)` are
/// replaced by the canonical Gram–Schmidt completion.
pub fn target_eigenbasis(y: &Mat, p: usize) -> Result<Mat> {
    let yyt = y.dot(&y.t());
    let (vecs, vals) = sym_eig_topk(&yyt, p)?;
    let top = vals[0].max(0.0);
    let rank = vals.iter().filter(|&&v| v > 1e-12 * top.max(f64::MIN_POSITIVE)).count();
    if rank == p {
        return Ok(vecs);
    }
    let kept = vecs.select(Axis(1), &(0..rank).collect::<Vec<_>>());
    complete_orthonormal(&kept, p)
}

/// `U_p U_p^T Y (Xe^T Xe)^{-1} Xe^T`, the minimum-Frobenius-norm global
/// minimizer of the rank-`p` constrained problem when `N_s < d_x`.
pub fn min_norm_minimizer(ds: &Dataset, p: usize) -> Result<OracleFit> {
    if ds.n_samples() >= ds.d_x() {
        return Err(Error::InvalidParam(format!(
            "min_norm_minimizer needs N_s < d_x, got N_s={} d_x={}",
            ds.n_samples(),
            ds.d_x()
        )));
    }
    if p == 0 || p > ds.d_y() {
        return Err(Error::InvalidParam(format!("p must be in 1..={}, got {p}", ds.d_y())));
    }
    let gram = ds.xeps.t().dot(&ds.xeps);
    let condition_number = gram_condition(&gram, "Xe^T Xe")?;
    let up = target_eigenbasis(&ds.y, p)?;
    let projected = up.dot(&up.t()).dot(&ds.y);
    // (Xe^T Xe) Q = projected^T, W = Q^T Xe^T
    let q = solve_spd(&gram, &projected.t().to_owned())?;
    Ok(OracleFit {
        w: q.t().dot(&ds.xeps.t()),
        condition_number,
    })
}

/// `||Y - U_p U_p^T Y||_F^2`, the best achievable training loss at rank `p`.
pub fn eckart_young_loss(y: &Mat, p: usize) -> Result<f64> {
    let up = target_eigenbasis(y, p)?;
    Ok(fro_norm_sq(&(y - &up.dot(&up.t()).dot(y))))
}

/// Exact population error `||W - W*||_F^2 + sigma^2 ||W||_F^2`.
pub fn linear_test_error(w: &Mat, reference: &NoisyLinearEval) -> Result<f64> {
    if w.dim() != reference.w_star.dim() {
        return Err(Error::Shape {
            op: "linear_test_error",
            left: w.dim(),
            right: reference.w_star.dim(),
        });
    }
    let s2 = reference.sigma_eps * reference.sigma_eps;
    Ok(fro_norm_sq(&(w - &reference.w_star)) + s2 * fro_norm_sq(w))
}

/// Vector form of [`linear_test_error`].
pub fn linear_test_error_vec(beta: &Vector, beta_star: &Vector, sigma_eps: f64) -> f64 {
    let diff = beta - beta_star;
    diff.dot(&diff) + sigma_eps * sigma_eps * beta.dot(beta)
}

/// `(beta* / (1 + sigma^2), sigma^2 ||beta*||^2 / (1 + sigma^2))`.
pub fn optimal_noisy_predictor(beta_star: &Vector, sigma_eps: f64) -> (Vector, f64) {
    let s2 = sigma_eps * sigma_eps;
    (
        beta_star / (1.0 + s2),
        s2 * beta_star.dot(beta_star) / (1.0 + s2),
    )
}
