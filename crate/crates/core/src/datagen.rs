//! Synthetic datasets, sparse ground truths and pooled teacher networks.
//!
//! Samples are columns throughout (`d_x x N_s`). Targets are always computed
//! from the clean inputs, never from the noisy ones.

use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::container::{self, Container};
use crate::error::{Error, Result};
use crate::numerics::{gaussian_mat, Mat, SeededRng, Vector};

/// Maps a batch of clean inputs (columns) to targets (columns).
pub trait TargetFn: Sync {
    fn output_dim(&self) -> usize;
    fn eval_batch(&self, x: &Mat) -> Mat;
}

/// `y = W x`.
#[derive(Debug, Clone)]
pub struct LinearTarget(pub Mat);

impl LinearTarget {
    pub fn from_beta(beta: &Vector) -> Self {
        LinearTarget(beta.clone().insert_axis(Axis(0)))
    }
}

impl TargetFn for LinearTarget {
    fn output_dim(&self) -> usize {
        self.0.nrows()
    }
    fn eval_batch(&self, x: &Mat) -> Mat {
        self.0.dot(x)
    }
}

/// Column-wise closure target.
pub struct FnTarget<F> {
    pub d_y: usize,
    pub f: F,
}

impl<F> TargetFn for FnTarget<F>
where
    F: Fn(ArrayView1<'_, f64>) -> Vector + Sync,
{
    fn output_dim(&self) -> usize {
        self.d_y
    }
    fn eval_batch(&self, x: &Mat) -> Mat {
        let mut y = Mat::zeros((self.d_y, x.ncols()));
        for (i, col) in x.columns().into_iter().enumerate() {
            y.column_mut(i).assign(&(self.f)(col));
        }
        y
    }
}

/// Clean inputs, additive noise, noisy inputs and clean-input targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Mat,
    pub z: Mat,
    pub xeps: Mat,
    pub y: Mat,
    pub sigma_eps: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    kind: String,
    d_x: usize,
    d_y: usize,
    n_samples: usize,
    sigma_eps: f64,
    seed: u64,
}

impl Dataset {
    pub fn from_parts(x: Mat, z: Mat, y: Mat, sigma_eps: f64, seed: u64) -> Result<Self> {
        if x.dim() != z.dim() || x.ncols() != y.ncols() {
            return Err(Error::Shape {
                op: "Dataset::from_parts",
                left: x.dim(),
                right: if x.dim() != z.dim() { z.dim() } else { y.dim() },
            });
        }
        if !(sigma_eps >= 0.0) {
            return Err(Error::InvalidParam(format!("sigma_eps must be >= 0, got {sigma_eps}")));
        }
        let xeps = &x + &z;
        Ok(Self {
            x,
            z,
            xeps,
            y,
            sigma_eps,
            seed,
        })
    }

    pub fn d_x(&self) -> usize {
        self.x.nrows()
    }

    pub fn d_y(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    /// Noisy design with samples as rows (`N_s x d_x`).
    pub fn design_rows(&self) -> Mat {
        self.xeps.t().to_owned()
    }

    /// Clean design with samples as rows.
    pub fn clean_rows(&self) -> Mat {
        self.x.t().to_owned()
    }

    /// First `n` samples.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_samples() {
            return Err(Error::InvalidParam(format!(
                "cannot take {n} of {} samples",
                self.n_samples()
            )));
        }
        Self::from_parts(
            self.x.slice(s![.., ..n]).to_owned(),
            self.z.slice(s![.., ..n]).to_owned(),
            self.y.slice(s![.., ..n]).to_owned(),
            self.sigma_eps,
            self.seed,
        )
    }

    /// Same inputs and targets with the noise removed.
    pub fn without_noise(&self) -> Self {
        Self {
            x: self.x.clone(),
            z: Mat::zeros(self.z.dim()),
            xeps: self.x.clone(),
            y: self.y.clone(),
            sigma_eps: 0.0,
            seed: self.seed,
        }
    }

    /// Writes `<stem>.bin` + `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let meta = serde_json::to_value(DatasetMeta {
            kind: "dataset".into(),
            d_x: self.d_x(),
            d_y: self.d_y(),
            n_samples: self.n_samples(),
            sigma_eps: self.sigma_eps,
            seed: self.seed,
        })?;
        container::write(stem, meta, &[("X", &self.x), ("Z", &self.z), ("Y", &self.y)])
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let c: Container = container::read(stem)?;
        let meta: DatasetMeta = serde_json::from_value(c.meta.clone())?;
        if meta.kind != "dataset" {
            return Err(Error::Config(format!("{}: not a dataset container", stem.display())));
        }
        Self::from_parts(c.take("X")?, c.take("Z")?, c.take("Y")?, meta.sigma_eps, meta.seed)
    }
}

/// Gaussian clean inputs `x ~ N(0, I)`, noise `N(0, sigma_eps^2 I)`, and
/// targets `target(x)` evaluated on the clean inputs.
///
/// The clean inputs and the unit noise are drawn from separate forks of `rng`,
/// so datasets sharing a seed but differing in `sigma_eps` share `X` and the
/// noise direction.
pub fn make_regression_dataset(
    rng: &SeededRng,
    d_x: usize,
    n_samples: usize,
    sigma_eps: f64,
    target: &dyn TargetFn,
) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::InvalidParam("N_s must be >= 1".into()));
    }
    if !(sigma_eps >= 0.0) || !sigma_eps.is_finite() {
        return Err(Error::InvalidParam(format!("sigma_eps must be >= 0, got {sigma_eps}")));
    }
    let x = gaussian_mat(&rng.fork_named("clean-inputs"), d_x, n_samples, 1.0)?;
    let z = gaussian_mat(&rng.fork_named("input-noise"), d_x, n_samples, 1.0)? * sigma_eps;
    let y = target.eval_batch(&x);
    if y.ncols() != n_samples || y.nrows() != target.output_dim() {
        return Err(Error::Shape {
            op: "make_regression_dataset: target output",
            left: (target.output_dim(), n_samples),
            right: y.dim(),
        });
    }
    Dataset::from_parts(x, z, y, sigma_eps, rng.seed())
}

/// Sparse linear ground truth with contiguous blocks of `g` support indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGroundTruth {
    pub beta: Vector,
    pub s: usize,
    pub g: usize,
    pub blocks: Vec<Range<usize>>,
}

impl SparseGroundTruth {
    /// Re-partitions the support into blocks of `g` (half-open, 0-based).
    pub fn with_group_size(mut self, g: usize) -> Result<Self> {
        self.blocks = support_blocks(self.s, g)?;
        self.g = g;
        Ok(self)
    }

    pub fn d_x(&self) -> usize {
        self.beta.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `beta` restricted to block `i`, zero elsewhere.
    pub fn block_beta(&self, i: usize) -> Vector {
        let mut b = Vector::zeros(self.beta.len());
        let r = self.blocks[i].clone();
        b.slice_mut(s![r.clone()]).assign(&self.beta.slice(s![r]));
        b
    }

    pub fn norm_sq(&self) -> f64 {
        self.beta.dot(&self.beta)
    }
}

fn support_blocks(s: usize, g: usize) -> Result<Vec<Range<usize>>> {
    if g == 0 || s % g != 0 {
        return Err(Error::InvalidParam(format!("group size {g} must divide s = {s}")));
    }
    Ok((0..s / g).map(|i| i * g..(i + 1) * g).collect())
}

/// `beta` with its first `s` entries equal to `value` (single-index blocks).
pub fn make_sparse_beta(d_x: usize, s: usize, value: f64) -> Result<SparseGroundTruth> {
    if s == 0 || s > d_x {
        return Err(Error::InvalidParam(format!("need 1 <= s <= d_x, got s={s}, d_x={d_x}")));
    }
    let beta = Array1::from_shape_fn(d_x, |j| if j < s { value } else { 0.0 });
    Ok(SparseGroundTruth {
        beta,
        s,
        g: 1,
        blocks: support_blocks(s, 1)?,
    })
}

/// `(m/g) x m` 0/1 matrix summing each consecutive run of `g` neurons.
pub fn pooling_matrix(m: usize, g: usize) -> Result<Mat> {
    if g == 0 || m % g != 0 {
        return Err(Error::InvalidParam(format!("group size {g} must divide m = {m}")));
    }
    let mut p = Mat::zeros((m / g, m));
    for i in 0..m / g {
        p.slice_mut(s![i, i * g..(i + 1) * g]).fill(1.0);
    }
    Ok(p)
}

/// Hidden activation used by a teacher's first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, h: &mut Mat) {
        if self == Activation::Relu {
            h.mapv_inplace(|v| v.max(0.0));
        }
    }
}

/// Teacher computing `W2 P act(W1 x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledTeacher {
    pub w1: Mat,
    pub w2: Mat,
    pub p: Mat,
    pub g: usize,
    pub activation: Activation,
}

impl PooledTeacher {
    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_x(&self) -> usize {
        self.w1.ncols()
    }

    /// `act(W1 x)` for a batch of columns.
    pub fn features(&self, x: &Mat) -> Mat {
        let mut h = self.w1.dot(x);
        self.activation.apply(&mut h);
        h
    }

    /// `P act(W1 x)`.
    pub fn pooled_features(&self, x: &Mat) -> Mat {
        self.p.dot(&self.features(x))
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        self.w2.dot(&self.pooled_features(x))
    }
}

impl TargetFn for PooledTeacher {
    fn output_dim(&self) -> usize {
        self.w2.nrows()
    }
    fn eval_batch(&self, x: &Mat) -> Mat {
        self.forward(x)
    }
}

/// Linear teacher with `[W1]_{ii} = beta_i` (`m = s`), unit second layer and
/// pooling of `g` consecutive neurons, so that `W2 P W1 x = beta^T x`.
pub fn make_diagonal_teacher(gt: &SparseGroundTruth, g: usize) -> Result<PooledTeacher> {
    let s = gt.s;
    if g == 0 || s % g != 0 {
        return Err(Error::InvalidParam(format!("group size {g} must divide s = {s}")));
    }
    let mut w1 = Mat::zeros((s, gt.d_x()));
    for i in 0..s {
        w1[[i, i]] = gt.beta[i];
    }
    Ok(PooledTeacher {
        w1,
        w2: Array2::ones((1, s / g)),
        p: pooling_matrix(s, g)?,
        g,
        activation: Activation::Identity,
    })
}

/// ReLU teacher with Xavier-normal first layer (`N(0, 2/(d_x+m))`) and an
/// all-ones or half `+1` / half `-1` second layer over the `m/g` groups.
pub fn make_relu_teacher(
    rng: &SeededRng,
    d_x: usize,
    m: usize,
    g: usize,
    sign_split: bool,
) -> Result<PooledTeacher> {
    if g == 0 || m % g != 0 {
        return Err(Error::InvalidParam(format!("group size {g} must divide m = {m}")));
    }
    let groups = m / g;
    if sign_split && groups % 2 != 0 {
        return Err(Error::InvalidParam(format!(
            "sign split needs m/g even, got m/g = {groups}"
        )));
    }
    let std = (2.0 / (d_x + m) as f64).sqrt();
    let w1 = gaussian_mat(&rng.fork_named("teacher-w1"), m, d_x, std)?;
    let w2 = Array2::from_shape_fn((1, groups), |(_, i)| {
        if sign_split && i >= groups / 2 {
            -1.0
        } else {
            1.0
        }
    });
    Ok(PooledTeacher {
        w1,
        w2,
        p: pooling_matrix(m, g)?,
        g,
        activation: Activation::Relu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fro_norm, gaussian_vec};
    use ndarray::array;

    #[test]
    fn noiseless_dataset_has_equal_inputs() {
        let t = LinearTarget::from_beta(&array![1.0, 0.0, 0.0]);
        let ds = make_regression_dataset(&SeededRng::new(1), 3, 10, 0.0, &t).unwrap();
        assert_eq!(ds.xeps, ds.x);
        assert_eq!(ds.y.row(0), ds.x.row(0));
    }

    #[test]
    fn targets_ignore_noise() {
        let t = LinearTarget::from_beta(&array![1.0, 2.0]);
        let a = make_regression_dataset(&SeededRng::new(4), 2, 5, 0.0, &t).unwrap();
        let b = make_regression_dataset(&SeededRng::new(4), 2, 5, 0.7, &t).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.x, b.x);
        assert_ne!(a.xeps, b.xeps);
    }

    #[test]
    fn noise_level_matches_sigma() {
        let t = LinearTarget(Mat::zeros((1, 500)));
        let ds = make_regression_dataset(&SeededRng::new(2), 500, 40, 0.5, &t).unwrap();
        // per-column chi-square std is 0.25 * sqrt(2 / 500) ~ 0.016
        for col in ds.z.columns() {
            let r = col.dot(&col) / 500.0;
            assert!((r - 0.25).abs() < 0.07, "{r}");
        }
        let overall = ds.z.iter().map(|v| v * v).sum::<f64>() / (500.0 * 40.0);
        assert!((overall - 0.25).abs() < 0.01, "{overall}");
    }

    #[test]
    fn negative_sigma_rejected() {
        let t = LinearTarget(Mat::zeros((1, 2)));
        assert!(make_regression_dataset(&SeededRng::new(2), 2, 4, -0.1, &t).is_err());
        assert!(make_regression_dataset(&SeededRng::new(2), 2, 0, 0.1, &t).is_err());
    }

    #[test]
    fn sparse_beta_layouts() {
        assert_eq!(make_sparse_beta(4, 2, 1.0).unwrap().beta, array![1.0, 1.0, 0.0, 0.0]);
        let gt = make_sparse_beta(500, 25, 1.0).unwrap();
        assert_eq!(gt.s, 500 / 20);
        assert_eq!(gt.beta.sum(), 25.0);
        assert!(make_sparse_beta(3, 3, 2.0).unwrap().beta.iter().all(|&b| b == 2.0));
        assert!(make_sparse_beta(3, 4, 1.0).is_err());
    }

    #[test]
    fn blocks_partition_support() {
        let gt = make_sparse_beta(10, 6, 1.0).unwrap().with_group_size(3).unwrap();
        assert_eq!(gt.blocks, vec![0..3, 3..6]);
        let total: Vector = (0..gt.n_blocks()).map(|i| gt.block_beta(i)).fold(Vector::zeros(10), |a, b| a + b);
        assert_eq!(total, gt.beta);
        assert!(make_sparse_beta(10, 6, 1.0).unwrap().with_group_size(4).is_err());
    }

    #[test]
    fn diagonal_teacher_figure_case() {
        let beta = array![0.5, -1.0, 2.0, 3.0];
        let gt = SparseGroundTruth {
            beta: beta.clone(),
            s: 4,
            g: 1,
            blocks: support_blocks(4, 1).unwrap(),
        };
        let t = make_diagonal_teacher(&gt, 2).unwrap();
        assert_eq!(t.p, array![[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]);
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let pooled = t.pooled_features(&x);
        assert_eq!(pooled[[0, 0]], 0.5 * 1.0 - 1.0 * 2.0);
        assert_eq!(pooled[[1, 0]], 2.0 * 3.0 + 3.0 * 4.0);
    }

    #[test]
    fn diagonal_teacher_reproduces_beta() {
        let rng = SeededRng::new(3);
        let mut gt = make_sparse_beta(12, 6, 1.0).unwrap();
        gt.beta.slice_mut(s![..6]).assign(&gaussian_vec(&rng.fork(1), 6, 1.0).unwrap());
        for g in [1, 2, 3, 6] {
            let t = make_diagonal_teacher(&gt, g).unwrap();
            let x = gaussian_mat(&rng.fork(2), 12, 20, 1.0).unwrap();
            let direct = gt.beta.dot(&x);
            let via = t.forward(&x).row(0).to_owned();
            assert!((direct - via).iter().all(|d| d.abs() < 1e-12));
        }
        assert!(make_diagonal_teacher(&gt, 4).is_err());
    }

    #[test]
    fn relu_teacher_signs() {
        let r = SeededRng::new(0);
        assert_eq!(make_relu_teacher(&r, 3, 4, 2, true).unwrap().w2, array![[1.0, -1.0]]);
        assert_eq!(make_relu_teacher(&r, 3, 4, 1, true).unwrap().w2, array![[1.0, 1.0, -1.0, -1.0]]);
        assert!(make_relu_teacher(&r, 3, 4, 4, true).is_err());
        assert!(make_relu_teacher(&r, 3, 4, 3, false).is_err());
    }

    #[test]
    fn relu_teacher_function_invariant_to_g() {
        let r = SeededRng::new(9);
        let x = gaussian_mat(&r.fork(7), 6, 100, 1.0).unwrap();
        let base = make_relu_teacher(&r, 6, 24, 1, false).unwrap().forward(&x);
        for g in [2, 3, 4, 6, 8, 12, 24] {
            let t = make_relu_teacher(&r, 6, 24, g, false).unwrap();
            assert!(fro_norm(&(t.forward(&x) - &base)) < 1e-10);
        }
        let split = make_relu_teacher(&r, 6, 24, 1, true).unwrap().forward(&x);
        for g in [2, 3, 4, 6, 12] {
            let t = make_relu_teacher(&r, 6, 24, g, true).unwrap();
            assert!((t.forward(&x) - &split).iter().all(|d| d.abs() < 1e-10));
        }
    }

    #[test]
    fn pooling_gram_is_scaled_identity() {
        for (m, g) in [(4, 2), (12, 3), (8, 8), (5, 1)] {
            let p = pooling_matrix(m, g).unwrap();
            let ppt = p.dot(&p.t());
            assert_eq!(ppt, Mat::eye(m / g) * g as f64);
        }
    }

    #[test]
    fn dataset_container_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = LinearTarget::from_beta(&array![1.0, -1.0, 0.5]);
        let ds = make_regression_dataset(&SeededRng::new(21), 3, 7, 0.3, &t).unwrap();
        let stem = dir.path().join("ds");
        ds.save(&stem).unwrap();
        assert_eq!(Dataset::load(&stem).unwrap(), ds);
    }
}
