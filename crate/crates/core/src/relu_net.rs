//! Shallow ReLU students `W2 sigma(W1 x)`, optionally with a fixed pooled
//! second layer `W~2 P`, trained by (mini-batch) gradient descent with
//! snapshot selection on a held-out evaluation set.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{s, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::datagen::{make_regression_dataset, Activation, Dataset, PooledTeacher, TargetFn};
use crate::error::{Error, Result};
use crate::numerics::{check_mul, fro_norm_sq, gaussian_mat, Mat, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trainable {
    Both,
    W1Only,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowReluNet {
    pub w1: Mat,
    /// `d_y x m`, or `d_y x (m/g)` when pooled.
    pub w2: Mat,
    /// Group size `g` of the pooling `P`; `None` means no pooling.
    pub pool: Option<usize>,
    pub trainable: Trainable,
}

/// Sums each run of `g` consecutive rows (left-multiplication by `P`).
pub fn pool_rows(h: &Mat, g: usize) -> Mat {
    let groups = h.nrows() / g;
    let mut out = Mat::zeros((groups, h.ncols()));
    for i in 0..groups {
        out.row_mut(i).assign(&h.slice(s![i * g..(i + 1) * g, ..]).sum_axis(Axis(0)));
    }
    out
}

/// Repeats each row `g` times (left-multiplication by `P^T`).
pub fn unpool_rows(h: &Mat, g: usize) -> Mat {
    let mut out = Mat::zeros((h.nrows() * g, h.ncols()));
    for (i, row) in h.rows().into_iter().enumerate() {
        for k in 0..g {
            out.row_mut(i * g + k).assign(&row);
        }
    }
    out
}

fn relu(h: &Mat) -> Mat {
    h.mapv(|v| v.max(0.0))
}

impl ShallowReluNet {
    pub fn new(w1: Mat, w2: Mat) -> Result<Self> {
        check_mul("ShallowReluNet::new", &w2, &w1)?;
        Ok(Self {
            w1,
            w2,
            pool: None,
            trainable: Trainable::Both,
        })
    }

    /// Student with fixed second layer `w2` over `m/g` groups; only `W1`
    /// is trained.
    pub fn pooled(w1: Mat, w2: Mat, g: usize) -> Result<Self> {
        let m = w1.nrows();
        if g == 0 || m % g != 0 {
            return Err(Error::InvalidParam(format!("group size {g} must divide m = {m}")));
        }
        if w2.ncols() != m / g {
            return Err(Error::Shape {
                op: "ShallowReluNet::pooled",
                left: w2.dim(),
                right: (m / g, w1.ncols()),
            });
        }
        Ok(Self {
            w1,
            w2,
            pool: Some(g),
            trainable: Trainable::W1Only,
        })
    }

    /// Xavier-normal layers: entries `N(0, 2 / (fan_in + fan_out))`.
    pub fn xavier(rng: &SeededRng, d_x: usize, m: usize, d_y: usize) -> Result<Self> {
        let w1 = gaussian_mat(&rng.fork_named("w1"), m, d_x, (2.0 / (d_x + m) as f64).sqrt())?;
        let w2 = gaussian_mat(&rng.fork_named("w2"), d_y, m, (2.0 / (d_y + m) as f64).sqrt())?;
        Self::new(w1, w2)
    }

    /// The ReLU teacher as a pooled network; its `W1` is the student's target
    /// feature map.
    pub fn from_teacher(t: &PooledTeacher) -> Result<Self> {
        if t.activation != Activation::Relu {
            return Err(Error::InvalidParam("teacher must use ReLU activations".into()));
        }
        Self::pooled(t.w1.clone(), t.w2.clone(), t.g)
    }

    pub fn d_x(&self) -> usize {
        self.w1.ncols()
    }

    pub fn m(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_y(&self) -> usize {
        self.w2.nrows()
    }

    /// `sigma(W1 x)` (`m x N`).
    pub fn hidden(&self, x: &Mat) -> Mat {
        relu(&self.w1.dot(x))
    }

    fn readout(&self, a: &Mat) -> Mat {
        match self.pool {
            Some(g) => self.w2.dot(&pool_rows(a, g)),
            None => self.w2.dot(a),
        }
    }

    /// Second layer acting on unpooled features, `W2 P` in pooled mode.
    pub fn expanded_w2(&self) -> Mat {
        match self.pool {
            Some(g) => unpool_rows(&self.w2.t().to_owned(), g).t().to_owned(),
            None => self.w2.clone(),
        }
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "shallow-relu",
            "pool": self.pool,
            "trainable": self.trainable,
        });
        container::write(stem, meta, &[("W1", &self.w1), ("W2", &self.w2)])
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let c = container::read(stem)?;
        if c.meta.get("kind").and_then(|k| k.as_str()) != Some("shallow-relu") {
            return Err(Error::Config(format!("{}: not a shallow-relu container", stem.display())));
        }
        let w1 = c.take("W1")?;
        let w2 = c.take("W2")?;
        match c.meta.get("pool").and_then(|g| g.as_u64()) {
            Some(g) => Self::pooled(w1, w2, g as usize),
            None => Self::new(w1, w2),
        }
    }
}

impl TargetFn for ShallowReluNet {
    fn output_dim(&self) -> usize {
        self.d_y()
    }
    fn eval_batch(&self, x: &Mat) -> Mat {
        relu_forward(self, x).expect("shapes checked at construction")
    }
}

/// `W2 sigma(W1 x)`, or `W~2 P sigma(W1 x)` in pooled mode.
pub fn relu_forward(net: &ShallowReluNet, x: &Mat) -> Result<Mat> {
    if x.nrows() != net.d_x() {
        return Err(Error::Shape {
            op: "relu_forward",
            left: net.w1.dim(),
            right: x.dim(),
        });
    }
    Ok(net.readout(&net.hidden(x)))
}

fn check_pair(net: &ShallowReluNet, teacher: &ShallowReluNet) -> Result<()> {
    if net.w1.dim() != teacher.w1.dim() {
        return Err(Error::Shape {
            op: "student vs teacher first layer",
            left: net.w1.dim(),
            right: teacher.w1.dim(),
        });
    }
    Ok(())
}

fn check_ds(net: &ShallowReluNet, ds: &Dataset) -> Result<()> {
    if ds.d_x() != net.d_x() || ds.d_y() != net.d_y() {
        return Err(Error::Shape {
            op: "network vs dataset",
            left: (net.d_y(), net.d_x()),
            right: (ds.d_y(), ds.d_x()),
        });
    }
    Ok(())
}

/// `sum_i ||f(x_i + eps_i) - y_i||^2`.
pub fn base_loss(net: &ShallowReluNet, ds: &Dataset) -> Result<f64> {
    check_ds(net, ds)?;
    Ok(fro_norm_sq(&(relu_forward(net, &ds.xeps)? - &ds.y)))
}

/// Base loss plus `lambda sum_i ||sigma(W1 (x_i + eps_i)) - sigma(W~1 x_i)||^2`.
pub fn feature_st_loss(net: &ShallowReluNet, teacher: &ShallowReluNet, ds: &Dataset, lambda: f64) -> Result<f64> {
    check_pair(net, teacher)?;
    let feat = fro_norm_sq(&(net.hidden(&ds.xeps) - teacher.hidden(&ds.x)));
    Ok(base_loss(net, ds)? + lambda * feat)
}

/// `sum_i ||P [sigma(W1 (x_i + eps_i)) - sigma(W~1 x_i)]||^2`; no target term.
pub fn simplified_st_loss(net: &ShallowReluNet, teacher: &ShallowReluNet, ds: &Dataset) -> Result<f64> {
    check_pair(net, teacher)?;
    let g = group_size(net, teacher)?;
    let diff = net.hidden(&ds.xeps) - teacher.hidden(&ds.x);
    Ok(fro_norm_sq(&pool_rows(&diff, g)))
}

fn group_size(net: &ShallowReluNet, teacher: &ShallowReluNet) -> Result<usize> {
    let g = net.pool.unwrap_or(1);
    let tg = teacher.pool.unwrap_or(1);
    if g != tg {
        return Err(Error::InvalidParam(format!("student pools g = {g} but teacher pools g = {tg}")));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReluLoss {
    Base,
    FeatureSt { lambda: f64 },
    SimplifiedSt,
}

/// Gradients of a sum loss; `w2` is `None` when the second layer is fixed.
#[derive(Debug, Clone)]
pub struct ReluGrads {
    pub w1: Mat,
    pub w2: Option<Mat>,
}

/// Loss value and gradients on the columns of `xeps`, `x`, `y`;
/// `teacher_feats` is `sigma(W~1 x)` when the loss needs it. The ReLU
/// derivative at 0 is taken as 0.
fn loss_and_grads(
    net: &ShallowReluNet,
    xeps: &Mat,
    y: &Mat,
    teacher_feats: Option<&Mat>,
    loss: ReluLoss,
) -> (f64, ReluGrads) {
    let h = net.w1.dot(xeps);
    let a = relu(&h);
    let mut value = 0.0;
    let mut d_a = Mat::zeros(a.dim());
    let mut d_w2 = None;
    if !matches!(loss, ReluLoss::SimplifiedSt) {
        let r = net.readout(&a) - y;
        value += fro_norm_sq(&r);
        d_a = net.expanded_w2().t().dot(&r) * 2.0;
        if net.trainable == Trainable::Both {
            let feats = match net.pool {
                Some(g) => pool_rows(&a, g),
                None => a.clone(),
            };
            d_w2 = Some(r.dot(&feats.t()) * 2.0);
        }
    }
    match (loss, teacher_feats) {
        (ReluLoss::FeatureSt { lambda }, Some(t)) => {
            let diff = &a - t;
            value += lambda * fro_norm_sq(&diff);
            d_a.scaled_add(2.0 * lambda, &diff);
        }
        (ReluLoss::SimplifiedSt, Some(t)) => {
            let g = net.pool.unwrap_or(1);
            let pooled = pool_rows(&(&a - t), g);
            value += fro_norm_sq(&pooled);
            d_a += &(unpool_rows(&pooled, g) * 2.0);
        }
        _ => {}
    }
    let mut d_h = d_a;
    ndarray::Zip::from(&mut d_h).and(&h).for_each(|d, &hv| {
        if hv <= 0.0 {
            *d = 0.0;
        }
    });
    (
        value,
        ReluGrads {
            w1: d_h.dot(&xeps.t()),
            w2: d_w2,
        },
    )
}

/// Analytic gradient of the chosen sum loss on the full dataset.
pub fn grads(net: &ShallowReluNet, teacher: Option<&ShallowReluNet>, ds: &Dataset, loss: ReluLoss) -> Result<ReluGrads> {
    check_ds(net, ds)?;
    let feats = teacher_features(net, teacher, ds, loss)?;
    Ok(loss_and_grads(net, &ds.xeps, &ds.y, feats.as_ref(), loss).1)
}

fn teacher_features(
    net: &ShallowReluNet,
    teacher: Option<&ShallowReluNet>,
    ds: &Dataset,
    loss: ReluLoss,
) -> Result<Option<Mat>> {
    match (loss, teacher) {
        (ReluLoss::Base, _) => Ok(None),
        (_, None) => Err(Error::InvalidParam("student-teacher loss needs a teacher".into())),
        (l, Some(t)) => {
            check_pair(net, t)?;
            if matches!(l, ReluLoss::SimplifiedSt) {
                if net.pool.is_none() {
                    return Err(Error::InvalidParam("simplified loss needs a pooled student".into()));
                }
                group_size(net, t)?;
            }
            Ok(Some(t.hidden(&ds.x)))
        }
    }
}

/// Fixed inputs `x + eps` with ground-truth outputs `f*(x)`.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub xeps: Mat,
    pub target: Mat,
}

impl EvalSet {
    pub fn new(truth: &dyn TargetFn, d_x: usize, sigma_eps: f64, n_samples: usize, rng: &SeededRng) -> Result<Self> {
        let ds = make_regression_dataset(rng, d_x, n_samples, sigma_eps, truth)?;
        Ok(Self {
            xeps: ds.xeps,
            target: ds.y,
        })
    }

    pub fn len(&self) -> usize {
        self.xeps.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean squared prediction gap and its standard error.
    pub fn error(&self, net: &ShallowReluNet) -> Result<(f64, f64)> {
        let pred = relu_forward(net, &self.xeps)?;
        let per: Vec<f64> = (pred - &self.target)
            .columns()
            .into_iter()
            .map(|c| c.dot(&c))
            .collect();
        let n = per.len() as f64;
        let mean = per.iter().sum::<f64>() / n;
        let var = if per.len() > 1 {
            per.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok((mean, (var / n).sqrt()))
    }
}

/// Monte Carlo estimate of `E ||f(x + eps) - f*(x)||^2` with its standard
/// error, on `n_samples` fresh draws determined by `seed`.
pub fn mc_test_error(
    net: &ShallowReluNet,
    truth: &dyn TargetFn,
    sigma_eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    EvalSet::new(truth, net.d_x(), sigma_eps, n_samples, &SeededRng::new(seed).fork_named("mc-eval"))?.error(net)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Batch {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluTrainConfig {
    /// Step size for the gradient of the per-sample mean loss.
    pub lr: f64,
    pub epochs: usize,
    pub batch: Batch,
    /// Evaluation cadence in optimizer steps.
    pub eval_every: usize,
    pub seed: u64,
}

impl ReluTrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidParam(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParam("eval_every must be >= 1".into()));
        }
        if self.batch == Batch::Size(0) {
            return Err(Error::InvalidParam("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReluRecord {
    pub step: usize,
    pub train_loss: f64,
    pub eval_error: f64,
    pub eval_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct ReluOutcome {
    pub best: ShallowReluNet,
    pub best_step: usize,
    pub best_error: f64,
    pub final_net: ShallowReluNet,
    pub final_error: f64,
    pub trace: Vec<ReluRecord>,
}

pub fn write_trace_csv(trace: &[ReluRecord], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    for r in trace {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Gradient descent on `loss`, scoring the network on `monitor` every
/// `cfg.eval_every` steps and at the end; the lowest-scoring snapshot is
/// returned as `best`.
pub fn train_relu(
    net: &ShallowReluNet,
    teacher: Option<&ShallowReluNet>,
    ds: &Dataset,
    cfg: &ReluTrainConfig,
    loss: ReluLoss,
    monitor: &EvalSet,
) -> Result<ReluOutcome> {
    cfg.validate()?;
    check_ds(net, ds)?;
    let feats = teacher_features(net, teacher, ds, loss)?;
    let n = ds.n_samples();
    let batch = match cfg.batch {
        Batch::Full => n,
        Batch::Size(b) => b.min(n),
    };
    let steps_per_epoch = n.div_ceil(batch);
    let total = cfg.epochs * steps_per_epoch;
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle = SeededRng::new(cfg.seed).fork_named("minibatch").generator();

    let full_loss = |m: &ShallowReluNet| loss_and_grads(m, &ds.xeps, &ds.y, feats.as_ref(), loss).0;
    let mut cur = net.clone();
    let initial = full_loss(&cur);
    let limit = 1e6 * initial.max(f64::MIN_POSITIVE);
    let (e0, s0) = monitor.error(&cur)?;
    let mut trace = vec![ReluRecord {
        step: 0,
        train_loss: initial,
        eval_error: e0,
        eval_stderr: s0,
    }];
    let mut best = (cur.clone(), 0, e0);

    let mut step = 0;
    for _ in 0..cfg.epochs {
        if batch < n {
            order.shuffle(&mut shuffle);
        }
        for chunk in order.chunks(batch) {
            let (value, g) = if batch == n {
                loss_and_grads(&cur, &ds.xeps, &ds.y, feats.as_ref(), loss)
            } else {
                let xb = ds.xeps.select(Axis(1), chunk);
                let yb = ds.y.select(Axis(1), chunk);
                let fb = feats.as_ref().map(|f| f.select(Axis(1), chunk));
                loss_and_grads(&cur, &xb, &yb, fb.as_ref(), loss)
            };
            if !value.is_finite() || (batch == n && value > limit) {
                return Err(Error::Divergence {
                    step,
                    loss: value,
                    reason: "loss exceeded 1e6 x its initial value",
                });
            }
            let scale = cfg.lr / chunk.len() as f64;
            cur.w1.scaled_add(-scale, &g.w1);
            if let Some(g2) = &g.w2 {
                cur.w2.scaled_add(-scale, g2);
            }
            step += 1;
            if step % cfg.eval_every == 0 || step == total {
                let train_loss = full_loss(&cur);
                if !train_loss.is_finite() || train_loss > limit {
                    return Err(Error::Divergence {
                        step,
                        loss: train_loss,
                        reason: "loss exceeded 1e6 x its initial value",
                    });
                }
                let (e, se) = monitor.error(&cur)?;
                trace.push(ReluRecord {
                    step,
                    train_loss,
                    eval_error: e,
                    eval_stderr: se,
                });
                if e < best.2 {
                    best = (cur.clone(), step, e);
                }
            }
        }
    }
    let final_error = trace.last().unwrap().eval_error;
    Ok(ReluOutcome {
        best: best.0,
        best_step: best.1,
        best_error: best.2,
        final_net: cur,
        final_error,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_relu_teacher, pooling_matrix, LinearTarget};
    use crate::numerics::fro_norm;
    use ndarray::array;

    #[test]
    fn zero_input_gives_zero_output() {
        let net = ShallowReluNet::xavier(&SeededRng::new(1), 3, 5, 2).unwrap();
        assert_eq!(relu_forward(&net, &Mat::zeros((3, 4))).unwrap(), Mat::zeros((2, 4)));
    }

    #[test]
    fn identity_first_layer_sums_positive_inputs() {
        let net = ShallowReluNet::new(Mat::eye(3), array![[1.0, 1.0, 1.0]]).unwrap();
        let x = array![[1.0], [2.0], [0.5]];
        assert_eq!(relu_forward(&net, &x).unwrap()[[0, 0]], 3.5);
        assert!(relu_forward(&net, &Mat::zeros((2, 1))).is_err());
    }

    #[test]
    fn pooled_matches_expanded_second_layer() {
        let rng = SeededRng::new(2);
        let w1 = gaussian_mat(&rng.fork(1), 4, 3, 1.0).unwrap();
        let pooled = ShallowReluNet::pooled(w1.clone(), array![[1.0, -2.0]], 2).unwrap();
        let plain = ShallowReluNet::new(w1, array![[1.0, 1.0, -2.0, -2.0]]).unwrap();
        let x = gaussian_mat(&rng.fork(2), 3, 100, 1.0).unwrap();
        let a = relu_forward(&pooled, &x).unwrap();
        let b = relu_forward(&plain, &x).unwrap();
        assert!(fro_norm(&(a - b)) < 1e-12);
        assert_eq!(pooled.expanded_w2(), plain.w2);
    }

    #[test]
    fn pool_helpers_match_pooling_matrix() {
        let h = gaussian_mat(&SeededRng::new(3), 6, 4, 1.0).unwrap();
        let p = pooling_matrix(6, 3).unwrap();
        assert!(fro_norm(&(pool_rows(&h, 3) - p.dot(&h))) < 1e-14);
        let q = gaussian_mat(&SeededRng::new(4), 2, 4, 1.0).unwrap();
        assert!(fro_norm(&(unpool_rows(&q, 3) - p.t().dot(&q))) < 1e-14);
    }

    fn scalar_ds(x: f64, eps: f64, y: f64) -> Dataset {
        Dataset::from_parts(array![[x]], array![[eps]], array![[y]], eps.abs(), 0).unwrap()
    }

    #[test]
    fn feature_loss_hand_case() {
        let student = ShallowReluNet::new(array![[1.0]], array![[1.0]]).unwrap();
        let teacher = student.clone();
        let ds = scalar_ds(1.0, -2.0, 0.0);
        // base: sigma(-1) = 0 vs y = 0; feature: (sigma(-1) - sigma(1))^2 = 1
        assert_eq!(base_loss(&student, &ds).unwrap(), 0.0);
        assert_eq!(feature_st_loss(&student, &teacher, &ds, 1.0).unwrap(), 1.0);
        assert_eq!(feature_st_loss(&student, &teacher, &ds, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn simplified_loss_hand_case() {
        // d_x = 4, m = 4, g = 2, teacher W1 = I, student W1 = 2 I
        let teacher = ShallowReluNet::pooled(Mat::eye(4), array![[1.0, 1.0]], 2).unwrap();
        let student = ShallowReluNet::pooled(Mat::eye(4) * 2.0, array![[1.0, 1.0]], 2).unwrap();
        let x = array![[1.0], [2.0], [-1.0], [3.0]];
        let ds = Dataset::from_parts(x.clone(), Mat::zeros((4, 1)), teacher.eval_batch(&x), 0.0, 0).unwrap();
        // pooled residuals: (2+4)-(1+2) = 3 and (0+6)-(0+3) = 3
        assert_eq!(simplified_st_loss(&student, &teacher, &ds).unwrap(), 18.0);
        assert_eq!(simplified_st_loss(&teacher, &teacher, &ds).unwrap(), 0.0);
        let other = ShallowReluNet::pooled(Mat::eye(4), array![[1.0]], 4).unwrap();
        assert!(simplified_st_loss(&student, &other, &ds).is_err());
        // g = m: one pooled difference
        let t4 = ShallowReluNet::pooled(Mat::eye(4), array![[1.0]], 4).unwrap();
        let s4 = ShallowReluNet::pooled(Mat::eye(4) * 2.0, array![[1.0]], 4).unwrap();
        assert_eq!(simplified_st_loss(&s4, &t4, &ds).unwrap(), 36.0);
    }

    #[test]
    fn mc_error_zero_for_ground_truth() {
        let t = ShallowReluNet::xavier(&SeededRng::new(5), 4, 8, 1).unwrap();
        let (e, se) = mc_test_error(&t, &t, 0.0, 1000, 1).unwrap();
        assert!(e < 1e-24 && se < 1e-24);
    }

    #[test]
    fn mc_error_matches_linear_formula_when_relu_is_always_active() {
        // inputs shifted far positive keep both identity units active, so the
        // network is the linear map w2 on x + shift
        let net = ShallowReluNet::new(Mat::eye(2), array![[0.5, -1.0]]).unwrap();
        let star = array![[1.0, -1.0]];
        let shift = 50.0;
        let clean = make_regression_dataset(&SeededRng::new(6), 2, 100_000, 0.3, &LinearTarget(star.clone())).unwrap();
        let ev = EvalSet {
            xeps: clean.xeps.mapv(|v| v + shift),
            target: star.dot(&clean.x.mapv(|v| v + shift)),
        };
        let (e, se) = ev.error(&net).unwrap();
        let diff = &net.w2 - &star;
        let bias = diff.sum() * shift;
        let exact = fro_norm_sq(&diff) + 0.09 * fro_norm_sq(&net.w2) + bias * bias;
        assert!((e - exact).abs() < 4.0 * se, "{e} vs {exact} (se {se})");
    }

    #[test]
    fn mc_error_seeds_agree_statistically() {
        let rng = SeededRng::new(7);
        let t = ShallowReluNet::xavier(&rng.fork(1), 5, 20, 1).unwrap();
        let s = ShallowReluNet::xavier(&rng.fork(2), 5, 20, 1).unwrap();
        let (a, sa) = mc_test_error(&s, &t, 0.5, 5000, 1).unwrap();
        let (b, sb) = mc_test_error(&s, &t, 0.5, 5000, 2).unwrap();
        assert_ne!(a, b);
        assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt());
        assert_eq!(mc_test_error(&s, &t, 0.5, 5000, 1).unwrap().0, a);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let rng = SeededRng::new(8);
        let t = ShallowReluNet::xavier(&rng.fork(1), 3, 6, 1).unwrap();
        let s = ShallowReluNet::xavier(&rng.fork(2), 3, 6, 1).unwrap();
        let ds = make_regression_dataset(&rng, 3, 10, 0.2, &t).unwrap();
        let ev = EvalSet::new(&t, 3, 0.2, 1000, &rng.fork(3)).unwrap();
        let cfg = ReluTrainConfig { lr: 0.1, epochs: 0, batch: Batch::Full, eval_every: 1, seed: 0 };
        let out = train_relu(&s, Some(&t), &ds, &cfg, ReluLoss::FeatureSt { lambda: 1.0 }, &ev).unwrap();
        assert_eq!(out.best, s);
        assert_eq!(out.final_net, s);
        assert_eq!(out.best_error, out.final_error);
    }

    #[test]
    fn pooled_training_keeps_second_layer() {
        let rng = SeededRng::new(9);
        let teacher = ShallowReluNet::from_teacher(&make_relu_teacher(&rng.fork(1), 6, 8, 2, true).unwrap()).unwrap();
        let init = gaussian_mat(&rng.fork(2), 8, 6, 0.3).unwrap();
        let student = ShallowReluNet::pooled(init, teacher.w2.clone(), 2).unwrap();
        let ds = make_regression_dataset(&rng, 6, 30, 0.3, &teacher).unwrap();
        let ev = EvalSet::new(&teacher, 6, 0.3, 1000, &rng.fork(3)).unwrap();
        let cfg = ReluTrainConfig { lr: 0.05, epochs: 20, batch: Batch::Size(8), eval_every: 5, seed: 1 };
        let out = train_relu(&student, Some(&teacher), &ds, &cfg, ReluLoss::SimplifiedSt, &ev).unwrap();
        assert_eq!(out.final_net.w2, teacher.w2);
        assert_ne!(out.final_net.w1, student.w1);
        assert!(out.best_error <= out.trace[0].eval_error);
    }

    #[test]
    fn simplified_loss_requires_pooled_student() {
        let rng = SeededRng::new(10);
        let t = ShallowReluNet::xavier(&rng.fork(1), 3, 4, 1).unwrap();
        let ds = make_regression_dataset(&rng, 3, 5, 0.1, &t).unwrap();
        assert!(grads(&t, Some(&t), &ds, ReluLoss::SimplifiedSt).is_err());
        assert!(grads(&t, None, &ds, ReluLoss::FeatureSt { lambda: 1.0 }).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let rng = SeededRng::new(11);
        let t = ShallowReluNet::xavier(&rng.fork(1), 4, 16, 1).unwrap();
        let s = ShallowReluNet::xavier(&rng.fork(2), 4, 16, 1).unwrap();
        let ds = make_regression_dataset(&rng, 4, 20, 0.1, &t).unwrap();
        let ev = EvalSet::new(&t, 4, 0.1, 1000, &rng.fork(3)).unwrap();
        let cfg = ReluTrainConfig { lr: 500.0, epochs: 200, batch: Batch::Full, eval_every: 10, seed: 0 };
        assert!(matches!(
            train_relu(&s, Some(&t), &ds, &cfg, ReluLoss::FeatureSt { lambda: 10.0 }, &ev),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn container_roundtrip_keeps_pooling() {
        let dir = tempfile::tempdir().unwrap();
        let net = ShallowReluNet::pooled(Mat::eye(4), array![[1.0, -1.0]], 2).unwrap();
        let stem = dir.path().join("relu");
        net.save(&stem).unwrap();
        assert_eq!(ShallowReluNet::load(&stem).unwrap(), net);
    }
}
