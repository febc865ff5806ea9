//! Oracle early stopping for wide shallow ReLU students: best-snapshot
//! student-teacher error against its end-of-training value and against the
//! early-stopped base student.

use serde::{Deserialize, Serialize};

use super::{mean, require_nonempty, Axes, ExperimentId, Figure, Series, SweepResult, Table};
use crate::datagen::make_regression_dataset;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;
use crate::par;
use crate::relu_net::{train_relu, Batch, EvalSet, ReluLoss, ReluTrainConfig, ShallowReluNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStoppingConfig {
    pub d_x: usize,
    pub m: usize,
    pub sigma_eps: f64,
    pub n_s: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub lr: f64,
    pub epochs: usize,
    /// Minibatch size; 0 means full batch.
    pub batch_size: usize,
    pub eval_every: usize,
    pub eval_samples: usize,
    /// Both layers of the student are trained when true; otherwise `W2` stays
    /// at its initial value.
    pub train_second_layer: bool,
    pub seeds: Vec<u64>,
}

impl Default for EarlyStoppingConfig {
    fn default() -> Self {
        Self {
            d_x: 50,
            m: 2000,
            sigma_eps: 0.5,
            n_s: vec![8, 16, 32, 64, 128],
            lambdas: vec![0.1, 1.0, 10.0],
            lr: 0.02,
            epochs: 2000,
            batch_size: 0,
            eval_every: 20,
            eval_samples: 1000,
            train_second_layer: true,
            seeds: vec![1],
        }
    }
}

impl EarlyStoppingConfig {
    fn validate(&self) -> Result<()> {
        require_nonempty("n_s", &self.n_s)?;
        require_nonempty("lambdas", &self.lambdas)?;
        require_nonempty("seeds", &self.seeds)?;
        if self.d_x == 0 || self.m == 0 || self.eval_samples == 0 {
            return Err(Error::Config("d_x, m and eval_samples must be positive".into()));
        }
        Ok(())
    }
}

/// `lambda == None` is the base student.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EarlyStoppingRun {
    pub seed: u64,
    pub n_s: usize,
    pub lambda: Option<f64>,
    pub best_error: f64,
    pub best_step: usize,
    pub final_error: f64,
}

/// Seed-averaged errors at one sample size. The student-teacher columns use
/// the `lambda` with the lowest seed-averaged early-stopped error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EarlyStoppingRow {
    pub n_s: usize,
    pub best_lambda: f64,
    pub st_best: f64,
    pub st_final: f64,
    pub base_best: f64,
    pub base_final: f64,
}

impl EarlyStoppingRow {
    /// Early-stopped student-teacher error beats both its end-of-training
    /// value and the early-stopped base student.
    pub fn ordering_holds(&self) -> bool {
        self.st_best < self.st_final && self.st_best < self.base_best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EarlyStoppingResult {
    pub rows: Vec<EarlyStoppingRow>,
    pub runs: Vec<EarlyStoppingRun>,
}

pub fn run_early_stopping(cfg: &EarlyStoppingConfig) -> Result<EarlyStoppingResult> {
    cfg.validate()?;
    let losses: Vec<Option<f64>> = std::iter::once(None).chain(cfg.lambdas.iter().map(|&l| Some(l))).collect();
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for &n in &cfg.n_s {
            for &l in &losses {
                jobs.push((seed, n, l));
            }
        }
    }
    let runs = par::try_map(jobs, |(seed, n, lambda)| {
        let rng = SeededRng::new(seed);
        let teacher = ShallowReluNet::xavier(&rng.fork_named("teacher"), cfg.d_x, cfg.m, 1)?;
        let mut student = ShallowReluNet::xavier(&rng.fork_named("student"), cfg.d_x, cfg.m, 1)?;
        if !cfg.train_second_layer {
            student.trainable = crate::relu_net::Trainable::W1Only;
        }
        let monitor = EvalSet::new(&teacher, cfg.d_x, cfg.sigma_eps, cfg.eval_samples, &rng.fork_named("eval"))?;
        let ds = make_regression_dataset(&rng.fork(n as u64), cfg.d_x, n, cfg.sigma_eps, &teacher)?;
        let train = ReluTrainConfig {
            lr: cfg.lr,
            epochs: cfg.epochs,
            batch: if cfg.batch_size == 0 { Batch::Full } else { Batch::Size(cfg.batch_size) },
            eval_every: cfg.eval_every,
            seed,
        };
        let out = match lambda {
            None => train_relu(&student, None, &ds, &train, ReluLoss::Base, &monitor)?,
            Some(lambda) => train_relu(&student, Some(&teacher), &ds, &train, ReluLoss::FeatureSt { lambda }, &monitor)?,
        };
        Ok::<_, Error>(EarlyStoppingRun {
            seed,
            n_s: n,
            lambda,
            best_error: out.best_error,
            best_step: out.best_step,
            final_error: out.final_error,
        })
    })?;

    let avg = |n: usize, lambda: Option<f64>, f: fn(&EarlyStoppingRun) -> f64| {
        mean(&runs.iter().filter(|r| r.n_s == n && r.lambda == lambda).map(f).collect::<Vec<_>>())
    };
    let rows = cfg
        .n_s
        .iter()
        .map(|&n| {
            let best_lambda = cfg
                .lambdas
                .iter()
                .copied()
                .min_by(|&a, &b| avg(n, Some(a), |r| r.best_error).total_cmp(&avg(n, Some(b), |r| r.best_error)))
                .expect("non-empty lambdas");
            EarlyStoppingRow {
                n_s: n,
                best_lambda,
                st_best: avg(n, Some(best_lambda), |r| r.best_error),
                st_final: avg(n, Some(best_lambda), |r| r.final_error),
                base_best: avg(n, None, |r| r.best_error),
                base_final: avg(n, None, |r| r.final_error),
            }
        })
        .collect();
    Ok(EarlyStoppingResult { rows, runs })
}

impl EarlyStoppingResult {
    pub fn sweep(&self, cfg: &EarlyStoppingConfig) -> SweepResult {
        let mut out = SweepResult::new(ExperimentId::EarlyStopping, cfg, &cfg.seeds);
        let mut summary = Table::new(
            "early_stopping",
            &["n_s", "best_lambda", "st_early_stopped", "st_end_of_training", "base_early_stopped", "base_end_of_training", "ordering_holds"],
        );
        for r in &self.rows {
            summary.push(vec![
                r.n_s.into(),
                r.best_lambda.into(),
                r.st_best.into(),
                r.st_final.into(),
                r.base_best.into(),
                r.base_final.into(),
                r.ordering_holds().into(),
            ]);
        }
        let mut runs = Table::new(
            "early_stopping_runs",
            &["seed", "n_s", "loss", "lambda", "best_error", "best_step", "final_error"],
        );
        for r in &self.runs {
            runs.push(vec![
                r.seed.into(),
                r.n_s.into(),
                if r.lambda.is_some() { "st" } else { "base" }.into(),
                r.lambda.unwrap_or(0.0).into(),
                r.best_error.into(),
                r.best_step.into(),
                r.final_error.into(),
            ]);
        }
        let curve = |label: &str, f: fn(&EarlyStoppingRow) -> f64| Series {
            label: label.into(),
            points: self.rows.iter().map(|r| (r.n_s as f64, f(r))).collect(),
        };
        out.figures.push(Figure::Lines {
            name: "early_stopping".into(),
            axes: Axes {
                title: "ReLU student test error vs sample size".into(),
                x_label: "N_s".into(),
                y_label: "test error".into(),
                log_x: true,
                log_y: true,
            },
            series: vec![
                curve("ST early-stopped", |r| r.st_best),
                curve("ST end of training", |r| r.st_final),
                curve("base early-stopped", |r| r.base_best),
            ],
        });
        out.tables = vec![summary, runs];
        out
    }
}
