//! Test error of the pooled student trained on the simplified loss as the
//! teacher's knowledge is spread over larger neuron groups.

use serde::{Deserialize, Serialize};

use super::{mean, require_nonempty, spearman, std_err, Axes, ExperimentId, Figure, Series, SweepResult, Table};
use crate::datagen::{make_regression_dataset, make_relu_teacher};
use crate::error::{Error, Result};
use crate::numerics::{gaussian_mat, SeededRng};
use crate::par;
use crate::relu_net::{train_relu, Batch, EvalSet, ReluLoss, ReluTrainConfig, ShallowReluNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionConfig {
    pub d_x: usize,
    pub m: usize,
    pub sigma_eps: f64,
    pub g: Vec<usize>,
    pub n_s: Vec<usize>,
    /// The step size used for group size `g` is `lr / g`.
    pub lr: f64,
    pub epochs: usize,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub sign_split: bool,
    pub seeds: Vec<u64>,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            d_x: 100,
            m: 2000,
            sigma_eps: 0.3,
            g: vec![1, 2, 4, 8],
            n_s: vec![64, 256],
            lr: 0.5,
            epochs: 400,
            eval_every: 25,
            eval_samples: 1000,
            sign_split: true,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

impl DecompositionConfig {
    fn validate(&self) -> Result<()> {
        require_nonempty("g", &self.g)?;
        require_nonempty("n_s", &self.n_s)?;
        require_nonempty("seeds", &self.seeds)?;
        for &g in &self.g {
            if g == 0 || self.m % g != 0 || (self.sign_split && (self.m / g) % 2 != 0) {
                return Err(Error::Config(format!(
                    "g = {g} must divide m = {} (with m / g even when sign_split)",
                    self.m
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRun {
    pub seed: u64,
    pub n_s: usize,
    pub g: usize,
    pub initial_error: f64,
    pub best_error: f64,
    pub best_step: usize,
    pub final_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionResult {
    pub runs: Vec<DecompositionRun>,
    pub g: Vec<usize>,
    pub n_s: Vec<usize>,
    pub seeds: Vec<u64>,
}

pub fn run_decomposition(cfg: &DecompositionConfig) -> Result<DecompositionResult> {
    cfg.validate()?;
    let n_max = *cfg.n_s.iter().max().expect("validated");
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for &n in &cfg.n_s {
            for &g in &cfg.g {
                jobs.push((seed, n, g));
            }
        }
    }
    let runs = par::try_map(jobs, |(seed, n, g)| {
        let rng = SeededRng::new(seed);
        let teacher = ShallowReluNet::from_teacher(&make_relu_teacher(
            &rng.fork_named("teacher"),
            cfg.d_x,
            cfg.m,
            g,
            cfg.sign_split,
        )?)?;
        let std = (2.0 / (cfg.d_x + cfg.m) as f64).sqrt();
        let init = gaussian_mat(&rng.fork_named("student"), cfg.m, cfg.d_x, std)?;
        let student = ShallowReluNet::pooled(init, teacher.w2.clone(), g)?;
        let ds = make_regression_dataset(&rng.fork_named("train"), cfg.d_x, n_max, cfg.sigma_eps, &teacher)?.head(n)?;
        let monitor = EvalSet::new(&teacher, cfg.d_x, cfg.sigma_eps, cfg.eval_samples, &rng.fork_named("eval"))?;
        let train = ReluTrainConfig {
            lr: cfg.lr / g as f64,
            epochs: cfg.epochs,
            batch: Batch::Full,
            eval_every: cfg.eval_every,
            seed,
        };
        let out = train_relu(&student, Some(&teacher), &ds, &train, ReluLoss::SimplifiedSt, &monitor)?;
        Ok::<_, Error>(DecompositionRun {
            seed,
            n_s: n,
            g,
            initial_error: out.trace[0].eval_error,
            best_error: out.best_error,
            best_step: out.best_step,
            final_error: out.final_error,
        })
    })?;
    Ok(DecompositionResult {
        runs,
        g: cfg.g.clone(),
        n_s: cfg.n_s.clone(),
        seeds: cfg.seeds.clone(),
    })
}

impl DecompositionResult {
    fn errors(&self, seed: Option<u64>, n: usize) -> Vec<Vec<f64>> {
        self.g
            .iter()
            .map(|&g| {
                self.runs
                    .iter()
                    .filter(|r| r.n_s == n && r.g == g && seed.is_none_or(|s| r.seed == s))
                    .map(|r| r.best_error)
                    .collect()
            })
            .collect()
    }

    /// Spearman correlation between `g` and the early-stopped error of one
    /// seed at sample size `n`.
    pub fn spearman_for(&self, seed: u64, n: usize) -> f64 {
        let errs: Vec<f64> = self.errors(Some(seed), n).iter().map(|e| e[0]).collect();
        let g: Vec<f64> = self.g.iter().map(|&g| g as f64).collect();
        spearman(&g, &errs)
    }

    /// Seed-averaged error per `g` at sample size `n`.
    pub fn mean_errors(&self, n: usize) -> Vec<f64> {
        self.errors(None, n).iter().map(|e| mean(e)).collect()
    }

    pub fn sweep(&self, cfg: &DecompositionConfig) -> SweepResult {
        let mut out = SweepResult::new(ExperimentId::Decomposition, cfg, &cfg.seeds);
        let mut summary = Table::new("decomposition", &["n_s", "g", "mean_error", "stderr"]);
        let mut series = Vec::new();
        for &n in &self.n_s {
            let errs = self.errors(None, n);
            for (k, &g) in self.g.iter().enumerate() {
                summary.push(vec![n.into(), g.into(), mean(&errs[k]).into(), std_err(&errs[k]).into()]);
            }
            series.push(Series {
                label: format!("N_s = {n}"),
                points: self.g.iter().zip(&errs).map(|(&g, e)| (g as f64, mean(e))).collect(),
            });
        }
        let mut corr = Table::new("decomposition_spearman", &["seed", "n_s", "spearman"]);
        for &seed in &self.seeds {
            for &n in &self.n_s {
                corr.push(vec![seed.into(), n.into(), self.spearman_for(seed, n).into()]);
            }
        }
        let mut runs = Table::new(
            "decomposition_runs",
            &["seed", "n_s", "g", "initial_error", "best_error", "best_step", "final_error"],
        );
        for r in &self.runs {
            runs.push(vec![
                r.seed.into(),
                r.n_s.into(),
                r.g.into(),
                r.initial_error.into(),
                r.best_error.into(),
                r.best_step.into(),
                r.final_error.into(),
            ]);
        }
        out.figures.push(Figure::Lines {
            name: "decomposition".into(),
            axes: Axes {
                title: "Test error vs neurons per group".into(),
                x_label: "g".into(),
                y_label: "test error".into(),
                log_x: true,
                log_y: false,
            },
            series,
        });
        out.tables = vec![summary, corr, runs];
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DecompositionConfig {
        DecompositionConfig {
            d_x: 5,
            m: 16,
            g: vec![2],
            n_s: vec![10],
            epochs: 20,
            eval_every: 5,
            eval_samples: 50,
            seeds: vec![0, 1],
            ..Default::default()
        }
    }

    #[test]
    fn single_g_is_a_trivial_sweep() {
        let cfg = tiny();
        let r = run_decomposition(&cfg).unwrap();
        assert_eq!(r.runs.len(), 2);
        assert!(r.spearman_for(0, 10).is_nan());
        let sweep = r.sweep(&cfg);
        assert_eq!(sweep.table("decomposition").unwrap().rows.len(), 1);
    }

    #[test]
    fn odd_group_count_is_rejected_with_sign_split() {
        let cfg = DecompositionConfig { g: vec![16], ..tiny() };
        assert!(matches!(run_decomposition(&cfg), Err(Error::Config(_))));
        let cfg = DecompositionConfig { g: vec![3], ..tiny() };
        assert!(run_decomposition(&cfg).is_err());
    }
}
