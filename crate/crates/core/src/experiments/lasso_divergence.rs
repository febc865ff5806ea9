//! Decomposed student-teacher LASSO against LASSO on the targets as the
//! input dimension grows with only logarithmically many samples.

use serde::{Deserialize, Serialize};

use super::{log_grid, mean, require_nonempty, Axes, ExperimentId, Figure, Series, SweepResult, Table};
use crate::datagen::{make_regression_dataset, make_sparse_beta, LinearTarget};
use crate::error::{Error, Result};
use crate::lasso::{st_decomposed_path, target_lasso_fit, SolverOptions};
use crate::numerics::SeededRng;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoDivergenceConfig {
    pub d_x: Vec<usize>,
    /// Support size is `d_x / sparsity_divisor`.
    pub sparsity_divisor: usize,
    /// Sample size is `ceil(sample_factor * ln d_x)`.
    pub sample_factor: f64,
    pub sigma_eps_sq: f64,
    pub beta_value: f64,
    pub lambdas: Vec<f64>,
    pub tol: f64,
    pub max_iters: usize,
    pub seeds: Vec<u64>,
}

impl Default for LassoDivergenceConfig {
    fn default() -> Self {
        Self {
            d_x: vec![500, 1000, 2000, 4000],
            sparsity_divisor: 20,
            sample_factor: 5.0,
            sigma_eps_sq: 0.1,
            beta_value: 1.0,
            lambdas: log_grid(1e-4, 10.0, 7),
            tol: 1e-6,
            max_iters: 200_000,
            seeds: vec![1],
        }
    }
}

impl LassoDivergenceConfig {
    pub fn sample_size(&self, d_x: usize) -> usize {
        (self.sample_factor * (d_x as f64).ln()).ceil() as usize
    }

    fn validate(&self) -> Result<()> {
        require_nonempty("d_x", &self.d_x)?;
        require_nonempty("lambdas", &self.lambdas)?;
        require_nonempty("seeds", &self.seeds)?;
        if self.sparsity_divisor == 0 || self.d_x.iter().any(|&d| d < self.sparsity_divisor) {
            return Err(Error::Config("every d_x must be at least sparsity_divisor >= 1".into()));
        }
        if !(self.sigma_eps_sq >= 0.0) || !(self.sample_factor > 0.0) {
            return Err(Error::Config("sigma_eps_sq must be >= 0 and sample_factor > 0".into()));
        }
        Ok(())
    }
}

/// One seed at one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoRun {
    pub seed: u64,
    pub d_x: usize,
    pub st_errors: Vec<f64>,
    pub target_errors: Vec<f64>,
}

impl LassoRun {
    fn best(v: &[f64]) -> (usize, f64) {
        v.iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty grid")
    }
}

/// Seed-averaged best-over-grid errors at one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoDivergenceRow {
    pub d_x: usize,
    pub n_s: usize,
    pub s: usize,
    pub optimal: f64,
    pub st_error: f64,
    pub target_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoDivergenceResult {
    pub rows: Vec<LassoDivergenceRow>,
    pub runs: Vec<LassoRun>,
}

pub fn run_lasso_divergence(cfg: &LassoDivergenceConfig) -> Result<LassoDivergenceResult> {
    cfg.validate()?;
    let sigma = cfg.sigma_eps_sq.sqrt();
    let opts = SolverOptions {
        tol: cfg.tol,
        max_iters: cfg.max_iters,
    };
    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&seed| cfg.d_x.iter().map(move |&d| (seed, d)))
        .collect();
    let runs = par::try_map(jobs, |(seed, d)| {
        let gt = make_sparse_beta(d, d / cfg.sparsity_divisor, cfg.beta_value)?;
        let ds = make_regression_dataset(
            &SeededRng::new(seed),
            d,
            cfg.sample_size(d),
            sigma,
            &LinearTarget::from_beta(&gt.beta),
        )?;
        let path = st_decomposed_path(&ds, &gt, &cfg.lambdas, opts)?;
        let target = target_lasso_fit(&ds, &gt, &cfg.lambdas, opts)?;
        Ok::<_, Error>(LassoRun {
            seed,
            d_x: d,
            st_errors: path.iter().map(|f| f.test_error(&gt, sigma)).collect(),
            target_errors: target.errors,
        })
    })?;
    let rows = cfg
        .d_x
        .iter()
        .map(|&d| {
            let s = d / cfg.sparsity_divisor;
            let at: Vec<&LassoRun> = runs.iter().filter(|r| r.d_x == d).collect();
            let norm_sq = s as f64 * cfg.beta_value * cfg.beta_value;
            LassoDivergenceRow {
                d_x: d,
                n_s: cfg.sample_size(d),
                s,
                optimal: cfg.sigma_eps_sq * norm_sq / (1.0 + cfg.sigma_eps_sq),
                st_error: mean(&at.iter().map(|r| LassoRun::best(&r.st_errors).1).collect::<Vec<_>>()),
                target_error: mean(&at.iter().map(|r| LassoRun::best(&r.target_errors).1).collect::<Vec<_>>()),
            }
        })
        .collect();
    Ok(LassoDivergenceResult { rows, runs })
}

impl LassoDivergenceResult {
    pub fn sweep(&self, cfg: &LassoDivergenceConfig) -> SweepResult {
        let mut out = SweepResult::new(ExperimentId::LassoDivergence, cfg, &cfg.seeds);
        let mut summary = Table::new(
            "lasso_divergence",
            &["d_x", "n_s", "s", "optimal_error", "st_error", "target_error"],
        );
        for r in &self.rows {
            summary.push(vec![
                r.d_x.into(),
                r.n_s.into(),
                r.s.into(),
                r.optimal.into(),
                r.st_error.into(),
                r.target_error.into(),
            ]);
        }
        let mut best = Table::new(
            "lasso_divergence_seeds",
            &["seed", "d_x", "st_error", "st_lambda", "target_error", "target_lambda"],
        );
        let mut path = Table::new("lasso_divergence_path", &["seed", "d_x", "lambda", "st_error", "target_error"]);
        for r in &self.runs {
            let (si, se) = LassoRun::best(&r.st_errors);
            let (ti, te) = LassoRun::best(&r.target_errors);
            best.push(vec![
                r.seed.into(),
                r.d_x.into(),
                se.into(),
                cfg.lambdas[si].into(),
                te.into(),
                cfg.lambdas[ti].into(),
            ]);
            for (k, &l) in cfg.lambdas.iter().enumerate() {
                path.push(vec![
                    r.seed.into(),
                    r.d_x.into(),
                    l.into(),
                    r.st_errors[k].into(),
                    r.target_errors[k].into(),
                ]);
            }
        }
        let curve = |label: &str, f: fn(&LassoDivergenceRow) -> f64| Series {
            label: label.into(),
            points: self.rows.iter().map(|r| (r.d_x as f64, f(r))).collect(),
        };
        out.figures.push(Figure::Lines {
            name: "lasso_divergence".into(),
            axes: Axes {
                title: "LASSO test error vs input dimension".into(),
                x_label: "d_x".into(),
                y_label: "test error".into(),
                log_x: true,
                log_y: true,
            },
            series: vec![
                curve("student-teacher", |r| r.st_error),
                curve("target-based", |r| r.target_error),
                curve("optimal", |r| r.optimal),
            ],
        });
        out.tables = vec![summary, best, path];
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LassoDivergenceConfig {
        LassoDivergenceConfig {
            d_x: vec![60],
            lambdas: log_grid(1e-3, 1.0, 4),
            ..Default::default()
        }
    }

    #[test]
    fn single_dimension_gives_single_row() {
        let cfg = small();
        let r = run_lasso_divergence(&cfg).unwrap();
        assert_eq!(r.rows.len(), 1);
        let row = &r.rows[0];
        assert_eq!((row.s, row.n_s), (3, 21));
        assert!((row.optimal - 0.1 * 3.0 / 1.1).abs() < 1e-12);
        assert!(row.st_error >= row.optimal - 1e-9);
        let sweep = r.sweep(&cfg);
        assert_eq!(sweep.table("lasso_divergence_path").unwrap().rows.len(), 4);
    }

    #[test]
    fn optimal_error_at_500_matches_plug_in() {
        let cfg = LassoDivergenceConfig::default();
        let s = 500 / cfg.sparsity_divisor;
        assert!((cfg.sigma_eps_sq * s as f64 / (1.0 + cfg.sigma_eps_sq) - 2.272_727_272_7).abs() < 1e-9);
        assert_eq!(cfg.sample_size(500), 32);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(run_lasso_divergence(&LassoDivergenceConfig { d_x: vec![], ..small() }).is_err());
        assert!(run_lasso_divergence(&LassoDivergenceConfig { d_x: vec![10], ..small() }).is_err());
    }
}
