//! Two-layer linear networks trained by gradient descent from small
//! initialization, compared with the closed-form minimizers: least squares
//! when samples outnumber inputs, and the minimum-norm interpolant otherwise.

use serde::{Deserialize, Serialize};

use super::{mean, require_nonempty, Axes, ExperimentId, Figure, Series, SweepResult, Table};
use crate::datagen::{make_regression_dataset, Dataset, LinearTarget};
use crate::error::{Error, Result};
use crate::linear_net::{init_balanced, suggest_lr, train_gd, Init, LinearNetwork, TrainConfig};
use crate::numerics::{fro_norm, gaussian_mat, spectral_norm, Mat, SeededRng};
use crate::oracles::{min_norm_minimizer, ols_minimizer};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSize {
    pub d_x: usize,
    pub d_y: usize,
    pub m: usize,
    pub n_s: usize,
    pub sigma_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremOraclesConfig {
    /// `N_s >= d_x`.
    pub oversampled: RegimeSize,
    /// `N_s < d_x`.
    pub underdetermined: RegimeSize,
    /// Feature-term weights for the oversampled runs.
    pub lambdas: Vec<f64>,
    /// Feature-term weight for the underdetermined runs.
    pub underdetermined_lambda: f64,
    /// Initialization scale for the oversampled runs.
    pub oversampled_delta: f64,
    /// Initialization scales for the underdetermined runs; must be positive.
    pub deltas: Vec<f64>,
    pub max_steps: usize,
    pub seeds: Vec<u64>,
}

impl Default for RegimeSize {
    fn default() -> Self {
        Self {
            d_x: 20,
            d_y: 3,
            m: 10,
            n_s: 60,
            sigma_eps: 0.3,
        }
    }
}

impl Default for TheoremOraclesConfig {
    fn default() -> Self {
        Self {
            oversampled: RegimeSize::default(),
            underdetermined: RegimeSize {
                d_x: 30,
                d_y: 2,
                m: 10,
                n_s: 10,
                sigma_eps: 0.3,
            },
            lambdas: vec![0.1, 1.0, 10.0],
            underdetermined_lambda: 1.0,
            oversampled_delta: 1e-3,
            deltas: vec![1e-1, 1e-2, 1e-3],
            max_steps: 500_000,
            seeds: vec![0],
        }
    }
}

impl TheoremOraclesConfig {
    fn validate(&self) -> Result<()> {
        require_nonempty("lambdas", &self.lambdas)?;
        require_nonempty("deltas", &self.deltas)?;
        require_nonempty("seeds", &self.seeds)?;
        if self.deltas.iter().chain([&self.oversampled_delta]).any(|&d| !(d > 0.0)) {
            return Err(Error::Config("deltas must be > 0; delta = 0 is a stationary point".into()));
        }
        if self.oversampled.n_s < self.oversampled.d_x {
            return Err(Error::Config("oversampled regime needs n_s >= d_x".into()));
        }
        if self.underdetermined.n_s >= self.underdetermined.d_x {
            return Err(Error::Config("underdetermined regime needs n_s < d_x".into()));
        }
        for r in [&self.oversampled, &self.underdetermined] {
            if r.m < r.d_y {
                return Err(Error::Config("hidden width m must be at least d_y".into()));
            }
        }
        Ok(())
    }
}

/// Noisy inputs, clean linear targets, and a teacher that interpolates its
/// clean data exactly.
fn instance(size: &RegimeSize, seed: u64, label: &str) -> Result<(Dataset, LinearNetwork)> {
    let rng = SeededRng::new(seed).fork_named(label);
    let w_star = gaussian_mat(&rng.fork_named("w-star"), size.d_y, size.d_x, 1.0)?;
    let ds = make_regression_dataset(&rng, size.d_x, size.n_s, size.sigma_eps, &LinearTarget(w_star.clone()))?;
    let teacher = LinearNetwork::balanced_factorization(&w_star, size.m)?;
    Ok((ds, teacher))
}

fn train(
    ds: &Dataset,
    teacher: Option<&LinearNetwork>,
    size: &RegimeSize,
    lambda: f64,
    delta: f64,
    seed: u64,
    scale: f64,
    max_steps: usize,
) -> Result<(Mat, bool, usize)> {
    let init = Init::Balanced { delta };
    let net = init_balanced(&SeededRng::new(seed).fork_named("init"), &[size.d_x, size.m, size.d_y], delta)?;
    let lambda = if teacher.is_some() { lambda } else { 0.0 };
    let cfg = TrainConfig {
        lr: suggest_lr(ds, lambda, scale),
        max_steps,
        grad_tol: TrainConfig::default_grad_tol(ds),
        lambda,
        split_layer: 1,
        init,
        eval_every: max_steps.max(1),
    };
    let (out, trace) = train_gd(&net, ds, teacher, &cfg, None)?;
    Ok((out.product(), trace.converged, trace.steps))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OversampledRow {
    pub seed: u64,
    pub delta: f64,
    pub lambda: f64,
    /// `||W_base - W_ols||_F / ||W_ols||_F`.
    pub base_rel_err: f64,
    pub st_rel_err: f64,
    /// `||W_base - W_st||_F / ||W_ols||_F`.
    pub rel_gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnderdeterminedRow {
    pub seed: u64,
    pub delta: f64,
    /// `||W_base - W_st||_F`.
    pub gap: f64,
    /// `||W_base - W_min_norm||_F`.
    pub base_oracle_dist: f64,
    pub st_oracle_dist: f64,
    pub oracle_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremOraclesResult {
    pub oversampled: Vec<OversampledRow>,
    pub underdetermined: Vec<UnderdeterminedRow>,
    /// Per seed, least-squares slope of `ln gap` against `ln delta`.
    pub slopes: Vec<(u64, f64)>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

#[derive(Clone, Copy)]
enum Job {
    Over { seed: u64, delta: f64, lambda: Option<f64> },
    Under { seed: u64, delta: f64, st: bool },
}

pub fn run_theorem_oracles(cfg: &TheoremOraclesConfig) -> Result<TheoremOraclesResult> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        let delta = cfg.oversampled_delta;
        jobs.push(Job::Over { seed, delta, lambda: None });
        for &l in &cfg.lambdas {
            jobs.push(Job::Over { seed, delta, lambda: Some(l) });
        }
        for &delta in &cfg.deltas {
            jobs.push(Job::Under { seed, delta, st: false });
            jobs.push(Job::Under { seed, delta, st: true });
        }
    }
    let products = par::try_map(jobs.clone(), |job| match job {
        Job::Over { seed, delta, lambda } => {
            let (ds, teacher) = instance(&cfg.oversampled, seed, "oversampled")?;
            let scale = spectral_norm(&ols_minimizer(&ds)?.w);
            let t = lambda.map(|_| &teacher);
            train(&ds, t, &cfg.oversampled, lambda.unwrap_or(0.0), delta, seed, scale, cfg.max_steps)
        }
        Job::Under { seed, delta, st } => {
            let (ds, teacher) = instance(&cfg.underdetermined, seed, "underdetermined")?;
            let scale = spectral_norm(&min_norm_minimizer(&ds, cfg.underdetermined.d_y)?.w);
            let t = st.then_some(&teacher);
            train(&ds, t, &cfg.underdetermined, cfg.underdetermined_lambda, delta, seed, scale, cfg.max_steps)
        }
    })?;

    let find = |pred: &dyn Fn(&Job) -> bool| -> &(Mat, bool, usize) {
        let k = jobs.iter().position(pred).expect("every job was scheduled");
        &products[k]
    };
    let mut oversampled = Vec::new();
    let mut underdetermined = Vec::new();
    let mut slopes = Vec::new();
    for &seed in &cfg.seeds {
        let (ds_o, _) = instance(&cfg.oversampled, seed, "oversampled")?;
        let ols = ols_minimizer(&ds_o)?.w;
        let (ds_u, _) = instance(&cfg.underdetermined, seed, "underdetermined")?;
        let oracle = min_norm_minimizer(&ds_u, cfg.underdetermined.d_y)?.w;
        let base = find(&|j| matches!(*j, Job::Over { seed: s, lambda: None, .. } if s == seed));
        for &l in &cfg.lambdas {
            let st = find(&|j| matches!(*j, Job::Over { seed: s, lambda: Some(x), .. } if s == seed && x == l));
            let n = fro_norm(&ols);
            oversampled.push(OversampledRow {
                seed,
                delta: cfg.oversampled_delta,
                lambda: l,
                base_rel_err: fro_norm(&(&base.0 - &ols)) / n,
                st_rel_err: fro_norm(&(&st.0 - &ols)) / n,
                rel_gap: fro_norm(&(&base.0 - &st.0)) / n,
                converged: base.1 && st.1,
            });
        }
        let mut gaps = Vec::new();
        for &delta in &cfg.deltas {
            let b = find(&|j| matches!(*j, Job::Under { seed: s, delta: d, st: false } if s == seed && d == delta));
            let s = find(&|j| matches!(*j, Job::Under { seed: s, delta: d, st: true } if s == seed && d == delta));
            let gap = fro_norm(&(&b.0 - &s.0));
            gaps.push(gap);
            underdetermined.push(UnderdeterminedRow {
                seed,
                delta,
                gap,
                base_oracle_dist: fro_norm(&(&b.0 - &oracle)),
                st_oracle_dist: fro_norm(&(&s.0 - &oracle)),
                oracle_norm: fro_norm(&oracle),
                converged: b.1 && s.1,
            });
        }
        let slope = if cfg.deltas.len() >= 2 { log_log_slope(&cfg.deltas, &gaps) } else { f64::NAN };
        slopes.push((seed, slope));
    }
    Ok(TheoremOraclesResult {
        oversampled,
        underdetermined,
        slopes,
    })
}

impl TheoremOraclesResult {
    pub fn sweep(&self, cfg: &TheoremOraclesConfig) -> SweepResult {
        let mut out = SweepResult::new(ExperimentId::TheoremOracles, cfg, &cfg.seeds);
        let mut over = Table::new(
            "theorem_oversampled",
            &["seed", "delta", "lambda", "base_rel_err", "st_rel_err", "rel_gap", "converged"],
        );
        for r in &self.oversampled {
            over.push(vec![
                r.seed.into(),
                r.delta.into(),
                r.lambda.into(),
                r.base_rel_err.into(),
                r.st_rel_err.into(),
                r.rel_gap.into(),
                r.converged.into(),
            ]);
        }
        let mut under = Table::new(
            "theorem_underdetermined",
            &["seed", "delta", "gap", "base_oracle_dist", "st_oracle_dist", "oracle_norm", "converged"],
        );
        for r in &self.underdetermined {
            under.push(vec![
                r.seed.into(),
                r.delta.into(),
                r.gap.into(),
                r.base_oracle_dist.into(),
                r.st_oracle_dist.into(),
                r.oracle_norm.into(),
                r.converged.into(),
            ]);
        }
        let mut mean_gap = Table::new("theorem_underdetermined_mean", &["delta", "mean_gap", "mean_base_oracle_dist", "mean_st_oracle_dist"]);
        let mut points = Vec::new();
        for &d in &cfg.deltas {
            let at: Vec<&UnderdeterminedRow> = self.underdetermined.iter().filter(|r| r.delta == d).collect();
            let g = mean(&at.iter().map(|r| r.gap).collect::<Vec<_>>());
            mean_gap.push(vec![
                d.into(),
                g.into(),
                mean(&at.iter().map(|r| r.base_oracle_dist).collect::<Vec<_>>()).into(),
                mean(&at.iter().map(|r| r.st_oracle_dist).collect::<Vec<_>>()).into(),
            ]);
            points.push((d, g));
        }
        let mut slopes = Table::new("theorem_slopes", &["seed", "log_log_slope"]);
        for &(seed, s) in &self.slopes {
            slopes.push(vec![seed.into(), s.into()]);
        }
        out.figures.push(Figure::Lines {
            name: "theorem_gap".into(),
            axes: Axes {
                title: "Base vs student-teacher gap, N_s < d_x".into(),
                x_label: "initialization scale delta".into(),
                y_label: "||W_base - W_st||_F".into(),
                log_x: true,
                log_y: true,
            },
            series: vec![Series { label: "gap".into(), points }],
        });
        out.tables = vec![over, under, mean_gap, slopes];
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1e-1, 1e-2, 1e-3];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_delta_is_rejected() {
        let cfg = TheoremOraclesConfig {
            deltas: vec![0.0],
            ..Default::default()
        };
        assert!(matches!(run_theorem_oracles(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn small_instance_matches_oracles() {
        let cfg = TheoremOraclesConfig {
            oversampled: RegimeSize { d_x: 4, d_y: 2, m: 3, n_s: 12, sigma_eps: 0.3 },
            underdetermined: RegimeSize { d_x: 8, d_y: 2, m: 3, n_s: 4, sigma_eps: 0.3 },
            lambdas: vec![1.0],
            deltas: vec![1e-2],
            ..Default::default()
        };
        let r = run_theorem_oracles(&cfg).unwrap();
        assert_eq!(r.oversampled.len(), 1);
        assert!(r.oversampled[0].converged);
        assert!(r.oversampled[0].base_rel_err < 1e-4 && r.oversampled[0].st_rel_err < 1e-4);
        assert!(r.underdetermined[0].base_oracle_dist < 0.1 * r.underdetermined[0].oracle_norm);
        assert!(r.slopes[0].1.is_nan());
        assert_eq!(r.sweep(&cfg).tables.len(), 4);
    }
}
