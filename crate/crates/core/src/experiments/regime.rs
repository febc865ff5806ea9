//! Operating regime of student-teacher learning on synthetic regression.
//!
//! A fixed ReLU network plays the role of nature. The teacher is trained on
//! `N_t` clean samples; the base and student-teacher students are trained on
//! `N_s` noisy samples. Snapshots are selected on a held-out validation set
//! drawn like the training data and scored on a separate test set, giving
//! `E_t` (clean), `E_base` and `E_st` (noisy). A cell beats the baseline when
//! `E_st <= (1 - delta) E_base`.

use serde::{Deserialize, Serialize};

use super::{mean, require_nonempty, Axes, Cell, ExperimentId, Figure, SweepResult, Table};
use crate::datagen::make_regression_dataset;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;
use crate::par;
use crate::relu_net::{train_relu, Batch, EvalSet, ReluLoss, ReluTrainConfig, ShallowReluNet};

/// Problem and training knobs shared by the grid and the difficulty table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSetup {
    pub d_x: usize,
    /// Hidden width of the ground-truth network.
    pub truth_width: usize,
    /// Hidden width of the teacher and both students.
    pub m: usize,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub eval_every: usize,
    pub val_samples: usize,
    pub test_samples: usize,
}

impl Default for RegimeSetup {
    fn default() -> Self {
        Self {
            d_x: 20,
            truth_width: 32,
            m: 64,
            lambda: 1.0,
            lr: 0.05,
            epochs: 1500,
            eval_every: 10,
            val_samples: 500,
            test_samples: 4000,
        }
    }
}

impl RegimeSetup {
    fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.truth_width == 0 || self.m == 0 || self.val_samples == 0 || self.test_samples == 0 {
            return Err(Error::Config("dimensions and evaluation sizes must be positive".into()));
        }
        Ok(())
    }

    fn truth(&self, seed: u64) -> Result<ShallowReluNet> {
        ShallowReluNet::xavier(&SeededRng::new(seed).fork_named("truth"), self.d_x, self.truth_width, 1)
    }

    fn eval_sets(&self, truth: &ShallowReluNet, seed: u64, sigma: f64) -> Result<(EvalSet, EvalSet)> {
        let rng = SeededRng::new(seed);
        Ok((
            EvalSet::new(truth, self.d_x, sigma, self.val_samples, &rng.fork_named("validation"))?,
            EvalSet::new(truth, self.d_x, sigma, self.test_samples, &rng.fork_named("test"))?,
        ))
    }

    fn train_cfg(&self, seed: u64) -> ReluTrainConfig {
        ReluTrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch: Batch::Full,
            eval_every: self.eval_every,
            seed,
        }
    }

    /// Teacher trained on the first `n_t` clean samples, with its clean test
    /// error.
    pub fn teacher(&self, seed: u64, n_t: usize, n_t_max: usize) -> Result<(ShallowReluNet, f64)> {
        let truth = self.truth(seed)?;
        let rng = SeededRng::new(seed);
        let ds = make_regression_dataset(&rng.fork_named("teacher-data"), self.d_x, n_t_max, 0.0, &truth)?.head(n_t)?;
        let init = ShallowReluNet::xavier(&rng.fork_named("teacher-init"), self.d_x, self.m, 1)?;
        let (val, test) = self.eval_sets(&truth, seed, 0.0)?;
        let out = train_relu(&init, None, &ds, &self.train_cfg(seed), ReluLoss::Base, &val)?;
        let e_t = test.error(&out.best)?.0;
        Ok((out.best, e_t))
    }

    /// Noisy test error of a student trained on the first `n_s` noisy
    /// samples; student-teacher when `teacher` is given.
    pub fn student(&self, seed: u64, sigma: f64, n_s: usize, n_s_max: usize, teacher: Option<&ShallowReluNet>) -> Result<f64> {
        let truth = self.truth(seed)?;
        let rng = SeededRng::new(seed);
        let ds = make_regression_dataset(&rng.fork_named("student-data"), self.d_x, n_s_max, sigma, &truth)?.head(n_s)?;
        let init = ShallowReluNet::xavier(&rng.fork_named("student-init"), self.d_x, self.m, 1)?;
        let (val, test) = self.eval_sets(&truth, seed, sigma)?;
        let loss = match teacher {
            Some(_) => ReluLoss::FeatureSt { lambda: self.lambda },
            None => ReluLoss::Base,
        };
        let out = train_relu(&init, teacher, &ds, &self.train_cfg(seed), loss, &val)?;
        Ok(test.error(&out.best)?.0)
    }
}

/// `E_st <= (1 - delta) E_base`.
pub fn beats_baseline(e_st: f64, e_base: f64, delta: f64) -> bool {
    e_st <= (1.0 - delta) * e_base
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeConfig {
    pub setup: RegimeSetup,
    pub sigma_eps: f64,
    pub n_s: Vec<usize>,
    pub n_t: Vec<usize>,
    pub delta: f64,
    pub seeds: Vec<u64>,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            setup: RegimeSetup::default(),
            sigma_eps: 0.5,
            n_s: vec![1, 8, 32, 128],
            n_t: vec![100, 200, 300, 400, 500],
            delta: 0.02,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// One `(N_t, N_s)` cell: seed-averaged errors plus the per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeCell {
    pub n_s: usize,
    pub n_t: usize,
    pub e_st: f64,
    pub e_base: f64,
    pub e_t: f64,
    pub e_st_seeds: Vec<f64>,
    pub e_base_seeds: Vec<f64>,
    pub e_t_seeds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeGrid {
    pub n_s: Vec<usize>,
    pub n_t: Vec<usize>,
    pub delta: f64,
    /// Row-major over `n_t`, then `n_s`.
    pub cells: Vec<RegimeCell>,
}

impl RegimeGrid {
    pub fn verdict(&self, cell: &RegimeCell) -> bool {
        beats_baseline(cell.e_st, cell.e_base, self.delta)
    }

    pub fn cell(&self, n_t: usize, n_s: usize) -> Option<&RegimeCell> {
        self.cells.iter().find(|c| c.n_t == n_t && c.n_s == n_s)
    }

    /// Verdicts of the column at sample size `n_s`, in `n_t` order.
    pub fn column(&self, n_s: usize) -> Vec<bool> {
        self.n_t
            .iter()
            .filter_map(|&t| self.cell(t, n_s))
            .map(|c| self.verdict(c))
            .collect()
    }

    /// Same errors judged with another margin.
    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }

    pub fn sweep(&self, cfg: &RegimeConfig) -> SweepResult {
        let mut out = SweepResult::new(ExperimentId::RegimeGrid, cfg, &cfg.seeds);
        let mut grid = Table::new("regime_grid", &["n_t", "n_s", "e_t", "e_base", "e_st", "delta", "beats_baseline"]);
        let mut seeds = Table::new("regime_grid_seeds", &["seed", "n_t", "n_s", "e_t", "e_base", "e_st"]);
        let mut points = Vec::new();
        for c in &self.cells {
            let v = self.verdict(c);
            grid.push(vec![
                c.n_t.into(),
                c.n_s.into(),
                c.e_t.into(),
                c.e_base.into(),
                c.e_st.into(),
                self.delta.into(),
                v.into(),
            ]);
            for (k, &seed) in cfg.seeds.iter().enumerate() {
                seeds.push(vec![
                    seed.into(),
                    c.n_t.into(),
                    c.n_s.into(),
                    c.e_t_seeds[k].into(),
                    c.e_base_seeds[k].into(),
                    c.e_st_seeds[k].into(),
                ]);
            }
            points.push((c.n_s as f64, c.n_t as f64, v));
        }
        out.figures.push(Figure::Verdicts {
            name: "regime_grid".into(),
            axes: Axes {
                title: format!("Operating regime (delta = {})", self.delta),
                x_label: "N_s".into(),
                y_label: "N_t".into(),
                log_x: true,
                log_y: false,
            },
            points,
        });
        out.tables = vec![grid, seeds];
        out
    }
}

fn validate_grid(setup: &RegimeSetup, seeds: &[u64], n_t: &[usize], delta: f64) -> Result<()> {
    setup.validate()?;
    require_nonempty("seeds", seeds)?;
    require_nonempty("n_t", n_t)?;
    if n_t.contains(&0) {
        return Err(Error::Config("n_t values must be positive".into()));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!("delta must lie in [0, 1], got {delta}")));
    }
    Ok(())
}

/// Teachers for every `(seed, n_t)`, in that order, each with its `E_t`.
fn teachers(setup: &RegimeSetup, seeds: &[u64], n_t: &[usize]) -> Result<Vec<(u64, usize, ShallowReluNet, f64)>> {
    let n_t_max = *n_t.iter().max().expect("validated");
    let jobs: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| n_t.iter().map(move |&t| (s, t))).collect();
    par::try_map(jobs, |(seed, t)| {
        let (net, e_t) = setup.teacher(seed, t, n_t_max)?;
        Ok::<_, Error>((seed, t, net, e_t))
    })
}

/// Base and student-teacher errors for every `(seed, sigma, n_s)` and teacher.
struct StudentErrors {
    /// `(seed, sigma index, n_s, E_base)`.
    base: Vec<(u64, usize, usize, f64)>,
    /// `(seed, sigma index, n_s, n_t, E_st)`.
    st: Vec<(u64, usize, usize, usize, f64)>,
}

fn students(
    setup: &RegimeSetup,
    sigmas: &[f64],
    n_s: &[usize],
    teachers: &[(u64, usize, ShallowReluNet, f64)],
    seeds: &[u64],
) -> Result<StudentErrors> {
    let n_s_max = *n_s.iter().max().expect("validated");
    // `None` is the base student; `Some(k)` uses teachers[k].
    let mut jobs: Vec<(u64, usize, usize, Option<usize>)> = Vec::new();
    for &seed in seeds {
        for si in 0..sigmas.len() {
            for &n in n_s {
                jobs.push((seed, si, n, None));
                for (k, t) in teachers.iter().enumerate() {
                    if t.0 == seed {
                        jobs.push((seed, si, n, Some(k)));
                    }
                }
            }
        }
    }
    let errs = par::try_map(jobs.clone(), |(seed, si, n, k)| {
        setup.student(seed, sigmas[si], n, n_s_max, k.map(|k| &teachers[k].2))
    })?;
    let mut out = StudentErrors { base: Vec::new(), st: Vec::new() };
    for ((seed, si, n, k), e) in jobs.into_iter().zip(errs) {
        match k {
            None => out.base.push((seed, si, n, e)),
            Some(k) => out.st.push((seed, si, n, teachers[k].1, e)),
        }
    }
    Ok(out)
}

impl StudentErrors {
    fn base_of(&self, seed: u64, si: usize, n: usize) -> f64 {
        self.base
            .iter()
            .find(|b| b.0 == seed && b.1 == si && b.2 == n)
            .expect("scheduled")
            .3
    }

    fn st_of(&self, seed: u64, si: usize, n: usize, t: usize) -> f64 {
        self.st
            .iter()
            .find(|s| s.0 == seed && s.1 == si && s.2 == n && s.3 == t)
            .expect("scheduled")
            .4
    }
}

pub fn run_regime_grid(cfg: &RegimeConfig) -> Result<RegimeGrid> {
    validate_grid(&cfg.setup, &cfg.seeds, &cfg.n_t, cfg.delta)?;
    require_nonempty("n_s", &cfg.n_s)?;
    if cfg.n_s.contains(&0) {
        return Err(Error::Config("n_s values must be positive".into()));
    }
    let teachers = teachers(&cfg.setup, &cfg.seeds, &cfg.n_t)?;
    let errs = students(&cfg.setup, &[cfg.sigma_eps], &cfg.n_s, &teachers, &cfg.seeds)?;
    let e_t_of = |seed: u64, t: usize| teachers.iter().find(|x| x.0 == seed && x.1 == t).expect("scheduled").3;
    let mut cells = Vec::new();
    for &t in &cfg.n_t {
        for &n in &cfg.n_s {
            let e_st_seeds: Vec<f64> = cfg.seeds.iter().map(|&s| errs.st_of(s, 0, n, t)).collect();
            let e_base_seeds: Vec<f64> = cfg.seeds.iter().map(|&s| errs.base_of(s, 0, n)).collect();
            let e_t_seeds: Vec<f64> = cfg.seeds.iter().map(|&s| e_t_of(s, t)).collect();
            cells.push(RegimeCell {
                n_s: n,
                n_t: t,
                e_st: mean(&e_st_seeds),
                e_base: mean(&e_base_seeds),
                e_t: mean(&e_t_seeds),
                e_st_seeds,
                e_base_seeds,
                e_t_seeds,
            });
        }
    }
    Ok(RegimeGrid {
        n_s: cfg.n_s.clone(),
        n_t: cfg.n_t.clone(),
        delta: cfg.delta,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifficultyConfig {
    pub setup: RegimeSetup,
    /// Ascending noise levels.
    pub sigma_eps: Vec<f64>,
    pub n_s: usize,
    /// Ascending teacher sample sizes searched for the smallest that works.
    pub n_t: Vec<usize>,
    pub delta: f64,
    pub seeds: Vec<u64>,
}

impl Default for DifficultyConfig {
    fn default() -> Self {
        Self {
            setup: RegimeSetup {
                m: 8,
                lambda: 0.01,
                ..RegimeSetup::default()
            },
            sigma_eps: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            n_s: 512,
            n_t: vec![10, 20, 40, 80, 160, 320, 640, 1280],
            delta: 0.04,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Errors at one `(seed, sigma)`: the base student and one student-teacher
/// error per grid `N_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifficultyRow {
    pub seed: u64,
    pub sigma_eps: f64,
    pub e_base: f64,
    pub e_st: Vec<f64>,
    pub e_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifficultyResult {
    pub sigma_eps: Vec<f64>,
    pub n_t: Vec<usize>,
    pub delta: f64,
    pub rows: Vec<DifficultyRow>,
    pub seeds: Vec<u64>,
}

/// Non-decreasing with `None` ("exceeds grid") ordered above every value.
pub fn non_decreasing(required: &[Option<usize>]) -> bool {
    let key = |r: &Option<usize>| r.unwrap_or(usize::MAX);
    required.windows(2).all(|w| key(&w[0]) <= key(&w[1]))
}

impl DifficultyResult {
    fn first_qualifying(&self, e_base: f64, e_st: &[f64]) -> Option<usize> {
        self.n_t
            .iter()
            .zip(e_st)
            .find(|(_, &e)| beats_baseline(e, e_base, self.delta))
            .map(|(&t, _)| t)
    }

    /// Smallest qualifying `N_t` per noise level for one seed.
    pub fn required(&self, seed: u64) -> Vec<Option<usize>> {
        self.rows
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| self.first_qualifying(r.e_base, &r.e_st))
            .collect()
    }

    /// Smallest qualifying `N_t` per noise level from seed-averaged errors.
    pub fn required_mean(&self) -> Vec<Option<usize>> {
        (0..self.sigma_eps.len())
            .map(|si| {
                let at: Vec<&DifficultyRow> = self.rows.iter().filter(|r| r.sigma_eps == self.sigma_eps[si]).collect();
                let e_base = mean(&at.iter().map(|r| r.e_base).collect::<Vec<_>>());
                let e_st: Vec<f64> = (0..self.n_t.len())
                    .map(|k| mean(&at.iter().map(|r| r.e_st[k]).collect::<Vec<_>>()))
                    .collect();
                self.first_qualifying(e_base, &e_st)
            })
            .collect()
    }

    pub fn monotone_seeds(&self) -> usize {
        self.seeds.iter().filter(|&&s| non_decreasing(&self.required(s))).count()
    }

    pub fn sweep(&self, cfg: &DifficultyConfig) -> SweepResult {
        let mut out = SweepResult::new(ExperimentId::DifficultyTable, cfg, &cfg.seeds);
        let show = |r: Option<usize>| -> Cell { r.map_or_else(|| "exceeds grid".into(), Cell::from) };
        let mut table = Table::new("difficulty_table", &["sigma_eps", "required_n_t"]);
        for (s, r) in self.sigma_eps.iter().zip(self.required_mean()) {
            table.push(vec![(*s).into(), show(r)]);
        }
        let mut per_seed = Table::new("difficulty_table_seeds", &["seed", "sigma_eps", "required_n_t"]);
        let mut mono = Table::new("difficulty_monotonicity", &["seed", "non_decreasing"]);
        for &seed in &self.seeds {
            let req = self.required(seed);
            for (s, r) in self.sigma_eps.iter().zip(&req) {
                per_seed.push(vec![seed.into(), (*s).into(), show(*r)]);
            }
            mono.push(vec![seed.into(), non_decreasing(&req).into()]);
        }
        let mut errors = Table::new("difficulty_errors", &["seed", "sigma_eps", "n_t", "e_t", "e_base", "e_st"]);
        let mut points = Vec::new();
        for r in &self.rows {
            for (k, &t) in self.n_t.iter().enumerate() {
                errors.push(vec![
                    r.seed.into(),
                    r.sigma_eps.into(),
                    t.into(),
                    r.e_t[k].into(),
                    r.e_base.into(),
                    r.e_st[k].into(),
                ]);
            }
        }
        for &s in &self.sigma_eps {
            let at: Vec<&DifficultyRow> = self.rows.iter().filter(|r| r.sigma_eps == s).collect();
            let e_base = mean(&at.iter().map(|r| r.e_base).collect::<Vec<_>>());
            for (k, &t) in self.n_t.iter().enumerate() {
                let e_st = mean(&at.iter().map(|r| r.e_st[k]).collect::<Vec<_>>());
                points.push((s, t as f64, beats_baseline(e_st, e_base, self.delta)));
            }
        }
        out.figures.push(Figure::Verdicts {
            name: "difficulty_table".into(),
            axes: Axes {
                title: format!("Teacher samples needed vs noise (delta = {})", self.delta),
                x_label: "sigma_eps".into(),
                y_label: "N_t".into(),
                log_x: false,
                log_y: false,
            },
            points,
        });
        out.tables = vec![table, per_seed, mono, errors];
        out
    }
}

pub fn run_difficulty_table(cfg: &DifficultyConfig) -> Result<DifficultyResult> {
    validate_grid(&cfg.setup, &cfg.seeds, &cfg.n_t, cfg.delta)?;
    require_nonempty("sigma_eps", &cfg.sigma_eps)?;
    if cfg.n_s == 0 {
        return Err(Error::Config("n_s must be positive".into()));
    }
    if cfg.sigma_eps.windows(2).any(|w| w[0] > w[1]) || cfg.n_t.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("sigma_eps and n_t grids must be ascending".into()));
    }
    let teachers = teachers(&cfg.setup, &cfg.seeds, &cfg.n_t)?;
    let errs = students(&cfg.setup, &cfg.sigma_eps, &[cfg.n_s], &teachers, &cfg.seeds)?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        for (si, &s) in cfg.sigma_eps.iter().enumerate() {
            rows.push(DifficultyRow {
                seed,
                sigma_eps: s,
                e_base: errs.base_of(seed, si, cfg.n_s),
                e_st: cfg.n_t.iter().map(|&t| errs.st_of(seed, si, cfg.n_s, t)).collect(),
                e_t: cfg
                    .n_t
                    .iter()
                    .map(|&t| teachers.iter().find(|x| x.0 == seed && x.1 == t).expect("scheduled").3)
                    .collect(),
            });
        }
    }
    Ok(DifficultyResult {
        sigma_eps: cfg.sigma_eps.clone(),
        n_t: cfg.n_t.clone(),
        delta: cfg.delta,
        rows,
        seeds: cfg.seeds.clone(),
    })
}
