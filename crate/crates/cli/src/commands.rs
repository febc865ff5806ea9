use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use stlearn::container;
use stlearn::datagen::{make_regression_dataset, make_relu_teacher, make_sparse_beta, Dataset, LinearTarget};
use stlearn::experiments::{emit_outputs, resolve_typed, ExperimentConfig, ExperimentId};
use stlearn::lasso::{export_fit, st_decomposed_fit, Lambdas, SolverOptions};
use stlearn::linear_net::{suggest_lr, train_gd, Init, LinearNetwork, TrainConfig};
use stlearn::numerics::{fro_norm, gaussian_mat, spectral_norm, Mat, SeededRng};
use stlearn::oracles::{
    linear_test_error, min_norm_minimizer, ols_minimizer, optimal_noisy_predictor,
    NoisyLinearEval,
};
use stlearn::relu_net::{self, write_trace_csv, Batch, EvalSet, ReluLoss, ReluTrainConfig, ShallowReluNet};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lab(#[from] stlearn::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Lab(stlearn::Error::Config(_) | stlearn::Error::InvalidParam(_)) => 2,
            CliError::Lab(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            _ => "runtime",
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

pub struct Invocation {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
    pub print_config: bool,
}

impl Invocation {
    fn file(&self) -> Result<Option<Value>, CliError> {
        let Some(path) = &self.config else { return Ok(None) };
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let v = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok(Some(v))
    }

    /// Typed config for a subcommand whose schema has a top-level `seed`.
    fn resolve<T>(&self) -> Result<T, CliError>
    where
        T: Serialize + serde::de::DeserializeOwned + Default,
    {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        Ok(resolve_typed(self.file()?.as_ref(), &overrides)?)
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        fs::create_dir_all(&self.out).map_err(|e| stlearn::Error::Io {
            path: self.out.clone(),
            source: e,
        })?;
        Ok(&self.out)
    }
}

fn print_json(v: &impl Serialize) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(v).map_err(stlearn::Error::from)?);
    Ok(())
}

fn write_summary(dir: &Path, summary: &Value) -> Result<(), CliError> {
    let path = dir.join("summary.json");
    let mut bytes = serde_json::to_vec_pretty(summary).map_err(stlearn::Error::from)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| stlearn::Error::Io { path: path.clone(), source: e })?;
    println!("{}", path.display());
    Ok(())
}

fn positive(name: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(CliError::Lab(stlearn::Error::Config(format!("`{name}` must be positive"))));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Linear,
    Relu,
    Sparse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub target: TargetKind,
    pub d_x: usize,
    /// Output dimension of the linear target.
    pub d_y: usize,
    pub n_s: usize,
    pub sigma_eps: f64,
    /// Hidden width of the ReLU target.
    pub width: usize,
    /// Support size of the sparse target.
    pub sparsity: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            target: TargetKind::Linear,
            d_x: 20,
            d_y: 3,
            n_s: 60,
            sigma_eps: 0.3,
            width: 64,
            sparsity: 5,
            seed: 0,
        }
    }
}

pub fn synth(inv: &Invocation) -> Result<(), CliError> {
    let cfg: SynthConfig = inv.resolve()?;
    if inv.print_config {
        return print_json(&cfg);
    }
    positive("d_x", cfg.d_x)?;
    positive("n_s", cfg.n_s)?;
    let rng = SeededRng::new(cfg.seed);
    let dir = inv.out_dir()?;
    let truth_stem = dir.join("truth");
    let ds = match cfg.target {
        TargetKind::Linear => {
            let w = gaussian_mat(&rng.fork_named("w-star"), cfg.d_y, cfg.d_x, 1.0)?;
            container::write(&truth_stem, json!({ "kind": "linear-target" }), &[("W", &w)])?;
            make_regression_dataset(&rng, cfg.d_x, cfg.n_s, cfg.sigma_eps, &LinearTarget(w))?
        }
        TargetKind::Relu => {
            let net = ShallowReluNet::xavier(&rng.fork_named("truth"), cfg.d_x, cfg.width, 1)?;
            net.save(&truth_stem)?;
            make_regression_dataset(&rng, cfg.d_x, cfg.n_s, cfg.sigma_eps, &net)?
        }
        TargetKind::Sparse => {
            let gt = make_sparse_beta(cfg.d_x, cfg.sparsity, 1.0)?;
            let beta = LinearTarget::from_beta(&gt.beta).0;
            container::write(&truth_stem, json!({ "kind": "sparse-target", "s": gt.s }), &[("beta", &beta)])?;
            make_regression_dataset(&rng, cfg.d_x, cfg.n_s, cfg.sigma_eps, &LinearTarget::from_beta(&gt.beta))?
        }
    };
    ds.save(&dir.join("dataset"))?;
    write_summary(
        dir,
        &json!({
            "config": cfg,
            "d_x": ds.d_x(),
            "d_y": ds.d_y(),
            "n_s": ds.n_samples(),
            "files": ["dataset.bin", "dataset.json", "truth.bin", "truth.json"],
        }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainLinearConfig {
    /// Dataset stem written by `synth`; when empty a linear problem is
    /// generated from the fields below.
    pub dataset: String,
    pub d_x: usize,
    pub d_y: usize,
    pub n_s: usize,
    pub sigma_eps: f64,
    pub hidden: Vec<usize>,
    pub init: Init,
    /// Feature-term weight; 0 trains the base loss.
    pub lambda: f64,
    /// Step size; 0 picks a stable one from the data.
    pub lr: f64,
    pub max_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainLinearConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            d_x: 20,
            d_y: 3,
            n_s: 60,
            sigma_eps: 0.3,
            hidden: vec![10],
            init: Init::Balanced { delta: 0.01 },
            lambda: 0.0,
            lr: 0.0,
            max_steps: 200_000,
            eval_every: 100,
            seed: 0,
        }
    }
}

/// The dataset and, when generated here, the true linear map.
fn linear_problem(
    dataset: &str,
    d_x: usize,
    d_y: usize,
    n_s: usize,
    sigma_eps: f64,
    seed: u64,
) -> Result<(Dataset, Option<Mat>), CliError> {
    if !dataset.is_empty() {
        return Ok((Dataset::load(Path::new(dataset))?, None));
    }
    positive("d_x", d_x)?;
    positive("d_y", d_y)?;
    positive("n_s", n_s)?;
    let rng = SeededRng::new(seed);
    let w = gaussian_mat(&rng.fork_named("w-star"), d_y, d_x, 1.0)?;
    let ds = make_regression_dataset(&rng, d_x, n_s, sigma_eps, &LinearTarget(w.clone()))?;
    Ok((ds, Some(w)))
}

/// Closed-form minimizer for the regime the data falls in.
fn oracle_for(ds: &Dataset, rank: usize) -> Result<(&'static str, Mat, f64), CliError> {
    if ds.n_samples() >= ds.d_x() {
        let fit = ols_minimizer(ds)?;
        Ok(("least-squares", fit.w, fit.condition_number))
    } else {
        let fit = min_norm_minimizer(ds, rank)?;
        Ok(("min-norm", fit.w, fit.condition_number))
    }
}

pub fn train_linear(inv: &Invocation) -> Result<(), CliError> {
    let cfg: TrainLinearConfig = inv.resolve()?;
    if inv.print_config {
        return print_json(&cfg);
    }
    if cfg.hidden.is_empty() || cfg.hidden.contains(&0) {
        return Err(stlearn::Error::Config("`hidden` needs at least one positive width".into()).into());
    }
    let (ds, w_star) = linear_problem(&cfg.dataset, cfg.d_x, cfg.d_y, cfg.n_s, cfg.sigma_eps, cfg.seed)?;
    let mut dims = vec![ds.d_x()];
    dims.extend(&cfg.hidden);
    dims.push(ds.d_y());
    let net = cfg.init.build(&SeededRng::new(cfg.seed).fork_named("init"), &dims)?;
    let (oracle_kind, oracle, _) = oracle_for(&ds, ds.d_y().min(*cfg.hidden.iter().min().expect("non-empty")))?;

    let teacher = if cfg.lambda > 0.0 {
        if cfg.hidden.len() != 1 {
            return Err(stlearn::Error::Config("student-teacher training needs exactly one hidden layer".into()).into());
        }
        let clean = match &w_star {
            Some(w) => w.clone(),
            None => stlearn::numerics::least_squares_min_norm(&ds.x, &ds.y)?,
        };
        Some(LinearNetwork::balanced_factorization(&clean, cfg.hidden[0])?)
    } else {
        None
    };
    let lr = if cfg.lr > 0.0 { cfg.lr } else { suggest_lr(&ds, cfg.lambda, spectral_norm(&oracle)) };
    let train = TrainConfig {
        lr,
        max_steps: cfg.max_steps,
        grad_tol: TrainConfig::default_grad_tol(&ds),
        lambda: cfg.lambda,
        split_layer: 1,
        init: cfg.init,
        eval_every: cfg.eval_every.max(1),
    };
    let eval = match &w_star {
        Some(w) => Some(NoisyLinearEval::new(w.clone(), ds.sigma_eps)?),
        None => None,
    };
    let (out, trace) = train_gd(&net, &ds, teacher.as_ref(), &train, eval.as_ref())?;
    let dir = inv.out_dir()?;
    out.save(&dir.join("network"))?;
    trace.write_csv(&dir.join("trace.csv"))?;
    let product = out.product();
    let last = trace.last().expect("trace holds the final step");
    write_summary(
        dir,
        &json!({
            "config": cfg,
            "lr": lr,
            "steps": trace.steps,
            "converged": trace.converged,
            "base_loss": last.base_loss,
            "st_loss": last.st_loss,
            "oracle": oracle_kind,
            "oracle_distance": fro_norm(&(&product - &oracle)),
            "oracle_norm": fro_norm(&oracle),
            "test_error": eval.as_ref().map(|e| linear_test_error(&product, e)).transpose()?,
        }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainReluConfig {
    pub d_x: usize,
    pub m: usize,
    pub n_s: usize,
    pub sigma_eps: f64,
    pub loss: ReluLoss,
    /// Teacher group size for the simplified loss.
    pub g: usize,
    pub lr: f64,
    pub epochs: usize,
    /// 0 for full batch.
    pub batch_size: usize,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for TrainReluConfig {
    fn default() -> Self {
        Self {
            d_x: 50,
            m: 500,
            n_s: 64,
            sigma_eps: 0.5,
            loss: ReluLoss::Base,
            g: 1,
            lr: 0.02,
            epochs: 500,
            batch_size: 0,
            eval_every: 10,
            eval_samples: 1000,
            seed: 0,
        }
    }
}

pub fn train_relu(inv: &Invocation) -> Result<(), CliError> {
    let cfg: TrainReluConfig = inv.resolve()?;
    if inv.print_config {
        return print_json(&cfg);
    }
    positive("n_s", cfg.n_s)?;
    positive("eval_samples", cfg.eval_samples)?;
    let rng = SeededRng::new(cfg.seed);
    let (teacher, student) = match cfg.loss {
        ReluLoss::SimplifiedSt => {
            let t = ShallowReluNet::from_teacher(&make_relu_teacher(&rng.fork_named("teacher"), cfg.d_x, cfg.m, cfg.g, true)?)?;
            let std = (2.0 / (cfg.d_x + cfg.m) as f64).sqrt();
            let init = gaussian_mat(&rng.fork_named("student"), cfg.m, cfg.d_x, std)?;
            let s = ShallowReluNet::pooled(init, t.w2.clone(), cfg.g)?;
            (t, s)
        }
        _ => (
            ShallowReluNet::xavier(&rng.fork_named("teacher"), cfg.d_x, cfg.m, 1)?,
            ShallowReluNet::xavier(&rng.fork_named("student"), cfg.d_x, cfg.m, 1)?,
        ),
    };
    let ds = make_regression_dataset(&rng.fork_named("train"), cfg.d_x, cfg.n_s, cfg.sigma_eps, &teacher)?;
    let monitor = EvalSet::new(&teacher, cfg.d_x, cfg.sigma_eps, cfg.eval_samples, &rng.fork_named("eval"))?;
    let train = ReluTrainConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch: if cfg.batch_size == 0 { Batch::Full } else { Batch::Size(cfg.batch_size) },
        eval_every: cfg.eval_every,
        seed: cfg.seed,
    };
    let t = (!matches!(cfg.loss, ReluLoss::Base)).then_some(&teacher);
    let out = relu_net::train_relu(&student, t, &ds, &train, cfg.loss, &monitor)?;
    let dir = inv.out_dir()?;
    out.best.save(&dir.join("best"))?;
    write_trace_csv(&out.trace, &dir.join("trace.csv"))?;
    write_summary(
        dir,
        &json!({
            "config": cfg,
            "best_step": out.best_step,
            "best_error": out.best_error,
            "final_error": out.final_error,
            "initial_error": out.trace[0].eval_error,
        }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub d_x: usize,
    pub s: usize,
    pub g: usize,
    /// 0 uses `40 g^2 ceil(ln d_x)`.
    pub n_s: usize,
    pub sigma_eps: f64,
    pub lambda: Lambdas,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            d_x: 200,
            s: 10,
            g: 1,
            n_s: 0,
            sigma_eps: 0.3,
            lambda: Lambdas::Auto,
            tol: 1e-8,
            max_iters: 100_000,
            seed: 0,
        }
    }
}

pub fn lasso(inv: &Invocation) -> Result<(), CliError> {
    let cfg: LassoConfig = inv.resolve()?;
    if inv.print_config {
        return print_json(&cfg);
    }
    positive("g", cfg.g)?;
    let n = if cfg.n_s > 0 {
        cfg.n_s
    } else {
        40 * cfg.g * cfg.g * (cfg.d_x as f64).ln().ceil() as usize
    };
    let gt = make_sparse_beta(cfg.d_x, cfg.s, 1.0)?.with_group_size(cfg.g)?;
    let ds = make_regression_dataset(&SeededRng::new(cfg.seed), cfg.d_x, n, cfg.sigma_eps, &LinearTarget::from_beta(&gt.beta))?;
    let opts = SolverOptions {
        tol: cfg.tol,
        max_iters: cfg.max_iters,
    };
    let fit = st_decomposed_fit(&ds, &gt, &cfg.lambda, opts)?;
    let dir = inv.out_dir()?;
    export_fit(&fit, &gt, &dir.join("fit.csv"), &dir.join("diagnostics.json"))?;
    let (_, optimal) = optimal_noisy_predictor(&gt.beta, cfg.sigma_eps);
    write_summary(
        dir,
        &json!({
            "config": cfg,
            "n_s": n,
            "lambdas": fit.lambdas,
            "test_error": fit.test_error(&gt, cfg.sigma_eps),
            "optimal_error": optimal,
            "supports_contained": fit.supports_contained(&gt),
            "incoherence_violated": fit.diagnostics.violated(),
        }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Dataset stem written by `synth`; when empty a linear problem is
    /// generated from the fields below.
    pub dataset: String,
    pub d_x: usize,
    pub d_y: usize,
    pub n_s: usize,
    pub sigma_eps: f64,
    /// Rank of the min-norm oracle; 0 uses `d_y`.
    pub rank: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            d_x: 20,
            d_y: 3,
            n_s: 60,
            sigma_eps: 0.3,
            rank: 0,
            seed: 0,
        }
    }
}

pub fn oracle(inv: &Invocation) -> Result<(), CliError> {
    let cfg: OracleConfig = inv.resolve()?;
    if inv.print_config {
        return print_json(&cfg);
    }
    let (ds, w_star) = linear_problem(&cfg.dataset, cfg.d_x, cfg.d_y, cfg.n_s, cfg.sigma_eps, cfg.seed)?;
    let rank = if cfg.rank == 0 { ds.d_y() } else { cfg.rank };
    let (kind, w, condition) = oracle_for(&ds, rank)?;
    let dir = inv.out_dir()?;
    container::write(&dir.join("oracle"), json!({ "kind": kind }), &[("W", &w)])?;
    let mut summary = json!({
        "config": cfg,
        "oracle": kind,
        "condition_number": condition,
        "training_loss": fro_norm(&(w.dot(&ds.xeps) - &ds.y)).powi(2),
    });
    if let Some(w_star) = w_star {
        let eval = NoisyLinearEval::new(w_star.clone(), ds.sigma_eps)?;
        let optimal: f64 = (0..w_star.nrows())
            .map(|i| optimal_noisy_predictor(&w_star.row(i).to_owned(), ds.sigma_eps).1)
            .sum();
        summary["test_error"] = json!(linear_test_error(&w, &eval)?);
        summary["optimal_error"] = json!(optimal);
    }
    write_summary(dir, &summary)
}

pub fn exp(id: &str, inv: &Invocation) -> Result<(), CliError> {
    let id: ExperimentId = id.parse()?;
    let cfg = ExperimentConfig::resolve(id, inv.file()?.as_ref(), &inv.overrides, inv.seed)?;
    if inv.print_config {
        return print_json(&cfg);
    }
    let result = cfg.run()?;
    for path in emit_outputs(&result, &inv.out)? {
        println!("{}", path.display());
    }
    Ok(())
}
