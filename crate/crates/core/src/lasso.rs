//! ℓ₁-regularized regression by cyclic coordinate descent, and the
//! student-teacher fit that splits a sparse linear teacher into one LASSO
//! subproblem per support block.
//!
//! Every problem here minimizes `||A x - b||^2 / N + lambda ||x||_1` with `A`
//! holding one sample per row. For the target-based baseline the same
//! normalization is used, so its `lambda` is that of the un-normalized
//! objective divided by `N`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, SparseGroundTruth};
use crate::error::{Error, Result};
use crate::numerics::{cholesky, solve_spd, sym_eig, Mat, Vector};
use crate::oracles::linear_test_error_vec;
use crate::par;

#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub a: Mat,
    pub b: Vector,
    pub lambda: f64,
}

impl LassoProblem {
    pub fn new(a: Mat, b: Vector, lambda: f64) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Shape {
                op: "LassoProblem::new",
                left: a.dim(),
                right: (b.len(), 1),
            });
        }
        if a.nrows() == 0 {
            return Err(Error::InvalidParam("LASSO needs at least one sample".into()));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParam(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { a, b, lambda })
    }

    pub fn n_samples(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        let r = self.a.dot(x) - &self.b;
        r.dot(&r) / self.n_samples() as f64 + self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// `(2/N) A^T (A x - b)`.
    pub fn smooth_gradient(&self, x: &Vector) -> Vector {
        let r = self.a.dot(x) - &self.b;
        self.a.t().dot(&r) * (2.0 / self.n_samples() as f64)
    }

    /// Largest violation of the optimality conditions at `x`.
    pub fn kkt_violation(&self, x: &Vector) -> f64 {
        kkt_from_gradient(&self.smooth_gradient(x), x, self.lambda)
    }

    /// `(2/N) ||A^T b||_inf`; any `lambda` at or above it gives `x = 0`.
    pub fn lambda_max(&self) -> f64 {
        let c = self.a.t().dot(&self.b);
        2.0 * c.iter().fold(0.0f64, |m, v| m.max(v.abs())) / self.n_samples() as f64
    }
}

fn kkt_from_gradient(grad: &Vector, x: &Vector, lambda: f64) -> f64 {
    grad.iter()
        .zip(x)
        .map(|(&g, &xj)| {
            if xj != 0.0 {
                (g + lambda * xj.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// KKT tolerance; also scales the coordinate-change test of the inner
    /// active-set passes.
    pub tol: f64,
    /// Budget of coordinate sweeps (full or active-set).
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub x: Vector,
    pub sweeps: usize,
    pub kkt_violation: f64,
}

impl LassoSolution {
    pub fn support(&self) -> Vec<usize> {
        support_of(&self.x)
    }
}

pub fn support_of(x: &Vector) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect()
}

/// `sign(z) max(|z| - t, 0)`, with `|z| == t` mapped to 0.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn lasso_solve(p: &LassoProblem, opts: SolverOptions) -> Result<LassoSolution> {
    lasso_solve_from(p, &Vector::zeros(p.dim()), opts)
}

struct CdState {
    cols: Mat,
    norms: Vec<f64>,
    thr: f64,
    x: Vector,
    r: Vector,
}

impl CdState {
    fn new(p: &LassoProblem, x0: &Vector) -> Result<Self> {
        if x0.len() != p.dim() {
            return Err(Error::Shape {
                op: "lasso warm start",
                left: (x0.len(), 1),
                right: (p.dim(), 1),
            });
        }
        let cols = p.a.t().as_standard_layout().into_owned();
        let norms = cols.rows().into_iter().map(|c| c.dot(&c)).collect();
        Ok(Self {
            cols,
            norms,
            thr: p.lambda * p.n_samples() as f64 / 2.0,
            r: &p.b - &p.a.dot(x0),
            x: x0.clone(),
        })
    }

    /// Exact minimization along coordinate `j`; returns `|change|`.
    fn update(&mut self, j: usize) -> f64 {
        let old = self.x[j];
        if self.norms[j] == 0.0 {
            self.x[j] = 0.0;
            return old.abs();
        }
        let col = self.cols.row(j);
        let rho = col.dot(&self.r) + self.norms[j] * old;
        let new = soft_threshold(rho, self.thr) / self.norms[j];
        if new != old {
            self.r.scaled_add(old - new, &col);
            self.x[j] = new;
        }
        (new - old).abs()
    }

    fn full_sweep(&mut self) -> f64 {
        (0..self.x.len()).map(|j| self.update(j)).fold(0.0, f64::max)
    }

    fn active_sweep(&mut self) -> f64 {
        support_of(&self.x).into_iter().map(|j| self.update(j)).fold(0.0, f64::max)
    }

    fn kkt_violation(&self, lambda: f64) -> f64 {
        let n = self.r.len() as f64;
        kkt_from_gradient(&(self.cols.dot(&self.r) * (-2.0 / n)), &self.x, lambda)
    }
}

/// The iterate after `sweeps` plain cyclic passes over all coordinates.
pub fn full_sweeps(p: &LassoProblem, x0: &Vector, sweeps: usize) -> Result<Vector> {
    let mut st = CdState::new(p, x0)?;
    for _ in 0..sweeps {
        st.full_sweep();
    }
    Ok(st.x)
}

/// Coordinate descent started at `x0`. Full sweeps alternate with passes
/// over the current nonzeros until the KKT violation is at most `opts.tol`.
pub fn lasso_solve_from(p: &LassoProblem, x0: &Vector, opts: SolverOptions) -> Result<LassoSolution> {
    let mut st = CdState::new(p, x0)?;
    let mut sweeps = 0;
    loop {
        let mut change = st.full_sweep();
        sweeps += 1;
        let scale = 1.0 + st.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        while change >= opts.tol * scale * 1e-2 && sweeps < opts.max_iters {
            change = st.active_sweep();
            sweeps += 1;
        }
        let violation = st.kkt_violation(p.lambda);
        if violation <= opts.tol {
            return Ok(LassoSolution {
                x: st.x,
                sweeps,
                kkt_violation: violation,
            });
        }
        if sweeps >= opts.max_iters {
            return Err(Error::NonConvergence {
                iters: sweeps,
                max_violation: violation,
            });
        }
    }
}

/// Solutions along `lambdas` (any order), warm-starting from the previous
/// larger value. Returned in the order given.
pub fn lasso_path(a: &Mat, b: &Vector, lambdas: &[f64], opts: SolverOptions) -> Result<Vec<LassoSolution>> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&i, &j| lambdas[j].total_cmp(&lambdas[i]));
    let mut out: Vec<Option<LassoSolution>> = vec![None; lambdas.len()];
    let mut warm = Vector::zeros(a.ncols());
    let mut prob = LassoProblem::new(a.clone(), b.clone(), 0.0)?;
    for i in order {
        prob.lambda = lambdas[i];
        if !(prob.lambda >= 0.0) || !prob.lambda.is_finite() {
            return Err(Error::InvalidParam(format!("lambda must be >= 0, got {}", prob.lambda)));
        }
        let sol = lasso_solve_from(&prob, &warm, opts)?;
        warm = sol.x.clone();
        out[i] = Some(sol);
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// `lambda_i = (20 / gamma) sqrt(ln(d_x) sigma^2 ||beta*_i||^2 K_x / N_s)`.
pub fn lambda_schedule(
    beta_block_norm: f64,
    gamma: f64,
    k_x: f64,
    d_x: f64,
    n_s: usize,
    sigma_eps: f64,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "mutual incoherence violated: gamma = {gamma} is not in (0, 1]"
        )));
    }
    if n_s == 0 {
        return Err(Error::InvalidParam("N_s must be >= 1".into()));
    }
    let inner = d_x.ln() * sigma_eps * sigma_eps * beta_block_norm * beta_block_norm * k_x / n_s as f64;
    Ok(20.0 / gamma * inner.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostics {
    pub block: usize,
    pub support: Vec<usize>,
    /// `max_{j not in S} ||Xe_j^T Xe_S (Xe_S^T Xe_S)^{-1}||_1`; NaN when singular.
    pub incoherence: f64,
    /// `lambda_min(Xe_S^T Xe_S / N)`.
    pub lambda_min: f64,
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncoherenceReport {
    pub gamma: f64,
    pub lambda_min: f64,
    pub k_x: f64,
    pub per_block: Vec<BlockDiagnostics>,
}

impl IncoherenceReport {
    pub fn violated(&self) -> bool {
        !(self.gamma > 0.0) || self.per_block.iter().any(|b| b.singular)
    }
}

/// Mutual incoherence, restricted eigenvalue and column-norm diagnostics of
/// the noisy design against the blocks of `gt`. Singular block Gram
/// matrices are flagged and left out of `gamma`.
pub fn incoherence_check(ds: &Dataset, gt: &SparseGroundTruth) -> Result<IncoherenceReport> {
    check_gt(ds, gt)?;
    let xe = ds.design_rows();
    let n = ds.n_samples() as f64;
    let d = gt.d_x();
    let k_x = ds
        .x
        .rows()
        .into_iter()
        .map(|row| row.dot(&row) / n)
        .fold(0.0, f64::max);

    let per_block = par::map(gt.blocks.iter().cloned().enumerate().collect(), |(i, range)| {
        let support: Vec<usize> = range.collect();
        let xs = xe.select(Axis(1), &support);
        let gram = xs.t().dot(&xs);
        let lambda_min = sym_eig(&gram).map(|e| e.values[e.values.len() - 1] / n).unwrap_or(f64::NAN);
        let singular = cholesky(&gram).is_err();
        let incoherence = if singular {
            f64::NAN
        } else {
            let off: Vec<usize> = (0..d).filter(|j| !support.contains(j)).collect();
            let xo = xe.select(Axis(1), &off);
            // rows of Xo^T Xs G^{-1} = (G^{-1} Xs^T Xo)^T
            let m = solve_spd(&gram, &xs.t().dot(&xo)).expect("gram factored above");
            m.columns()
                .into_iter()
                .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        BlockDiagnostics {
            block: i,
            support,
            incoherence,
            lambda_min,
            singular,
        }
    });
    let worst = per_block
        .iter()
        .filter(|b| !b.singular)
        .map(|b| b.incoherence)
        .fold(0.0, f64::max);
    let lambda_min = per_block.iter().map(|b| b.lambda_min).fold(f64::INFINITY, f64::min);
    Ok(IncoherenceReport {
        gamma: 1.0 - worst,
        lambda_min,
        k_x,
        per_block,
    })
}

fn check_gt(ds: &Dataset, gt: &SparseGroundTruth) -> Result<()> {
    if gt.d_x() != ds.d_x() {
        return Err(Error::Shape {
            op: "ground truth vs dataset",
            left: (gt.d_x(), 1),
            right: (ds.d_x(), ds.n_samples()),
        });
    }
    Ok(())
}

/// Regularization for the decomposed fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lambdas {
    /// The same value for every block.
    Uniform(f64),
    PerBlock(Vec<f64>),
    /// The theoretical schedule with measured `gamma` and `K_x`.
    Auto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StFit {
    pub w_blocks: Vec<Vector>,
    pub w_total: Vector,
    pub lambdas: Vec<f64>,
    pub diagnostics: IncoherenceReport,
}

impl StFit {
    pub fn supports(&self) -> Vec<Vec<usize>> {
        self.w_blocks.iter().map(support_of).collect()
    }

    /// True when every `w_i` is supported inside its teacher block.
    pub fn supports_contained(&self, gt: &SparseGroundTruth) -> bool {
        self.w_blocks
            .iter()
            .zip(&gt.blocks)
            .all(|(w, r)| support_of(w).iter().all(|j| r.contains(j)))
    }

    pub fn test_error(&self, gt: &SparseGroundTruth, sigma_eps: f64) -> f64 {
        linear_test_error_vec(&self.w_total, &gt.beta, sigma_eps)
    }
}

fn block_responses(ds: &Dataset, gt: &SparseGroundTruth) -> Vec<Vector> {
    let x = ds.clean_rows();
    (0..gt.n_blocks()).map(|i| x.dot(&gt.block_beta(i))).collect()
}

fn resolve_lambdas(ds: &Dataset, gt: &SparseGroundTruth, lambdas: &Lambdas, report: &IncoherenceReport) -> Result<Vec<f64>> {
    match lambdas {
        Lambdas::Uniform(l) => Ok(vec![*l; gt.n_blocks()]),
        Lambdas::PerBlock(v) => {
            if v.len() != gt.n_blocks() {
                return Err(Error::InvalidParam(format!(
                    "expected {} block lambdas, got {}",
                    gt.n_blocks(),
                    v.len()
                )));
            }
            Ok(v.clone())
        }
        Lambdas::Auto => (0..gt.n_blocks())
            .map(|i| {
                let norm = gt.block_beta(i).dot(&gt.block_beta(i)).sqrt();
                lambda_schedule(norm, report.gamma, report.k_x, ds.d_x() as f64, ds.n_samples(), ds.sigma_eps)
            })
            .collect(),
    }
}

/// Solves `min_w ||Xe w - X beta*_i||^2 / N + lambda_i ||w||_1` for every
/// block `i` and sums the solutions.
pub fn st_decomposed_fit(ds: &Dataset, gt: &SparseGroundTruth, lambdas: &Lambdas, opts: SolverOptions) -> Result<StFit> {
    let report = incoherence_check(ds, gt)?;
    let lam = resolve_lambdas(ds, gt, lambdas, &report)?;
    let a = ds.design_rows();
    let responses = block_responses(ds, gt);
    let w_blocks = par::try_map(responses.into_iter().zip(lam.iter().copied()).enumerate().collect(), |(i, (b, l))| {
        LassoProblem::new(a.clone(), b, l)
            .and_then(|p| lasso_solve(&p, opts))
            .map(|s| s.x)
            .map_err(|e| Error::Block {
                index: i,
                source: Box::new(e),
            })
    })?;
    Ok(assemble(w_blocks, lam, report, ds.d_x()))
}

fn assemble(w_blocks: Vec<Vector>, lambdas: Vec<f64>, diagnostics: IncoherenceReport, d: usize) -> StFit {
    let mut w_total = Array1::zeros(d);
    for w in &w_blocks {
        w_total += w;
    }
    StFit {
        w_blocks,
        w_total,
        lambdas,
        diagnostics,
    }
}

/// Decomposed fits for each uniform `lambda` in `grid`, with warm starts
/// along the grid inside every block.
pub fn st_decomposed_path(ds: &Dataset, gt: &SparseGroundTruth, grid: &[f64], opts: SolverOptions) -> Result<Vec<StFit>> {
    if grid.is_empty() {
        return Err(Error::InvalidParam("lambda grid is empty".into()));
    }
    let report = incoherence_check(ds, gt)?;
    let a = ds.design_rows();
    let responses = block_responses(ds, gt);
    let paths = par::try_map(responses.into_iter().enumerate().collect(), |(i, b)| {
        lasso_path(&a, &b, grid, opts).map_err(|e| Error::Block {
            index: i,
            source: Box::new(e),
        })
    })?;
    Ok((0..grid.len())
        .map(|k| {
            let w_blocks = paths.iter().map(|p| p[k].x.clone()).collect();
            assemble(w_blocks, vec![grid[k]; gt.n_blocks()], report.clone(), ds.d_x())
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetFit {
    pub w: Vector,
    pub lambda: f64,
    pub best_error: f64,
    /// Test error at each grid value, in grid order.
    pub errors: Vec<f64>,
}

/// LASSO on the clean targets `X beta*` with noisy design, swept over
/// `grid`; keeps the fit with the lowest test error.
pub fn target_lasso_fit(ds: &Dataset, gt: &SparseGroundTruth, grid: &[f64], opts: SolverOptions) -> Result<TargetFit> {
    check_gt(ds, gt)?;
    if grid.is_empty() {
        return Err(Error::InvalidParam("lambda grid is empty".into()));
    }
    let b = ds.clean_rows().dot(&gt.beta);
    let path = lasso_path(&ds.design_rows(), &b, grid, opts)?;
    let errors: Vec<f64> = path
        .iter()
        .map(|s| linear_test_error_vec(&s.x, &gt.beta, ds.sigma_eps))
        .collect();
    let best = (0..grid.len()).min_by(|&i, &j| errors[i].total_cmp(&errors[j])).unwrap();
    Ok(TargetFit {
        w: path[best].x.clone(),
        lambda: grid[best],
        best_error: errors[best],
        errors,
    })
}

/// Writes `index,beta_star,w_total` rows to `csv_path` and the diagnostics
/// with per-block supports to `json_path`.
pub fn export_fit(fit: &StFit, gt: &SparseGroundTruth, csv_path: &Path, json_path: &Path) -> Result<()> {
    let f = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    w.write_record(["index", "beta_star", "w_total"])?;
    for j in 0..gt.d_x() {
        w.write_record([j.to_string(), gt.beta[j].to_string(), fit.w_total[j].to_string()])?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    let blob = serde_json::json!({
        "gamma": fit.diagnostics.gamma,
        "lambda_min": fit.diagnostics.lambda_min,
        "k_x": fit.diagnostics.k_x,
        "lambdas": fit.lambdas,
        "supports": fit.supports(),
        "per_block": fit.diagnostics.per_block,
    });
    let mut text = serde_json::to_string_pretty(&blob)?;
    text.push('\n');
    std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))
}
