use nalgebra::{DMatrix, DVector};
use rand::Rng;
use stlearn::lasso::{full_sweeps, lasso_solve, LassoProblem, SolverOptions};
use stlearn::numerics::{gaussian_mat, SeededRng, Vector};

/// Exhaustive minimizer over all sign patterns in {-1, 0, +1}^d: on a fixed
/// pattern the objective is a smooth quadratic with a closed-form
/// stationary point. The global minimizer is the stationary point of its own
/// sign pattern, so the best true objective over all candidates is optimal.
pub fn brute_force_lasso(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> (DVector<f64>, f64) {
    let (n, d) = a.shape();
    let objective = |x: &DVector<f64>| (a * x - b).norm_squared() / n as f64 + lambda * x.abs().sum();
    let mut best = DVector::zeros(d);
    let mut best_obj = objective(&best);
    let patterns = 3usize.pow(d as u32);
    for code in 0..patterns {
        let mut c = code;
        let signs: Vec<f64> = (0..d)
            .map(|_| {
                let s = (c % 3) as f64 - 1.0;
                c /= 3;
                s
            })
            .collect();
        let support: Vec<usize> = (0..d).filter(|&j| signs[j] != 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let a_s = a.select_columns(&support);
        let s = DVector::from_iterator(support.len(), support.iter().map(|&j| signs[j]));
        // (2/N) A_S^T (A_S x - b) + lambda s = 0
        let gram = a_s.transpose() * &a_s;
        let rhs = a_s.transpose() * b - s * (lambda * n as f64 / 2.0);
        let Some(chol) = gram.cholesky() else { continue };
        let xs = chol.solve(&rhs);
        let mut x = DVector::zeros(d);
        for (k, &j) in support.iter().enumerate() {
            x[j] = xs[k];
        }
        let obj = objective(&x);
        if obj < best_obj {
            best_obj = obj;
            best = x;
        }
    }
    (best, best_obj)
}

#[test]
fn coordinate_descent_matches_exhaustive_enumeration() {
    let mut pick = SeededRng::new(2024).generator();
    for case in 0..50u64 {
        let d = pick.random_range(1..=8);
        let n = pick.random_range(d..=d + 12);
        let rng = SeededRng::new(case);
        let a = gaussian_mat(&rng.fork(1), n, d, 1.0).unwrap();
        let b = gaussian_mat(&rng.fork(2), n, 1, 2.0).unwrap().column(0).to_owned();
        let p0 = LassoProblem::new(a.clone(), b.clone(), 0.0).unwrap();
        let lambda = p0.lambda_max() * pick.random_range(0.01..1.2);
        let p = LassoProblem::new(a.clone(), b.clone(), lambda).unwrap();

        let sol = lasso_solve(&p, SolverOptions { tol: 1e-8, max_iters: 1_000_000 }).unwrap();
        assert!(p.kkt_violation(&sol.x) <= 1e-8, "case {case}");

        let na = DMatrix::from_fn(n, d, |i, j| a[[i, j]]);
        let nb = DVector::from_iterator(n, b.iter().copied());
        let (_, best) = brute_force_lasso(&na, &nb, lambda);
        let got = p.objective(&sol.x);
        assert!((got - best).abs() <= 1e-6, "case {case}: cd {got} vs brute {best}");
    }
}

#[test]
fn objective_never_increases_over_sweeps() {
    let rng = SeededRng::new(77);
    let a = gaussian_mat(&rng.fork(1), 15, 30, 1.0).unwrap();
    let b = gaussian_mat(&rng.fork(2), 15, 1, 1.0).unwrap().column(0).to_owned();
    let p = LassoProblem::new(a, b, 0.05).unwrap();
    let mut x = Vector::zeros(30);
    let mut prev = p.objective(&x);
    for _ in 0..50 {
        x = full_sweeps(&p, &x, 1).unwrap();
        let obj = p.objective(&x);
        assert!(obj <= prev + 1e-12, "{obj} > {prev}");
        prev = obj;
    }
    let done = lasso_solve(&p, SolverOptions::default()).unwrap();
    assert!(p.objective(&done.x) <= prev + 1e-12);
}
