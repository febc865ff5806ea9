use ndarray::{Array1, Array2, Axis};

use super::{Mat, Vector};
use crate::error::{Error, Result};

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vector,
    /// Eigenvectors as columns, aligned with `values`.
    pub vectors: Mat,
}

const SYM_RTOL: f64 = 1e-10;

fn check_symmetric(m: &Mat) -> Result<()> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Shape {
            op: "sym_eig",
            left: m.dim(),
            right: (m.ncols(), m.nrows()),
        });
    }
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if worst > SYM_RTOL * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: worst,
        });
    }
    Ok(())
}

/// Cyclic Jacobi eigensolver.
pub fn sym_eig(m: &Mat) -> Result<SymEig> {
    check_symmetric(m)?;
    let n = m.nrows();
    let mut a = m.clone();
    // symmetrize so the rotations act on an exactly symmetric matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = avg;
            a[[j, i]] = avg;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let fro = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off.sqrt() <= 1e-16 * fro.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok(SymEig { values, vectors })
}

/// Leading `k` eigenpairs of a symmetric matrix.
pub fn sym_eig_topk(m: &Mat, k: usize) -> Result<(Mat, Vector)> {
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParam(format!(
            "sym_eig_topk: k must satisfy 1 <= k <= {n}, got {k}"
        )));
    }
    let eig = sym_eig(m)?;
    let idx: Vec<usize> = (0..k).collect();
    Ok((
        eig.vectors.select(Axis(1), &idx),
        eig.values.select(Axis(0), &idx),
    ))
}

/// Thin SVD `a = u diag(s) v^T` with `k = min(rows, cols)`, `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vector,
    pub v: Mat,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd_thin(a: &Mat) -> Svd {
    let (r, c) = a.dim();
    if c > r {
        let t = svd_thin(&a.t().to_owned());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    // columns stored contiguously
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| a.column(j).to_vec()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..c)
        .map(|j| {
            let mut e = vec![0.0; c];
            e[j] = 1.0;
            e
        })
        .collect();

    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..c {
            for q in (p + 1)..c {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut al = 0.0;
                    let mut be = 0.0;
                    let mut ga = 0.0;
                    for i in 0..r {
                        al += cp[i] * cp[i];
                        be += cq[i] * cq[i];
                        ga += cp[i] * cq[i];
                    }
                    (al, be, ga)
                };
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut cols, p, q, cs, sn);
                rotate(&mut vcols, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sig: Vec<f64> = cols
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| sig[j].total_cmp(&sig[i]).then(i.cmp(&j)));

    let mut u = Mat::zeros((r, c));
    let mut v = Mat::zeros((c, c));
    let mut s = Vector::zeros(c);
    for (k, &j) in order.iter().enumerate() {
        s[k] = sig[j];
        if sig[j] > 0.0 {
            for i in 0..r {
                u[[i, k]] = cols[j][i] / sig[j];
            }
        }
        for i in 0..c {
            v[[i, k]] = vcols[j][i];
        }
    }
    sig.clear();
    Svd { u, s, v }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, cs: f64, sn: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = cs * xp - sn * xq;
        *y = sn * xp + cs * xq;
    }
}

/// Orthonormal basis of `col(x)`, dropping directions with singular value
/// below `rtol * s_max`.
pub fn orthonormal_col_basis(x: &Mat, rtol: f64) -> Mat {
    let svd = svd_thin(x);
    let smax = svd.s.get(0).copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..svd.s.len())
        .filter(|&i| smax > 0.0 && svd.s[i] > rtol * smax)
        .collect();
    svd.u.select(Axis(1), &keep)
}

/// Extends the orthonormal columns of `basis` to `k` columns by Gram–Schmidt
/// against the standard basis vectors, taken in index order.
pub fn complete_orthonormal(basis: &Mat, k: usize) -> Result<Mat> {
    let n = basis.nrows();
    if k > n || basis.ncols() > k {
        return Err(Error::InvalidParam(format!(
            "cannot complete {} columns to {k} in dimension {n}",
            basis.ncols()
        )));
    }
    let mut cols: Vec<Vector> = basis.columns().into_iter().map(|c| c.to_owned()).collect();
    let mut e = 0;
    while cols.len() < k && e < n {
        let mut cand = Vector::zeros(n);
        cand[e] = 1.0;
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dot(&cand);
                cand.scaled_add(-proj, q);
            }
        }
        let norm = cand.dot(&cand).sqrt();
        if norm > 1e-8 {
            cols.push(cand / norm);
        }
        e += 1;
    }
    let mut out = Mat::zeros((n, k));
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).assign(c);
    }
    Ok(out)
}

/// Minimum-Frobenius-norm `W` minimizing `||W a - b||_F`, i.e. `b a^+`.
pub fn least_squares_min_norm(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.is_empty() {
        return Err(Error::InvalidParam("least_squares_min_norm: empty design".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Shape {
            op: "least_squares_min_norm",
            left: a.dim(),
            right: b.dim(),
        });
    }
    let svd = svd_thin(a);
    let smax = svd.s[0];
    let cutoff = (a.nrows().max(a.ncols()) as f64) * f64::EPSILON * smax;
    // b v diag(1/s) u^T over the retained directions
    let mut bv = b.dot(&svd.v);
    for (j, mut col) in bv.columns_mut().into_iter().enumerate() {
        let s = svd.s[j];
        if s > cutoff {
            col /= s;
        } else {
            col.fill(0.0);
        }
    }
    let w = bv.dot(&svd.u.t());
    super::ensure_finite(&w, "least_squares_min_norm")?;
    Ok(w)
}

/// Lower-triangular Cholesky factor of an SPD matrix.
pub fn cholesky(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Shape {
            op: "cholesky",
            left: m.dim(),
            right: (m.ncols(), m.nrows()),
        });
    }
    let scale = (0..n).fold(0.0f64, |a, i| a.max(m[[i, i]].abs())).max(f64::MIN_POSITIVE);
    let mut l = Mat::zeros((n, n));
    for j in 0..n {
        let mut d = m[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 1e-14 * scale {
            return Err(Error::Singular {
                what: "cholesky pivot",
                smallest_singular_value: d.max(0.0).sqrt(),
            });
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `m x = rhs` for SPD `m` (rhs columns solved independently).
pub fn solve_spd(m: &Mat, rhs: &Mat) -> Result<Mat> {
    if m.nrows() != rhs.nrows() {
        return Err(Error::Shape {
            op: "solve_spd",
            left: m.dim(),
            right: rhs.dim(),
        });
    }
    let l = cholesky(m)?;
    let n = m.nrows();
    let mut x = rhs.clone();
    for mut col in x.columns_mut() {
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[[i, k]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
    }
    Ok(x)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration_max_eig(m: &Mat, max_iters: usize, tol: f64) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Vector::from_shape_fn(n, |i| 1.0 + 0.5 / (1.0 + i as f64));
    v /= v.dot(&v).sqrt();
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let w = m.dot(&v);
        let next = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs().max(1.0) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fro_norm, gaussian_mat, SeededRng};
    use ndarray::array;

    fn orthonormality_error(q: &Mat) -> f64 {
        let g = q.t().dot(q);
        fro_norm(&(g - Mat::eye(q.ncols())))
    }

    #[test]
    fn eig_identity() {
        let (v, l) = sym_eig_topk(&Mat::eye(3), 2).unwrap();
        assert!((l[0] - 1.0).abs() < 1e-12 && (l[1] - 1.0).abs() < 1e-12);
        assert!(orthonormality_error(&v) < 1e-12);
        let resid = Mat::eye(3).dot(&v) - &v;
        assert!(fro_norm(&resid) < 1e-12);
    }

    #[test]
    fn eig_diagonal() {
        let m = array![[4.0, 0.0], [0.0, 1.0]];
        let (v, l) = sym_eig_topk(&m, 1).unwrap();
        assert!((l[0] - 4.0).abs() < 1e-12);
        assert!((v[[0, 0]].abs() - 1.0).abs() < 1e-12 && v[[1, 0]].abs() < 1e-12);
    }

    #[test]
    fn eig_two_by_two() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let (v, l) = sym_eig_topk(&m, 2).unwrap();
        assert!((l[0] - 3.0).abs() < 1e-12 && (l[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[[0, 0]].abs() - h).abs() < 1e-12 && (v[[0, 0]] - v[[1, 0]]).abs() < 1e-12);
        assert!((v[[0, 1]].abs() - h).abs() < 1e-12 && (v[[0, 1]] + v[[1, 1]]).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let m = array![[1.0, 2.0], [0.0, 1.0]];
        match sym_eig(&m) {
            Err(Error::NotSymmetric { max_asymmetry }) => assert_eq!(max_asymmetry, 2.0),
            other => panic!("expected NotSymmetric, got {other:?}"),
        }
    }

    #[test]
    fn eig_residuals_random() {
        let g = gaussian_mat(&SeededRng::new(5), 9, 9, 1.0).unwrap();
        let m = &g + &g.t();
        let (v, l) = sym_eig_topk(&m, 9).unwrap();
        assert!(orthonormality_error(&v) < 1e-8);
        let norm = fro_norm(&m);
        for i in 0..9 {
            let r = m.dot(&v.column(i)) - l[i] * &v.column(i);
            assert!(r.dot(&r).sqrt() < 1e-8 * norm);
            if i > 0 {
                assert!(l[i - 1] >= l[i]);
            }
        }
    }

    #[test]
    fn svd_reconstructs() {
        for (r, c) in [(6, 4), (4, 6), (5, 5), (3, 1)] {
            let a = gaussian_mat(&SeededRng::new((r * 10 + c) as u64), r, c, 1.0).unwrap();
            let svd = svd_thin(&a);
            let rec = svd.u.dot(&Mat::from_diag(&svd.s)).dot(&svd.v.t());
            assert!(fro_norm(&(rec - &a)) < 1e-10, "{r}x{c}");
            assert!(orthonormality_error(&svd.v) < 1e-10);
        }
    }

    #[test]
    fn min_norm_identity_and_unobserved() {
        let w = least_squares_min_norm(&Mat::eye(2), &array![[1.0, 2.0]]).unwrap();
        assert!(fro_norm(&(w - array![[1.0, 2.0]])) < 1e-12);
        let w = least_squares_min_norm(&array![[1.0], [0.0]], &array![[3.0]]).unwrap();
        assert!(fro_norm(&(w - array![[3.0, 0.0]])) < 1e-12);
    }

    #[test]
    fn min_norm_shape_error_names_both() {
        let err = least_squares_min_norm(&Mat::zeros((2, 3)), &Mat::zeros((1, 4))).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("(1, 4)"), "{msg}");
    }

    #[test]
    fn cholesky_solve() {
        let g = gaussian_mat(&SeededRng::new(8), 5, 9, 1.0).unwrap();
        let m = g.dot(&g.t());
        let rhs = gaussian_mat(&SeededRng::new(9), 5, 2, 1.0).unwrap();
        let x = solve_spd(&m, &rhs).unwrap();
        assert!(fro_norm(&(m.dot(&x) - rhs)) < 1e-9);
        assert!(cholesky(&Mat::zeros((2, 2))).is_err());
    }

    #[test]
    fn completion_is_canonical() {
        let b = array![[0.0], [1.0], [0.0]];
        let q = complete_orthonormal(&b, 3).unwrap();
        assert_eq!(q.column(1).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(q.column(2).to_vec(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn power_iteration_matches_jacobi() {
        let g = gaussian_mat(&SeededRng::new(2), 6, 10, 1.0).unwrap();
        let m = g.dot(&g.t());
        let top = sym_eig(&m).unwrap().values[0];
        assert!((power_iteration_max_eig(&m, 5000, 1e-14) - top).abs() < 1e-8 * top);
    }
}
