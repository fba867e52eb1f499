//! Simplex-constrained quadratic optimization.

use crate::{Error, Result};
use nalgebra::DMatrix;

/// Iteration cap for the projected-gradient loop.
const MAX_ITERS: usize = 1_000_000;
/// Cadence of the Frank-Wolfe gap check.
const GAP_CHECK_EVERY: usize = 50;
/// Two eigenvalues below this mark the minimizer as possibly non-unique.
const DEGENERACY_EIGENVALUE: f64 = 1e-10;
/// Eigenvalues below `-REL_PSD_TOL * ||A||_F` fail the PSD precondition.
const REL_PSD_TOL: f64 = 1e-8;

/// Outcome of a simplex-constrained quadratic program.
#[derive(Debug, Clone)]
pub struct QpResult {
    pub lambda: Vec<f64>,
    pub objective: f64,
    /// Frank-Wolfe duality gap at the returned point; at most the solver
    /// tolerance on success.
    pub certificate_gap: f64,
    /// True when the quadratic has at least two near-zero eigenvalues, so the
    /// minimizer may be non-unique.
    pub degenerate: bool,
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let m = v.len();
    assert!(m > 0, "cannot project an empty vector");
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        css += uk;
        let t = (css - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Symmetrizes and clips negative eigenvalues to zero. Used to repair
/// Monte-Carlo Gram matrices before they reach the QP solver.
pub fn symmetrize_and_clip_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    let mut clipped = false;
    for v in vals.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            clipped = true;
        }
    }
    if !clipped {
        return sym;
    }
    let v = &eig.eigenvectors;
    let mut out = DMatrix::zeros(sym.nrows(), sym.ncols());
    for k in 0..vals.len() {
        let col = v.column(k);
        for i in 0..sym.nrows() {
            for j in 0..sym.ncols() {
                out[(i, j)] += vals[k] * col[i] * col[j];
            }
        }
    }
    (out.clone() + out.transpose()) * 0.5
}

/// Minimizes `x^T A x` over the probability simplex.
pub fn min_quadratic_simplex(a: &DMatrix<f64>, tol: f64) -> Result<QpResult> {
    min_quadratic_simplex_with_linear(a, None, 0.0, tol)
}

/// Minimizes `x^T A x + q^T x + c0` over the probability simplex by projected
/// gradient descent with step `1/L` for the gradient Lipschitz constant
/// `L = 2 lambda_max(A)`, certified by the Frank-Wolfe gap.
pub fn min_quadratic_simplex_with_linear(
    a: &DMatrix<f64>,
    q: Option<&[f64]>,
    c0: f64,
    tol: f64,
) -> Result<QpResult> {
    let m = a.nrows();
    if m == 0 {
        return Err(Error::Empty("quadratic matrix"));
    }
    if a.ncols() != m {
        return Err(Error::LengthMismatch {
            context: "quadratic matrix shape",
            left: m,
            right: a.ncols(),
        });
    }
    if let Some(q) = q
        && q.len() != m
    {
        return Err(Error::LengthMismatch {
            context: "linear term",
            left: q.len(),
            right: m,
        });
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::BadConfig(format!("qp tol must be positive, got {tol}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadConfig("non-finite entry in quadratic matrix".into()));
    }
    let sym = (a + a.transpose()) * 0.5;
    let norm = sym.norm();
    let eig_vals = {
        let mut vals: Vec<f64> = sym
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        vals
    };
    let lambda_min = eig_vals[0];
    let lambda_max = *eig_vals.last().unwrap();
    if lambda_min < -REL_PSD_TOL * norm {
        return Err(Error::NotPsd {
            min_eig: lambda_min,
            norm,
        });
    }
    let degenerate = m >= 2 && eig_vals[0] < DEGENERACY_EIGENVALUE && eig_vals[1] < DEGENERACY_EIGENVALUE;

    let objective = |x: &[f64]| -> f64 {
        let mut acc = c0;
        for i in 0..m {
            let mut ax = 0.0;
            for j in 0..m {
                ax += sym[(i, j)] * x[j];
            }
            acc += x[i] * ax;
            if let Some(q) = q {
                acc += q[i] * x[i];
            }
        }
        acc
    };
    let gradient = |x: &[f64], g: &mut [f64]| {
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += sym[(i, j)] * x[j];
            }
            g[i] = 2.0 * acc + q.map_or(0.0, |q| q[i]);
        }
    };
    // Frank-Wolfe gap: <grad, x> - min_i grad_i over simplex vertices.
    let fw_gap = |x: &[f64], g: &[f64]| -> f64 {
        let inner: f64 = x.iter().zip(g).map(|(xi, gi)| xi * gi).sum();
        let min_g = g.iter().cloned().fold(f64::INFINITY, f64::min);
        inner - min_g
    };

    let mut x = vec![1.0 / m as f64; m];
    let mut g = vec![0.0; m];
    if lambda_max <= 0.0 {
        // Quadratic part vanishes (A is numerically zero, possibly after
        // clipping); the objective is linear, so any FW vertex is optimal.
        if let Some(q) = q {
            let (best, _) = q
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            x = vec![0.0; m];
            x[best] = 1.0;
        }
        gradient(&x, &mut g);
        let gap = fw_gap(&x, &g);
        return Ok(QpResult {
            objective: objective(&x),
            lambda: x,
            certificate_gap: gap.max(0.0),
            degenerate,
        });
    }
    let step = 1.0 / (2.0 * lambda_max);
    let mut gap = f64::INFINITY;
    for it in 0..MAX_ITERS {
        gradient(&x, &mut g);
        if it % GAP_CHECK_EVERY == 0 {
            gap = fw_gap(&x, &g);
            if gap <= tol {
                break;
            }
        }
        let moved: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
        x = project_simplex(&moved);
    }
    if gap > tol {
        gradient(&x, &mut g);
        gap = fw_gap(&x, &g);
        if gap > tol {
            return Err(Error::QpNotCertified { gap, tol });
        }
    }
    Ok(QpResult {
        objective: objective(&x),
        lambda: x,
        certificate_gap: gap.max(0.0),
        degenerate,
    })
}

/// Squared-distance projection of `c` onto the convex hull of the columns of
/// `b`: minimizes `||B lambda - c||^2` over the simplex. The reported
/// objective is the squared distance.
pub fn project_convex_hull(b: &DMatrix<f64>, c: &[f64], tol: f64) -> Result<QpResult> {
    let (n, m) = (b.nrows(), b.ncols());
    if m == 0 {
        return Err(Error::Empty("hull points"));
    }
    if c.len() != n {
        return Err(Error::LengthMismatch {
            context: "hull target vs point dimension",
            left: c.len(),
            right: n,
        });
    }
    let a = b.transpose() * b;
    let mut q = vec![0.0; m];
    for j in 0..m {
        let mut acc = 0.0;
        for i in 0..n {
            acc += b[(i, j)] * c[i];
        }
        q[j] = -2.0 * acc;
    }
    let c0: f64 = c.iter().map(|v| v * v).sum();
    let mut res = min_quadratic_simplex_with_linear(&a, Some(&q), c0, tol)?;
    // squared distances are nonnegative; guard against rounding
    if res.objective < 0.0 {
        res.objective = 0.0;
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.3, 0.3]);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);
        let already = project_simplex(&[0.25, 0.75]);
        assert_abs_diff_eq!(already[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(already[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn qp_diag_example() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let r = min_quadratic_simplex(&a, 1e-9).unwrap();
        assert_abs_diff_eq!(r.lambda[0], 0.8, epsilon = 1e-4);
        assert_abs_diff_eq!(r.lambda[1], 0.2, epsilon = 1e-4);
        assert_abs_diff_eq!(r.objective, 0.8, epsilon = 1e-8);
        assert!(r.certificate_gap <= 1e-9);
        assert!(!r.degenerate);
    }

    #[test]
    fn qp_null_space_vertex() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let r = min_quadratic_simplex(&a, 1e-9).unwrap();
        assert_abs_diff_eq!(r.lambda[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.objective, 0.0, epsilon = 1e-12);
        assert!(!r.degenerate, "single zero eigenvalue is not flagged");
    }

    #[test]
    fn qp_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            min_quadratic_simplex(&a, 1e-9),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn qp_flags_zero_matrix_as_degenerate() {
        let a = DMatrix::zeros(3, 3);
        let r = min_quadratic_simplex(&a, 1e-9).unwrap();
        assert!(r.degenerate);
        assert_abs_diff_eq!(r.objective, 0.0);
    }

    #[test]
    fn qp_scaling_invariance() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let base = min_quadratic_simplex(&a, 1e-12).unwrap();
        for c in [0.1, 10.0] {
            let scaled = min_quadratic_simplex(&(&a * c), 1e-12).unwrap();
            for (x, y) in base.lambda.iter().zip(&scaled.lambda) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-6);
            }
        }
    }

    fn brute_force_min(a: &DMatrix<f64>, step_count: usize) -> f64 {
        // exhaustive grid over the simplex for m = 3
        let k = step_count;
        let mut best = f64::INFINITY;
        for i in 0..=k {
            for j in 0..=(k - i) {
                let l = k - i - j;
                let x = [i as f64 / k as f64, j as f64 / k as f64, l as f64 / k as f64];
                let mut val = 0.0;
                for r in 0..3 {
                    for c in 0..3 {
                        val += x[r] * a[(r, c)] * x[c];
                    }
                }
                best = best.min(val);
            }
        }
        best
    }

    #[test]
    fn qp_matches_small_brute_force() {
        let mats = [
            DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, 0.1, 0.0, 0.1, 0.5]),
            DMatrix::from_row_slice(3, 3, &[3.0, -0.5, 0.2, -0.5, 1.0, 0.0, 0.2, 0.0, 2.0]),
        ];
        for a in &mats {
            let r = min_quadratic_simplex(a, 1e-10).unwrap();
            let brute = brute_force_min(a, 1000);
            assert!(r.objective <= brute + 1e-4, "{} vs {}", r.objective, brute);
            assert!(brute <= r.objective + 1e-4);
        }
    }

    #[test]
    fn hull_projection_example() {
        // hull of (0,0), (1,0), (0,1); target (2,2) projects to (1/2, 1/2)
        let b = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let r = project_convex_hull(&b, &[2.0, 2.0], 1e-10).unwrap();
        assert_abs_diff_eq!(r.lambda[0], 0.0, epsilon = 1e-5);
        assert_abs_diff_eq!(r.lambda[1], 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(r.lambda[2], 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(r.objective, 4.5, epsilon = 1e-8);
    }

    #[test]
    fn hull_projection_interior_point_is_exact() {
        let b = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let r = project_convex_hull(&b, &[0.25, 0.25], 1e-12).unwrap();
        assert!(r.objective <= 1e-10);
    }

    #[test]
    fn clip_psd_repairs_noise() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 + 1e-13, 1.0 - 1e-13, 1.0 - 1e-12]);
        let fixed = symmetrize_and_clip_psd(&a);
        let eig = fixed.symmetric_eigen();
        for &v in eig.eigenvalues.iter() {
            assert!(v >= -1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn projection_kkt(v in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let p = project_simplex(&v);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            // recover the threshold from a positive coordinate and verify
            let (i, _) = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            let tau = v[i] - p[i];
            for k in 0..v.len() {
                let expect = (v[k] - tau).max(0.0);
                prop_assert!((p[k] - expect).abs() <= 1e-9);
            }
        }

        #[test]
        fn projection_is_idempotent(v in proptest::collection::vec(-3.0f64..3.0, 1..6)) {
            let p = project_simplex(&v);
            let pp = project_simplex(&p);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
