//! Dense convex QP with equality constraints and nonnegativity bounds.
//!
//! ```text
//!     minimize    ½ xᵀ H x − gᵀ x
//!     subject to  C x = C x₀
//!                 x ≥ 0
//! ```
//!
//! Primal active-set method over the bounds: each iteration solves the KKT
//! system of the equality-constrained subproblem on the free variables, steps
//! until a bound blocks, and releases the bound with the most negative
//! multiplier once no descent step remains. `H` must be positive definite.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum QpError {
    Singular,
    NoConvergence { iterations: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
}

/// Indices of a maximal linearly independent subset of `rows`, chosen greedily
/// in order by modified Gram–Schmidt.
pub(crate) fn independent_rows(rows: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for i in 0..rows.nrows() {
        let original = rows.row(i).transpose();
        let norm0 = original.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = original.clone();
        for q in &basis {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-10 * norm0 {
            basis.push(v / norm);
            kept.push(i);
        }
    }
    kept
}

/// Solve from a feasible `x0` (`x0 ≥ 0`). The equality residual of `x0` is preserved.
pub(crate) fn solve(h: &DMatrix<f64>, g: &DVector<f64>, c: &DMatrix<f64>, x0: DVector<f64>) -> Result<QpSolution, QpError> {
    let n = h.nrows();
    let mut x = x0;
    let mut fixed = vec![false; n];
    let max_iterations = 50 * (n + c.nrows()) + 100;
    let scale = 1.0 + g.amax() + h.amax();

    for iteration in 1..=max_iterations {
        let grad = h * &x - g;
        let free: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();

        let c_free = c.select_columns(free.iter());
        let rows = independent_rows(&c_free);
        let (p_free, mu) = solve_kkt(h, &grad, c, &free, &rows)?;

        let step_norm = p_free.amax();
        if step_norm <= 1e-12 * (1.0 + x.amax()) {
            // Stationary on the working set: check bound multipliers.
            let mut worst: Option<(usize, f64)> = None;
            for j in (0..n).filter(|&j| fixed[j]) {
                let mut lambda = grad[j];
                for (k, &r) in rows.iter().enumerate() {
                    lambda += c[(r, j)] * mu[k];
                }
                if worst.map_or(true, |(_, w)| lambda < w) {
                    worst = Some((j, lambda));
                }
            }
            match worst {
                Some((j, lambda)) if lambda < -1e-10 * scale => fixed[j] = false,
                _ => return Ok(QpSolution { x, iterations: iteration }),
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for (k, &j) in free.iter().enumerate() {
            let pj = p_free[k];
            if pj < 0.0 {
                let ratio = x[j].max(0.0) / -pj;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(j);
                }
            }
        }
        for (k, &j) in free.iter().enumerate() {
            x[j] += alpha * p_free[k];
        }
        if let Some(j) = blocking {
            x[j] = 0.0;
            fixed[j] = true;
        }
    }
    Err(QpError::NoConvergence {
        iterations: max_iterations,
    })
}

/// Step `p` on the free set and multipliers for the selected equality rows.
fn solve_kkt(
    h: &DMatrix<f64>,
    grad: &DVector<f64>,
    c: &DMatrix<f64>,
    free: &[usize],
    rows: &[usize],
) -> Result<(DVector<f64>, DVector<f64>), QpError> {
    let nf = free.len();
    let m = rows.len();
    if nf == 0 {
        return Ok((DVector::zeros(0), DVector::zeros(0)));
    }
    let mut kkt = DMatrix::<f64>::zeros(nf + m, nf + m);
    let mut rhs = DVector::<f64>::zeros(nf + m);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = h[(i, j)];
        }
        rhs[a] = -grad[i];
    }
    for (k, &r) in rows.iter().enumerate() {
        for (a, &j) in free.iter().enumerate() {
            kkt[(nf + k, a)] = c[(r, j)];
            kkt[(a, nf + k)] = c[(r, j)];
        }
    }
    let sol = kkt.lu().solve(&rhs).ok_or(QpError::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(QpError::Singular);
    }
    Ok((sol.rows(0, nf).into_owned(), sol.rows(nf, m).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_interior_minimum() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let g = DVector::from_vec(vec![2.0, 4.0]);
        let c = DMatrix::zeros(0, 2);
        let s = solve(&h, &g, &c, DVector::zeros(2)).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bound_becomes_active() {
        // min (x − (−1))² + (y − 2)²  s.t. x, y ≥ 0  →  (0, 2)
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let g = DVector::from_vec(vec![-2.0, 4.0]);
        let c = DMatrix::zeros(0, 2);
        let s = solve(&h, &g, &c, DVector::zeros(2)).unwrap();
        assert_eq!(s.x[0], 0.0);
        assert!((s.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equality_with_active_bound() {
        // min (x − 3)² + (y + 1)²  s.t. x − y = 0, x, y ≥ 0
        // unconstrained on the line: x = y = 1 (feasible)
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let g = DVector::from_vec(vec![6.0, -2.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let s = solve(&h, &g, &c, DVector::zeros(2)).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);

        // min (x + 3)² + (y − 1)² on x = y  →  unconstrained −1, clamps to 0
        let g = DVector::from_vec(vec![-6.0, 2.0]);
        let s = solve(&h, &g, &c, DVector::zeros(2)).unwrap();
        assert_eq!(s.x.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn dependent_rows_are_dropped() {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 2.0, -2.0, 0.0, 0.0]);
        assert_eq!(independent_rows(&c), vec![0]);
    }
}
