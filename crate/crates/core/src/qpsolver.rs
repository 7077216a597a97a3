//! Dense strictly convex QP solver for the per-step controller problem.
//!
//! ```text
//!     minimize     1/2 uᵀ H u + cᵀ u
//!     subject to   G u <= d
//!                  lb <= u <= ub
//! ```
//!
//! Dual active-set iteration (Goldfarb–Idnani): start from the unconstrained
//! minimizer, repeatedly add a violated constraint and take primal/dual
//! steps, dropping constraints whose multipliers would go negative. The
//! primal objective increases monotonically and infeasibility shows up as a
//! violated constraint that no dual step can repair. Problems here have a
//! handful of variables, so the equality-constrained subproblem is re-solved
//! densely at each step instead of updating factorizations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Tolerance for symmetry of `H`.
const SYMMETRY_TOL: f64 = 1e-12;
/// Constraint violation tolerance (scaled by `1 + |d_i|`).
const FEAS_TOL: f64 = 1e-11;
/// Ratio-test and degeneracy tolerance.
const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("active-set iteration limit reached after {0} iterations")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub d: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    /// Problem with only the general inequalities; bounds are infinite.
    pub fn new(h: DMatrix<f64>, c: DVector<f64>, g: DMatrix<f64>, d: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            h,
            c,
            g,
            d,
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        self.lb = lb;
        self.ub = ub;
        self
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_cons(&self) -> usize {
        self.d.len()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.c.dot(u)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n_vars();
        if self.h.shape() != (n, n) {
            return Err(QpError::InvalidProblem(format!("H is {:?}, expected {n}x{n}", self.h.shape())));
        }
        if self.g.ncols() != n || self.g.nrows() != self.d.len() {
            return Err(QpError::InvalidProblem("G/d shape mismatch".into()));
        }
        if self.lb.len() != n || self.ub.len() != n {
            return Err(QpError::InvalidProblem("bound length mismatch".into()));
        }
        let asym = (&self.h - self.h.transpose()).abs().max();
        if asym > SYMMETRY_TOL * (1.0 + self.h.abs().max()) {
            return Err(QpError::InvalidProblem(format!("H not symmetric ({asym:e})")));
        }
        if self.h.clone().cholesky().is_none() {
            return Err(QpError::InvalidProblem("H not positive definite".into()));
        }
        let finite = self.h.iter().chain(self.c.iter()).chain(self.g.iter()).all(|v| v.is_finite())
            && self.d.iter().all(|v| !v.is_nan())
            && self.lb.iter().chain(self.ub.iter()).all(|v| !v.is_nan());
        if !finite {
            return Err(QpError::InvalidProblem("non-finite data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: DVector<f64>,
    /// Multipliers of `G u <= d`.
    pub duals: DVector<f64>,
    /// Multipliers of `u >= lb`.
    pub lower_duals: DVector<f64>,
    /// Multipliers of `u <= ub`.
    pub upper_duals: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    /// Largest KKT violation: stationarity, primal and dual feasibility,
    /// complementary slackness.
    pub fn kkt_residual(&self, p: &QpProblem) -> f64 {
        let u = &self.u_star;
        let grad = &p.h * u + &p.c + p.g.transpose() * &self.duals - &self.lower_duals + &self.upper_duals;
        let mut r = grad.amax();
        for i in 0..p.n_cons() {
            let s = p.g.row(i).dot(&u.transpose()) - p.d[i];
            r = r.max(s).max(-self.duals[i]).max((self.duals[i] * s).abs());
        }
        for j in 0..p.n_vars() {
            if p.lb[j].is_finite() {
                let s = p.lb[j] - u[j];
                r = r.max(s).max((self.lower_duals[j] * s).abs());
            }
            if p.ub[j].is_finite() {
                let s = u[j] - p.ub[j];
                r = r.max(s).max((self.upper_duals[j] * s).abs());
            }
            r = r.max(-self.lower_duals[j]).max(-self.upper_duals[j]);
        }
        r
    }
}

/// One row `nᵀu <= rhs` of the stacked constraint set.
struct Row {
    normal: DVector<f64>,
    rhs: f64,
}

fn stacked_rows(p: &QpProblem) -> Vec<Row> {
    let n = p.n_vars();
    let mut rows: Vec<Row> = (0..p.n_cons())
        .map(|i| Row {
            normal: p.g.row(i).transpose(),
            rhs: p.d[i],
        })
        .collect();
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = -1.0;
        rows.push(Row { normal: e, rhs: -p.lb[j] });
    }
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        rows.push(Row { normal: e, rhs: p.ub[j] });
    }
    rows
}

/// Primal step direction `z` and dual change `r` for adding `np` to the
/// active set with normals `active`.
///
/// `z = H⁻¹(I - N N*) np`, `r = N* np`, `N* = (Nᵀ H⁻¹ N)⁻¹ Nᵀ H⁻¹`.
fn directions(
    hinv: &DMatrix<f64>,
    rows: &[Row],
    active: &[usize],
    np: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let hinv_np = hinv * np;
    if active.is_empty() {
        return (hinv_np, DVector::zeros(0));
    }
    let n = np.len();
    let nmat = DMatrix::from_fn(n, active.len(), |r, c| rows[active[c]].normal[r]);
    let hinv_n = hinv * &nmat;
    let gram = nmat.transpose() * &hinv_n;
    let r = gram
        .lu()
        .solve(&(nmat.transpose() * &hinv_np))
        .unwrap_or_else(|| DVector::zeros(active.len()));
    let z = hinv_np - hinv_n * &r;
    (z, r)
}

pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.n_vars();
    let m = problem.n_cons();
    let rows = stacked_rows(problem);
    let hinv = problem
        .h
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| QpError::InvalidProblem("H not positive definite".into()))?;

    let mut x = -(&hinv * &problem.c);
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let cap = 50 * (n + m + 2 * n);
    let mut iterations = 0;

    let violation = |x: &DVector<f64>, i: usize| -> f64 {
        let row = &rows[i];
        if row.rhs.is_infinite() {
            return f64::NEG_INFINITY;
        }
        row.normal.dot(x) - row.rhs
    };
    let tol = |i: usize| FEAS_TOL * (1.0 + rows[i].rhs.abs());

    let status = 'outer: loop {
        // Smallest-index violated constraint (Bland-style selection).
        let Some(p) = (0..rows.len()).find(|&i| !active.contains(&i) && violation(&x, i) > tol(i)) else {
            break QpStatus::Optimal;
        };
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(QpError::IterationLimit(iterations));
            }
            let np = &rows[p].normal;
            let (z, r) = directions(&hinv, &rows, &active, np);
            let znp = z.dot(np);

            // Partial step: largest dual step keeping active multipliers >= 0.
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > STEP_TOL {
                    let t = mult[k] / rk;
                    if t < t1 {
                        t1 = t;
                        drop = Some(k);
                    }
                }
            }
            // Full step: makes constraint p tight.
            let full = znp.abs() > STEP_TOL * np.norm_squared().max(1.0);
            let t2 = if full { violation(&x, p) / znp } else { f64::INFINITY };

            if !full && drop.is_none() {
                break 'outer QpStatus::Infeasible;
            }
            let t = t1.min(t2);
            for (k, &rk) in r.iter().enumerate() {
                mult[k] -= t * rk;
            }
            u_p += t;
            if full {
                x -= &z * t;
            }
            if t2 <= t1 {
                active.push(p);
                mult.push(u_p);
                continue 'outer;
            }
            let k = drop.expect("partial step has a blocking constraint");
            active.remove(k);
            mult.remove(k);
        }
    };

    let mut duals = DVector::zeros(m);
    let mut lower_duals = DVector::zeros(n);
    let mut upper_duals = DVector::zeros(n);
    if status == QpStatus::Optimal {
        for (&i, &lam) in active.iter().zip(&mult) {
            let lam = lam.max(0.0);
            if i < m {
                duals[i] = lam;
            } else if i < m + n {
                lower_duals[i - m] = lam;
            } else {
                upper_duals[i - m - n] = lam;
            }
        }
        // Snap bound-active coordinates onto their bounds.
        for j in 0..n {
            if lower_duals[j] > 0.0 {
                x[j] = problem.lb[j];
            }
            if upper_duals[j] > 0.0 {
                x[j] = problem.ub[j];
            }
        }
    }
    Ok(QpSolution {
        u_star: x,
        duals,
        lower_duals,
        upper_duals,
        status,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(h: f64, c: f64, g: &[f64], d: &[f64]) -> QpProblem {
        QpProblem::new(
            DMatrix::from_element(1, 1, h),
            DVector::from_element(1, c),
            DMatrix::from_column_slice(g.len(), 1, g),
            DVector::from_column_slice(d),
        )
    }

    #[test]
    fn lower_bound_active() {
        // min x² s.t. x >= 1
        let p = scalar(2.0, 0.0, &[-1.0], &[-1.0]);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.u_star[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(s.duals[0], 2.0, epsilon = 1e-14);
        assert!(s.kkt_residual(&p) <= 1e-12);
    }

    #[test]
    fn unconstrained_minimizer() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let c = DVector::from_vec(vec![1.0, -2.0]);
        let p = QpProblem::new(h.clone(), c.clone(), DMatrix::zeros(0, 2), DVector::zeros(0));
        let s = solve_qp(&p).unwrap();
        let expected = -h.lu().solve(&c).unwrap();
        assert_relative_eq!(s.u_star, expected, epsilon = 1e-14);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        // x <= -1 and x >= 1
        let p = scalar(2.0, 0.0, &[1.0, -1.0], &[-1.0, -1.0]);
        assert_eq!(solve_qp(&p).unwrap().status, QpStatus::Infeasible);
        let p = scalar(2.0, 0.0, &[1.0], &[-1.0])
            .with_bounds(DVector::from_element(1, 0.0), DVector::from_element(1, 1.0));
        assert_eq!(solve_qp(&p).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn box_bounds_clip() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::from_vec(vec![-20.0, 4.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .with_bounds(DVector::from_element(2, -5.0), DVector::from_element(2, 5.0));
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.u_star[0], 5.0);
        assert_relative_eq!(s.u_star[1], -2.0, epsilon = 1e-14);
        assert_relative_eq!(s.upper_duals[0], 10.0, epsilon = 1e-12);
        assert!(s.kkt_residual(&p) <= 1e-12);
    }

    #[test]
    fn rejects_invalid_problems() {
        let p = scalar(-1.0, 0.0, &[], &[]);
        assert!(matches!(solve_qp(&p), Err(QpError::InvalidProblem(_))));
        let mut p = scalar(1.0, 0.0, &[1.0], &[1.0]);
        p.d = DVector::zeros(2);
        assert!(matches!(solve_qp(&p), Err(QpError::InvalidProblem(_))));
    }

    #[test]
    fn degenerate_duplicate_constraints() {
        // Same halfplane repeated three times plus a redundant one.
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 0.0]);
        let d = DVector::from_vec(vec![-1.0, -1.0, -2.0, 10.0]);
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2), g, d);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.u_star, DVector::from_vec(vec![-0.5, -0.5]), epsilon = 1e-12);
        assert!(s.kkt_residual(&p) <= 1e-10);
    }

    #[test]
    fn random_feasible_problems_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(0..=12);
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let h = a.transpose() * &a + DMatrix::identity(n, n) * 0.5;
            let c = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
            let g = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let feas = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let d = &g * &feas + DVector::from_fn(m, |_, _| rng.gen_range(0.0..1.0));
            let p = QpProblem::new(h, c, g, d).with_bounds(
                DVector::from_element(n, -2.0),
                DVector::from_element(n, 2.0),
            );
            let s = solve_qp(&p).unwrap();
            assert_eq!(s.status, QpStatus::Optimal);
            assert!(s.kkt_residual(&p) <= 1e-8, "kkt {}", s.kkt_residual(&p));
        }
    }
}
