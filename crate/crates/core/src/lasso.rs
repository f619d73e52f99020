//! L1-penalized least squares by cyclic coordinate descent.
//!
//! The objective is `(1/n)‖y − Zβ‖² + λ‖β‖₁`: the quadratic carries the
//! `1/n` factor and the penalty does not.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    pub z: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coef: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    /// Objective after each sweep, starting with the value at zero.
    pub objective_trace: Vec<f64>,
}

pub fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

impl LassoProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.z.nrows() == 0 || self.z.ncols() == 0 {
            return Err(Error::Shape {
                context: "lasso design",
                expected: 1,
                got: 0,
            });
        }
        crate::error::check_len("lasso response", self.z.nrows(), self.y.len())?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Domain(format!(
                "lasso penalty {} must be finite and nonnegative",
                self.lambda
            )));
        }
        if self.z.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "lasso inputs contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn objective(&self, coef: ArrayView1<f64>) -> f64 {
        let resid = &self.y - &self.z.dot(&coef);
        resid.dot(&resid) / self.z.nrows() as f64 + self.lambda * coef.mapv(f64::abs).sum()
    }

    /// Largest KKT violation of `coef`: `|g_j + λ·sign(β_j)|` on the active
    /// set and `max(|g_j| − λ, 0)` elsewhere, with `g = −(2/n)Zᵀ(y − Zβ)`.
    pub fn kkt_violation(&self, coef: ArrayView1<f64>) -> f64 {
        let n = self.z.nrows() as f64;
        let resid = &self.y - &self.z.dot(&coef);
        let corr = self.z.t().dot(&resid) * (2.0 / n);
        corr.iter()
            .zip(coef.iter())
            .map(|(&c, &b)| {
                if b != 0.0 {
                    (c - self.lambda * b.signum()).abs()
                } else {
                    (c.abs() - self.lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Cyclic coordinate descent from `β = 0`. A sweep converges when no
/// coordinate moves by `tol` or more. All-zero columns stay at zero.
pub fn lasso_cd(problem: &LassoProblem, tol: f64, max_sweeps: usize) -> Result<LassoSolution> {
    problem.validate()?;
    if !(tol > 0.0) || max_sweeps == 0 {
        return Err(Error::Config(
            "lasso needs tol > 0 and max_sweeps ≥ 1".into(),
        ));
    }
    let z = problem.z;
    let n = z.nrows() as f64;
    let p = z.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| z.column(j).dot(&z.column(j)) / n).collect();
    let mut coef = Array1::<f64>::zeros(p);
    let mut resid = problem.y.to_owned();
    let mut trace = vec![problem.objective(coef.view())];
    let half_lambda = problem.lambda / 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_sweeps {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = z.column(j);
            let old = coef[j];
            let rho = col.dot(&resid) / n + col_sq[j] * old;
            let new = soft_threshold(rho, half_lambda) / col_sq[j];
            if new != old {
                resid.scaled_add(old - new, &col);
                coef[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        trace.push(problem.objective(coef.view()));
        if max_change < tol {
            converged = true;
            break;
        }
    }
    let final_objective = *trace.last().unwrap();
    if !final_objective.is_finite() {
        return Err(Error::Numeric("lasso objective became non-finite".into()));
    }
    Ok(LassoSolution {
        coef,
        iterations,
        converged,
        final_objective,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn large_penalty_gives_zero() {
        let z = array![[1.0, 0.5], [0.2, -1.0], [0.3, 0.3], [-0.7, 2.0]];
        let y = array![1.0, -2.0, 0.5, 3.0];
        let n = 4.0;
        let lam = 2.0
            * z.t()
                .dot(&y)
                .mapv(f64::abs)
                .fold(0.0, |a: f64, &b| a.max(b))
            / n;
        let p = LassoProblem {
            z: z.view(),
            y: y.view(),
            lambda: lam,
        };
        let sol = lasso_cd(&p, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert!(sol.coef.iter().all(|&v| v == 0.0));
        assert!(sol.converged);
    }

    #[test]
    fn zero_column_stays_zero_without_penalty() {
        let z = array![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let y = array![1.0, 2.0, 3.1];
        let p = LassoProblem {
            z: z.view(),
            y: y.view(),
            lambda: 0.0,
        };
        let sol = lasso_cd(&p, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert_eq!(sol.coef[1], 0.0);
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let z = array![[1.0], [f64::NAN]];
        let y = array![1.0, 2.0];
        let p = LassoProblem {
            z: z.view(),
            y: y.view(),
            lambda: 0.1,
        };
        assert!(matches!(lasso_cd(&p, 1e-8, 10), Err(Error::Numeric(_))));
    }

    #[test]
    fn objective_field_matches_direct_evaluation() {
        let z = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let y = Array1::from_shape_fn(6, |i| (i as f64).cos());
        let p = LassoProblem {
            z: z.view(),
            y: y.view(),
            lambda: 0.05,
        };
        let sol = lasso_cd(&p, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert_eq!(sol.final_objective, p.objective(sol.coef.view()));
        assert!(p.kkt_violation(sol.coef.view()) < 1e-6);
    }
}
