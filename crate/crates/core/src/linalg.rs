//! Small dense linear algebra: cyclic Jacobi eigensolver, Cholesky solves and
//! least squares on normal equations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Array1<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi rotations. Intended for the small matrices used here
/// (representation covariances, d ≤ 64).
pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape {
            context: "symmetric_eigen",
            expected: n,
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite matrix in eigensolve".into()));
    }
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1e-300);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| m[[p, q]] * m[[p, q]])
            .sum();
        if off.sqrt() <= 1e-15 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
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
    order.sort_by(|&i, &j| m[[i, i]].total_cmp(&m[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn cholesky_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Shape {
            context: "cholesky_solve",
            expected: n,
            got: b.len(),
        });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    let tiny = 1e-12
        * (0..n)
            .map(|i| a[[i, i]].abs())
            .fold(0.0, f64::max)
            .max(1e-300);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(sum > tiny) {
                    return Err(Error::Numeric(
                        "matrix is singular or not positive definite".into(),
                    ));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    let mut z = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * z[k];
        }
        z[i] = sum / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = z[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    Ok(x)
}

/// Ordinary least squares through the normal equations.
pub fn least_squares(z: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    if z.nrows() != y.len() {
        return Err(Error::Shape {
            context: "least_squares",
            expected: z.nrows(),
            got: y.len(),
        });
    }
    cholesky_solve(z.t().dot(&z).view(), z.t().dot(&y).view())
}

/// Minimum-norm least-squares solution via the eigen-decomposition of `zᵀz`.
/// Handles rank-deficient and wide designs.
pub fn min_norm_least_squares(z: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    if z.nrows() != y.len() {
        return Err(Error::Shape {
            context: "min_norm_least_squares",
            expected: z.nrows(),
            got: y.len(),
        });
    }
    let gram = z.t().dot(&z);
    let rhs = z.t().dot(&y);
    let eig = symmetric_eigen(gram.view())?;
    let top = eig.values.iter().fold(0.0f64, |a, &b| a.max(b));
    let cutoff = top * 1e-10 * gram.nrows().max(1) as f64;
    let mut beta = Array1::<f64>::zeros(gram.nrows());
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda > cutoff {
            let v = eig.vectors.column(k);
            let proj = v.dot(&rhs) / lambda;
            beta.scaled_add(proj, &v);
        }
    }
    Ok(beta)
}
