//! Dense linear-algebra helpers shared by the estimation and decomposition code.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower-triangular `L` with `L L' = sigma`, keeping the variable order fixed.
///
/// Pivots that vanish relative to the largest diagonal entry yield zero
/// columns, so positive-semidefinite inputs are accepted.
pub fn cholesky_psd(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    let scale = sigma.diagonal().amax().max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = sigma[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -1e-9 * scale {
            return Err(Error::Numerical {
                message: "covariance matrix is not positive semidefinite".into(),
                residual: d,
            });
        }
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut s = sigma[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Ok(l)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().amax()
}

/// How to solve `X = A X A' + Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovMethod {
    /// Kronecker solve for small companions, doubling otherwise.
    #[default]
    Auto,
    Kronecker,
    Doubling,
}

/// Companion dimension up to which [`LyapunovMethod::Auto`] uses the Kronecker solve.
pub const KRONECKER_MAX_DIM: usize = 12;

/// Solves `X = A X A' + Q` for every `Q` in `rhs`, sharing the work on `A`.
pub fn solve_discrete_lyapunov(
    a: &DMatrix<f64>,
    rhs: &[DMatrix<f64>],
    method: LyapunovMethod,
) -> Result<Vec<DMatrix<f64>>> {
    let use_kron = match method {
        LyapunovMethod::Kronecker => true,
        LyapunovMethod::Doubling => false,
        LyapunovMethod::Auto => a.nrows() <= KRONECKER_MAX_DIM,
    };
    let sols = if use_kron {
        lyapunov_kronecker(a, rhs)?
    } else {
        lyapunov_doubling(a, rhs)?
    };
    for (x, q) in sols.iter().zip(rhs) {
        let resid = (x - a * x * a.transpose() - q).amax();
        let scale = x.amax().max(q.amax()).max(f64::MIN_POSITIVE);
        if !resid.is_finite() || resid > 1e-8 * scale {
            return Err(Error::Numerical {
                message: "Lyapunov solve did not reach the requested accuracy".into(),
                residual: resid,
            });
        }
    }
    Ok(sols)
}

fn lyapunov_kronecker(a: &DMatrix<f64>, rhs: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let m = a.nrows();
    let big = DMatrix::<f64>::identity(m * m, m * m) - a.kronecker(a);
    let lu = big.lu();
    rhs.iter()
        .map(|q| {
            // column-major storage of q is vec(q)
            let v = nalgebra::DVector::from_column_slice(q.as_slice());
            let sol = lu.solve(&v).ok_or(Error::Numerical {
                message: "I - A (x) A is singular".into(),
                residual: f64::INFINITY,
            })?;
            let x = DMatrix::from_column_slice(m, m, sol.as_slice());
            Ok((&x + x.transpose()) * 0.5)
        })
        .collect()
}

fn lyapunov_doubling(a: &DMatrix<f64>, rhs: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    const MAX_STEPS: usize = 64;
    // powers A^(2^k) until they are negligible
    let mut powers = vec![a.clone()];
    loop {
        let last = powers.last().expect("non-empty");
        if last.amax() < 1e-18 {
            break;
        }
        if powers.len() >= MAX_STEPS || !last.amax().is_finite() {
            return Err(Error::Numerical {
                message: "doubling iteration diverged; companion is not stable".into(),
                residual: last.amax(),
            });
        }
        let next = last * last;
        powers.push(next);
    }
    Ok(rhs
        .iter()
        .map(|q| {
            let mut x = q.clone();
            for p in &powers {
                let update = p * &x * p.transpose();
                let done = update.amax() <= 1e-16 * x.amax();
                x += update;
                if done {
                    break;
                }
            }
            (&x + x.transpose()) * 0.5
        })
        .collect())
}

/// Solves `m x = b`, returning `None` when `m` is numerically singular.
pub fn solve(m: &DMatrix<f64>, b: &nalgebra::DVector<f64>) -> Option<nalgebra::DVector<f64>> {
    let lu = m.clone().lu();
    let x = lu.solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}
