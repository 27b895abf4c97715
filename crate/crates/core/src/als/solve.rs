use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid_arg, Result};
use crate::tensor::{FlopCounter, Matrix, Phase};

/// Result of one normal-equation solve.
#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Matrix,
    /// Set when the Cholesky factorization failed and a fallback was used.
    pub warning: Option<String>,
}

/// Solves `X Γ = M` for `X` (`s_n x R`) with `Γ` symmetric positive
/// semidefinite.
///
/// Uses a Cholesky factorization of `Γ`. If it breaks down, retries once on
/// `Γ + reg * mean(diag Γ) * I` when `reg > 0`, and otherwise (or if that
/// fails too) applies the pseudo-inverse from an eigendecomposition,
/// discarding eigenvalues below `1e-12 * λ_max`.
pub fn solve_subproblem(m: &Matrix, gamma: &Matrix, reg: f64) -> Result<Matrix> {
    Ok(solve_counted(m, gamma, reg, &FlopCounter::new())?.x)
}

/// [`solve_subproblem`] charging its arithmetic to `counter` and reporting
/// whether a fallback was needed.
pub fn solve_counted(m: &Matrix, gamma: &Matrix, reg: f64, counter: &FlopCounter) -> Result<Solution> {
    let r = gamma.rows();
    if gamma.cols() != r || m.cols() != r {
        return Err(invalid_arg!(
            "solve with Γ {:?} and right-hand side {:?}",
            gamma.shape(),
            m.shape()
        ));
    }
    if !m.is_finite() || !gamma.is_finite() {
        return Err(invalid_arg!("non-finite entries in the ALS subproblem"));
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(invalid_arg!("regularization must be a finite non-negative number"));
    }
    if let Some(l) = cholesky(gamma, counter) {
        return Ok(Solution { x: solve_rows(&l, m, counter), warning: None });
    }
    if reg > 0.0 {
        let mean_diag = (0..r).map(|i| gamma.get(i, i)).sum::<f64>() / r as f64;
        let mut shifted = gamma.clone();
        for i in 0..r {
            shifted.set(i, i, gamma.get(i, i) + reg * mean_diag);
        }
        if let Some(l) = cholesky(&shifted, counter) {
            return Ok(Solution {
                x: solve_rows(&l, m, counter),
                warning: Some(format!("Γ not positive definite; solved with shift {reg} * mean diagonal")),
            });
        }
    }
    let x = pseudo_inverse_solve(m, gamma, counter);
    Ok(Solution {
        x,
        warning: Some("Γ numerically singular; used eigendecomposition pseudo-inverse".into()),
    })
}

/// Lower Cholesky factor, or `None` when a pivot is not safely positive.
pub(crate) fn cholesky(a: &Matrix, counter: &FlopCounter) -> Option<Matrix> {
    let n = a.rows();
    let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0, f64::max);
    let tiny = f64::EPSILON * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > tiny) {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut v = a.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / d);
        }
    }
    counter.add(Phase::Solve, (n * n * n / 3) as u64);
    Some(l)
}

/// Solves `L L^T x = m_i` for every row `m_i` independently.
///
/// Each row goes through identical arithmetic, so solving any subset of rows
/// gives bitwise the same rows as solving all of them.
pub(crate) fn solve_rows(l: &Matrix, m: &Matrix, counter: &FlopCounter) -> Matrix {
    let r = l.rows();
    let mut x = Matrix::zeros(m.rows(), r);
    let mut y = vec![0.0; r];
    for i in 0..m.rows() {
        let b = m.row(i);
        for j in 0..r {
            let mut v = b[j];
            for k in 0..j {
                v -= l.get(j, k) * y[k];
            }
            y[j] = v / l.get(j, j);
        }
        let out = x.row_mut(i);
        for j in (0..r).rev() {
            let mut v = y[j];
            for k in j + 1..r {
                v -= l.get(k, j) * out[k];
            }
            out[j] = v / l.get(j, j);
        }
    }
    counter.add(Phase::Solve, (m.rows() * r * r) as u64);
    x
}

fn pseudo_inverse_solve(m: &Matrix, gamma: &Matrix, counter: &FlopCounter) -> Matrix {
    let r = gamma.rows();
    let g = DMatrix::from_row_slice(r, r, gamma.data());
    let eig = SymmetricEigen::new(g);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = 1e-12 * lmax;
    let mut pinv = Matrix::zeros(r, r);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= cut || lam <= 0.0 {
            continue;
        }
        for i in 0..r {
            let vi = eig.eigenvectors[(i, k)] / lam;
            let row = pinv.row_mut(i);
            for (j, p) in row.iter_mut().enumerate() {
                *p += vi * eig.eigenvectors[(j, k)];
            }
        }
    }
    counter.add(Phase::Solve, (4 * r * r * r + m.rows() * r * r) as u64);
    m.matmul(&pinv).expect("shapes checked")
}
