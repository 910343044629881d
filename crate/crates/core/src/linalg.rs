//! Small dense symmetric linear algebra: cyclic Jacobi eigendecomposition and
//! Cholesky factorization. Matrices are row-major `Vec<Vec<f64>>`; sizes here
//! stay below a few dozen.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square")]
    NotSquare,
    #[error("jacobi iteration did not converge in {0} sweeps")]
    NotConverged(usize),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

pub type Matrix = Vec<Vec<f64>>;

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, sorted by non-increasing eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn trace(a: &Matrix) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let mut s = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `1e-12 × max(|trace|, ‖A‖_F)`. Only the upper triangle of `a` is read.
pub fn jacobi_eigen(a: &Matrix) -> Result<SymmetricEigen, LinalgError> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) {
        return Err(LinalgError::NotSquare);
    }
    let mut m: Matrix = (0..n)
        .map(|i| (0..n).map(|j| if i <= j { a[i][j] } else { a[j][i] }).collect())
        .collect();
    let mut v: Matrix = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();

    let frobenius = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = 1e-12 * trace(&m).abs().max(frobenius);

    let mut sweeps = 0;
    while off_diagonal_norm(&m) > threshold {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NotConverged(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (m[p][k], m[q][k]);
                    m[p][k] = c * pk - s * qk;
                    m[q][k] = s * pk + c * qk;
                }
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their diagonal position
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    Ok(SymmetricEigen {
        values: order.iter().map(|&i| m[i][i]).collect(),
        vectors: order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect(),
    })
}

/// Lower-triangular `L` with `A = L Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix, LinalgError> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) {
        return Err(LinalgError::NotSquare);
    }
    let max_diag = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = a[i][j] - dot(&l[i][..j], &l[j][..j]);
            if i == j {
                // pivots this small relative to the diagonal mean numerical rank loss
                if !(s > 1e-12 * max_diag) {
                    return Err(LinalgError::NotPositiveDefinite);
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - dot(&l[i][..i], &y[..i])) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}
