//! Cyclic Jacobi eigensolver for real symmetric matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative asymmetry above which a matrix is rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Eigenvalues in ascending order with matching unit eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Largest |a_ij − a_ji| relative to the largest |a_ij|.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Diagonalizes `a` by cyclic Jacobi rotations until the off-diagonal
/// Frobenius norm is below 1e-15 of the matrix norm.
///
/// Ties between equal eigenvalues are broken by the index of the largest
/// magnitude eigenvector component, so the ordering is deterministic.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidParameter {
            name: "matrix",
            reason: format!("not square: {}x{}", n, a.ncols()),
        });
    }
    let asym = relative_asymmetry(a);
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::AsymmetricMatrix { asymmetry: asym });
    }

    // Row-major working copy, symmetrized.
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let total: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = 1e-15 * total;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= target || total == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, n, p, q, c, s);
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let dominant = |col: usize| {
        (0..n)
            .max_by(|&a, &b| v[a * n + col].abs().total_cmp(&v[b * n + col].abs()))
            .unwrap_or(0)
    };
    let scale = total.max(f64::MIN_POSITIVE);
    order.sort_by(|&a, &b| {
        let (la, lb) = (m[a * n + a], m[b * n + b]);
        if (la - lb).abs() <= 1e-12 * scale {
            dominant(a).cmp(&dominant(b))
        } else {
            la.total_cmp(&lb)
        }
    });

    let values = order.iter().map(|&k| m[k * n + k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    Ok(SymmetricEigen { values, vectors })
}

/// Applies the Jacobi rotation J(p, q)ᵀ M J(p, q) in place.
fn rotate(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        let mkp = m[k * n + p];
        let mkq = m[k * n + q];
        m[k * n + p] = c * mkp - s * mkq;
        m[k * n + q] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[p * n + k];
        let mqk = m[q * n + k];
        m[p * n + k] = c * mpk - s * mqk;
        m[q * n + k] = s * mpk + c * mqk;
    }
}
