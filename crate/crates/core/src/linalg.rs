//! Small dense linear algebra on row-major `f64` buffers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Solves `A x = b` for symmetric positive definite `A` (`dim × dim`,
/// row-major) by Cholesky factorization.
pub fn cholesky_solve(a: &[f64], b: &[f64], dim: usize) -> Result<Vec<f64>> {
    if a.len() != dim * dim || b.len() != dim {
        return Err(Error::Argument(alloc::format!(
            "cholesky_solve: expected {dim}x{dim} system"
        )));
    }
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Estimation {
                        message: "matrix is not positive definite".into(),
                        condition_number: None,
                    });
                }
                l[i * dim + i] = libm::sqrt(s);
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }
    // forward: L y = b
    let mut y = b.to_vec();
    for i in 0..dim {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * dim + k] * y[k];
        }
        y[i] = s / l[i * dim + i];
    }
    // back: L' x = y
    for i in (0..dim).rev() {
        let mut s = y[i];
        for k in i + 1..dim {
            s -= l[k * dim + i] * y[k];
        }
        y[i] = s / l[i * dim + i];
    }
    Ok(y)
}

/// Inverse of a general square matrix by Gauss–Jordan elimination with
/// partial pivoting. Returns `None` when a pivot vanishes.
pub fn invert(a: &[f64], dim: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; dim * dim];
    for i in 0..dim {
        inv[i * dim + i] = 1.0;
    }
    let scale = one_norm(a, dim).max(f64::MIN_POSITIVE);
    for col in 0..dim {
        let pivot = (col..dim)
            .max_by(|&r, &s| {
                libm::fabs(m[r * dim + col])
                    .partial_cmp(&libm::fabs(m[s * dim + col]))
                    .unwrap_or(core::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        let p = m[pivot * dim + col];
        if !p.is_finite() || libm::fabs(p) <= scale * 1e-14 {
            return None;
        }
        if pivot != col {
            for k in 0..dim {
                m.swap(pivot * dim + k, col * dim + k);
                inv.swap(pivot * dim + k, col * dim + k);
            }
        }
        for k in 0..dim {
            m[col * dim + k] /= p;
            inv[col * dim + k] /= p;
        }
        for r in 0..dim {
            if r == col {
                continue;
            }
            let f = m[r * dim + col];
            if f != 0.0 {
                for k in 0..dim {
                    m[r * dim + k] -= f * m[col * dim + k];
                    inv[r * dim + k] -= f * inv[col * dim + k];
                }
            }
        }
    }
    Some(inv)
}

/// Maximum absolute column sum.
pub fn one_norm(a: &[f64], dim: usize) -> f64 {
    (0..dim)
        .map(|c| (0..dim).map(|r| libm::fabs(a[r * dim + c])).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number, `+∞` for singular matrices.
pub fn condition_number(a: &[f64], dim: usize) -> f64 {
    match invert(a, dim) {
        Some(inv) => one_norm(a, dim) * one_norm(&inv, dim),
        None => f64::INFINITY,
    }
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_matches_hand_solution() {
        // [[4,2],[2,3]] x = [2,1] -> x = [0.5, 0]
        let x = cholesky_solve(&[4.0, 2.0, 2.0, 3.0], &[2.0, 1.0], 2).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && x[1].abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0], 2).is_err());
    }

    #[test]
    fn invert_and_condition() {
        let a = [2.0, 0.0, 0.0, 0.5];
        let inv = invert(&a, 2).unwrap();
        assert_eq!(inv, vec![0.5, 0.0, 0.0, 2.0]);
        assert!((condition_number(&a, 2) - 4.0).abs() < 1e-12);
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
        assert!(condition_number(&[0.0], 1).is_infinite());
    }
}
