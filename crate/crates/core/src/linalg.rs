//! Dense symmetric solves over the generic scalar.
//!
//! Matrices are row-major `Vec<T>` of side `n`. Everything here is generic
//! so kernel solves and log-determinants can carry dual tangents.

use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Lower Cholesky factor, or `None` if a pivot is not positive and finite.
pub fn cholesky<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                let d = s.value();
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Factors `a + λI`, multiplying λ by 10 up to three times on failure.
pub fn cholesky_jittered<T: Real>(a: &[T], n: usize, lambda: f64, what: &'static str) -> Result<Vec<T>> {
    let mut lam = lambda;
    for _ in 0..4 {
        let mut m = a.to_vec();
        for i in 0..n {
            m[i * n + i] += T::cst(lam);
        }
        if let Some(l) = cholesky(&m, n) {
            return Ok(l);
        }
        lam *= 10.0;
    }
    Err(Error::IllConditioned { what })
}

/// Solves `L Lᵀ x = b`.
pub fn chol_solve<T: Real>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Solves with an `f64` factor against a right-hand side of any scalar type.
pub fn chol_solve_f64<T: Real>(l: &[f64], n: usize, b: &[T]) -> Vec<T> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= y[k] * l[i * n + k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= y[k] * l[k * n + i];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// log det from a Cholesky factor.
pub fn chol_logdet<T: Real>(l: &[T], n: usize) -> T {
    let mut s = T::zero();
    for i in 0..n {
        s += l[i * n + i].ln();
    }
    s * 2.0
}

/// `A Aᵀ` for a row-major `rows × cols` matrix.
pub fn gram_rows<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut g = vec![T::zero(); rows * rows];
    for i in 0..rows {
        for j in 0..=i {
            let mut s = T::zero();
            for k in 0..cols {
                s += a[i * cols + k] * a[j * cols + k];
            }
            g[i * rows + j] = s;
            g[j * rows + i] = s;
        }
    }
    g
}

/// `Aᵀ A` for a row-major `rows × cols` matrix.
pub fn gram_cols<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut g = vec![T::zero(); cols * cols];
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        for i in 0..cols {
            let ri = row[i];
            for j in 0..=i {
                g[i * cols + j] += ri * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            g[j * cols + i] = g[i * cols + j];
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Dual;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let x = chol_solve(&l, 3, &[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        let det = 4.0 * (5.0 * 3.0 - 1.0) - 2.0 * (2.0 * 3.0 - 0.6) + 0.6 * (2.0 - 5.0 * 0.6);
        assert!((chol_logdet(&l, 3) - f64::ln(det)).abs() < 1e-12);
    }

    #[test]
    fn indefinite_fails_then_jitter_gives_up() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&a, 2).is_none());
        assert!(matches!(
            cholesky_jittered(&a, 2, 1e-6, "kernel"),
            Err(Error::IllConditioned { what: "kernel" })
        ));
    }

    #[test]
    fn logdet_tangent_is_trace_of_inverse_times_tangent() {
        // d log det(A + tB) / dt = tr(A⁻¹B)
        let a = [3.0, 1.0, 1.0, 2.0];
        let b = [1.0, 0.5, 0.5, -1.0];
        let m: Vec<Dual<f64>> = a.iter().zip(&b).map(|(&x, &y)| Dual::new(x, y)).collect();
        let l = cholesky(&m, 2).unwrap();
        let d = chol_logdet(&l, 2);
        let inv = [2.0 / 5.0, -1.0 / 5.0, -1.0 / 5.0, 3.0 / 5.0];
        let tr = inv[0] * b[0] + inv[1] * b[2] + inv[2] * b[1] + inv[3] * b[3];
        assert!((d.eps - tr).abs() < 1e-12);
    }

    #[test]
    fn grams_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(gram_rows(&a, 2, 3), vec![14.0, 32.0, 32.0, 77.0]);
        assert_eq!(gram_cols(&a, 2, 3), vec![17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
    }
}
