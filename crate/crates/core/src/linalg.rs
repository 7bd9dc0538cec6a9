//! Dense Cholesky factorization and triangular solves on row-major
//! `n × n` buffers. Only the lower triangle is read and written.

use crate::error::{Error, Result};

/// Relative diagonal jitter applied once when a factorization fails.
pub const JITTER: f64 = 1e-10;

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// In-place lower Cholesky factor `A = LLᵀ`. The strict upper triangle is
/// left untouched and must be ignored by callers.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    assert_eq!(a.len(), n * n);
    for i in 0..n {
        let (done, rest) = a.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + j + 1];
            let s = row_i[j] - dot(&row_i[..j], &row_j[..j]);
            row_i[j] = s / row_j[j];
        }
        let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: i });
        }
        row_i[i] = d.sqrt();
    }
    Ok(())
}

/// Factor `a`, retrying once with `JITTER · scale` added to the diagonal.
/// `scratch` must have the same length as `a` and receives the factor.
pub fn cholesky_with_jitter(a: &[f64], n: usize, scale: f64, scratch: &mut Vec<f64>) -> Result<()> {
    scratch.clear();
    scratch.extend_from_slice(a);
    if cholesky_in_place(scratch, n).is_ok() {
        return Ok(());
    }
    scratch.clear();
    scratch.extend_from_slice(a);
    for i in 0..n {
        scratch[i * n + i] += JITTER * scale;
    }
    cholesky_in_place(scratch, n)
}

/// Solve `L y = b` in place.
pub fn forward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        b[i] = (b[i] - dot(row, &b[..i])) / l[i * n + i];
    }
}

/// Solve `Lᵀ x = y` in place.
pub fn backward_substitute(l: &[f64], n: usize, y: &mut [f64]) {
    for i in (0..n).rev() {
        let yi = y[i] / l[i * n + i];
        y[i] = yi;
        for k in 0..i {
            y[k] -= l[i * n + k] * yi;
        }
    }
}

/// `log |A| = 2 Σ log L_ii`.
pub fn log_det_from_factor(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>()
}

/// `y = L x` with `L` lower triangular.
pub fn lower_mul_vec(l: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        y[i] = dot(&l[i * n..i * n + i + 1], &x[..i + 1]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn factor_and_solve_small() {
        let a = vec![4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let mut l = a.clone();
        cholesky_in_place(&mut l, 3).unwrap();
        // reconstruct
        for i in 0..3 {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert_relative_eq!(s, a[i * 3 + j], epsilon = 1e-14);
            }
        }
        let mut b = vec![1.0, -2.0, 0.5];
        forward_substitute(&l, 3, &mut b);
        backward_substitute(&l, 3, &mut b);
        for i in 0..3 {
            let s: f64 = (0..3).map(|k| a[i * 3 + k] * b[k]).sum();
            assert_relative_eq!(s, [1.0, -2.0, 0.5][i], epsilon = 1e-13);
        }
        assert_relative_eq!(log_det_from_factor(&l, 3), 44.8f64.ln(), epsilon = 1e-13);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(matches!(
            cholesky_in_place(&mut a, 2),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        // rank-one PSD matrix: fails without jitter, succeeds with it
        let a = vec![1.0, 1.0, 1.0, 1.0];
        let mut scratch = Vec::new();
        assert!(cholesky_in_place(&mut a.clone(), 2).is_err());
        cholesky_with_jitter(&a, 2, 1.0, &mut scratch).unwrap();
        assert!(scratch[3] > 0.0);
    }

    #[test]
    fn dot_handles_tails() {
        for n in 0..11 {
            let a: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let expect: f64 = a.iter().map(|x| x * x).sum();
            assert_eq!(dot(&a, &a), expect);
        }
    }
}
