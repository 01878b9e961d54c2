//! Minimal dense linear algebra: Cholesky factorisation and triangular
//! solves on row-major symmetric positive-definite matrices.
//!
//! Dimensions in this crate stay small (a few hundred at most), so a
//! hand-rolled O(n^3/6) Cholesky is simpler and faster than pulling in a
//! full linear-algebra stack. One property is load-bearing for the ridge
//! learner: the Cholesky factor of a leading principal submatrix is exactly
//! the leading block of the full factor, so a single factorisation serves
//! every nested sub-problem.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Factors a symmetric positive-definite matrix in place: on success the
/// lower triangle of `a` (row-major, `n` x `n`) holds `L` with `A = L L^T`.
/// The strict upper triangle is left untouched and must be ignored.
///
/// Fails with a numeric error naming the pivot column if a pivot is not
/// strictly positive, which is how callers detect rank deficiency.
pub fn cholesky_in_place<T: Real>(a: &mut [T], n: usize) -> Result<()> {
    assert_eq!(a.len(), n * n, "matrix buffer must be n*n");
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::Numeric(format!(
                "cholesky pivot {j} is non-positive ({d}); matrix is not positive definite"
            )));
        }
        let dj = d.sqrt();
        a[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / dj;
        }
    }
    Ok(())
}

/// Solves `A x = b` for the leading `k` x `k` principal block of a factored
/// matrix, overwriting `b` (length `k`) with the solution. `l` is the output
/// of [`cholesky_in_place`] with full dimension `n`; `k <= n`.
pub fn cholesky_solve_leading<T: Real>(l: &[T], n: usize, k: usize, b: &mut [T]) {
    assert!(k <= n, "leading block exceeds factor dimension");
    assert_eq!(b.len(), k, "rhs length must equal block size");
    // Forward substitution L y = b.
    for i in 0..k {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * n + j] * b[j];
        }
        b[i] = s / l[i * n + i];
    }
    // Back substitution L^T x = y.
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in (i + 1)..k {
            s -= l[j * n + i] * b[j];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `A x = b` for a symmetric positive-definite `A` (row-major,
/// consumed as scratch), overwriting `b` with the solution.
pub fn solve_spd_in_place<T: Real>(a: &mut [T], n: usize, b: &mut [T]) -> Result<()> {
    cholesky_in_place(a, n)?;
    cholesky_solve_leading(a, n, n, b);
    Ok(())
}

/// Dot product of two equal-length slices.
pub fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    assert_eq!(x.len(), y.len(), "dot operands must match");
    let mut s = T::zero();
    for (a, b) in x.iter().zip(y) {
        s += *a * *b;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cholesky_matches_hand_computed_factor() {
        // A = [[4,2,2],[2,5,3],[2,3,6]] has L = [[2,0,0],[1,2,0],[1,1,2]].
        let mut a = vec![4.0, 2.0, 2.0, 2.0, 5.0, 3.0, 2.0, 3.0, 6.0];
        cholesky_in_place(&mut a, 3).unwrap();
        let l = [a[0], a[3], a[4], a[6], a[7], a[8]];
        for (got, want) in l.iter().zip([2.0, 1.0, 2.0, 1.0, 1.0, 2.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a0 = [4.0, 2.0, 2.0, 2.0, 5.0, 3.0, 2.0, 3.0, 6.0];
        let x_true = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a0[i * 3 + j] * x_true[j];
            }
        }
        let mut a = a0.to_vec();
        solve_spd_in_place(&mut a, 3, &mut b).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(b[i], x_true[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn leading_block_solve_agrees_with_direct_small_solve() {
        // Factor a 4x4 SPD matrix once, then solve the 2x2 leading system
        // and compare with factoring the 2x2 block alone.
        let full = [
            5.0, 1.0, 0.5, 0.2, //
            1.0, 4.0, 0.3, 0.1, //
            0.5, 0.3, 3.0, 0.4, //
            0.2, 0.1, 0.4, 2.0,
        ];
        let mut l4 = full.to_vec();
        cholesky_in_place(&mut l4, 4).unwrap();
        let mut x = vec![1.0, 2.0];
        cholesky_solve_leading(&l4, 4, 2, &mut x);

        let mut l2 = vec![5.0, 1.0, 1.0, 4.0];
        let mut y = vec![1.0, 2.0];
        solve_spd_in_place(&mut l2, 2, &mut y).unwrap();
        assert_abs_diff_eq!(x[0], y[0], epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], y[1], epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_matrix_reports_numeric_error() {
        // Second column is a multiple of the first.
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let err = cholesky_in_place(&mut a, 2).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
