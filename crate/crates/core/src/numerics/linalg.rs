//! Tiny dense linear algebra for the fitter's normal equations.
//!
//! The systems here are at most a handful of parameters wide, so plain
//! Gaussian elimination with partial pivoting is both sufficient and easy
//! to audit. Matrices are row-major `Vec<Vec<f64>>`.

/// Solves `a x = b` in place, returning `None` when the matrix is singular
/// to working precision.
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    debug_assert_eq!(b.len(), n);

    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();

    for col in 0..n {
        // Partial pivot: largest magnitude entry on or below the diagonal.
        let pivot_row = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        let pivot = m[pivot_row][col];
        if !pivot.is_finite() || pivot.abs() < f64::EPSILON * scale_of(&m, col, n) {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);

        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            if factor != 0.0 {
                for k in col..n {
                    let sub = factor * m[col][k];
                    m[row][k] -= sub;
                }
                rhs[row] -= factor * rhs[col];
            }
        }
    }

    // Back substitution.
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Magnitude scale of column `col` used for the singularity threshold.
fn scale_of(m: &[Vec<f64>], col: usize, n: usize) -> f64 {
    let mut s: f64 = 0.0;
    for row in m.iter().take(n) {
        s = s.max(row[col].abs());
    }
    s.max(1e-300)
}

/// Inverts `a` column by column; `None` when singular.
pub(crate) fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve(a, &e)?;
        for row in 0..n {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}
