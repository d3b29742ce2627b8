//! Periodic (cyclic) tridiagonal solver.
//!
//! Row `i` of the system reads
//! `lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i]`
//! with indices taken modulo `n`, so `lower[0]` and `upper[n-1]` are the
//! corner entries. The solve is a Thomas sweep on the non-periodic part
//! plus a Sherman-Morrison rank-one correction for the corners.

use crate::error::{Error, Result};

/// Solves the cyclic system; requires strict diagonal dominance and `n >= 3`.
pub fn cyclic_tridiag_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::LinearSolve(format!(
            "length mismatch: lower {}, diag {}, upper {}, rhs {}",
            lower.len(),
            n,
            upper.len(),
            rhs.len()
        )));
    }
    if n < 3 {
        return Err(Error::LinearSolve(format!("cyclic system needs n >= 3, got {n}")));
    }
    for i in 0..n {
        if !(diag[i].abs() > lower[i].abs() + upper[i].abs()) {
            return Err(Error::LinearSolve(format!(
                "row {i} not strictly diagonally dominant: |{}| <= |{}| + |{}|",
                diag[i], lower[i], upper[i]
            )));
        }
    }

    let alpha = upper[n - 1]; // A[n-1][0]
    let beta = lower[0]; // A[0][n-1]
    let gamma = -diag[0];

    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= alpha * beta / gamma;

    let mut work = vec![0.0; n];
    let x = thomas(lower, &b, upper, rhs, &mut work);

    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(lower, &b, upper, &u, &mut work);

    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Solves and verifies `||A x - rhs||_inf <= tol * ||rhs||_inf`.
pub fn cyclic_tridiag_solve_checked(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let x = cyclic_tridiag_solve(lower, diag, upper, rhs)?;
    let res = residual_inf(lower, diag, upper, &x, rhs);
    let scale = rhs.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if !(res <= tol * scale) {
        return Err(Error::LinearSolve(format!("residual {res:.3e} exceeds {tol:.1e} * {scale:.3e}")));
    }
    Ok(x)
}

/// Infinity norm of `A x - rhs` for the cyclic matrix.
pub fn residual_inf(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64], rhs: &[f64]) -> f64 {
    let n = x.len();
    (0..n)
        .map(|i| {
            let prev = x[(i + n - 1) % n];
            let next = x[(i + 1) % n];
            (lower[i] * prev + diag[i] * x[i] + upper[i] * next - rhs[i]).abs()
        })
        .fold(0.0, f64::max)
}

// Non-periodic sweep; `lower[0]` and `upper[n-1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], gam: &mut [f64]) -> Vec<f64> {
    let n = diag.len();
    let mut x = vec![0.0; n];
    let mut bet = diag[0];
    x[0] = rhs[0] / bet;
    for j in 1..n {
        gam[j] = upper[j - 1] / bet;
        bet = diag[j] - lower[j] * gam[j];
        x[j] = (rhs[j] - lower[j] * x[j - 1]) / bet;
    }
    for j in (0..n - 1).rev() {
        x[j] -= gam[j + 1] * x[j + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gaussian elimination with partial pivoting on the assembled dense matrix.
    fn dense_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = diag.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            a[i][(i + n - 1) % n] += lower[i];
            a[i][i] += diag[i];
            a[i][(i + 1) % n] += upper[i];
            a[i][n] = rhs[i];
        }
        for col in 0..n {
            let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
            a.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (a[row][n] - s) / a[row][row];
        }
        x
    }

    fn random_system(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let d = lower[i].abs() + upper[i].abs() + rng.gen_range(0.1..2.0);
                if rng.gen_bool(0.3) {
                    -d
                } else {
                    d
                }
            })
            .collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        (lower, diag, upper, rhs)
    }

    #[test]
    fn identity_returns_rhs() {
        let n = 7;
        let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let x = cyclic_tridiag_solve(&vec![0.0; n], &vec![1.0; n], &vec![0.0; n], &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn four_by_four_matches_dense() {
        let (l, d, u) = (vec![1.0; 4], vec![4.0; 4], vec![1.0; 4]);
        let rhs = vec![1.0, 0.0, 0.0, 0.0];
        let x = cyclic_tridiag_solve(&l, &d, &u, &rhs).unwrap();
        let oracle = dense_solve(&l, &d, &u, &rhs);
        // Circulant inverse by hand: x = (7, -2, 1, -2) / 24.
        let hand = [7.0 / 24.0, -2.0 / 24.0, 1.0 / 24.0, -2.0 / 24.0];
        for i in 0..4 {
            assert!((x[i] - oracle[i]).abs() < 1e-14);
            assert!((x[i] - hand[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn random_64_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (l, d, u, _) = random_system(&mut rng, 64);
        let truth: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rhs: Vec<f64> = (0..64)
            .map(|i| l[i] * truth[(i + 63) % 64] + d[i] * truth[i] + u[i] * truth[(i + 1) % 64])
            .collect();
        let x = cyclic_tridiag_solve_checked(&l, &d, &u, &rhs, 1e-12).unwrap();
        let scale = rhs.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(residual_inf(&l, &d, &u, &x, &rhs) <= 1e-12 * scale);
    }

    #[test]
    fn small_systems_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 3..=16 {
            for _ in 0..50 {
                let (l, d, u, rhs) = random_system(&mut rng, n);
                let x = cyclic_tridiag_solve(&l, &d, &u, &rhs).unwrap();
                let y = dense_solve(&l, &d, &u, &rhs);
                for i in 0..n {
                    assert!((x[i] - y[i]).abs() <= 1e-10, "n={n} i={i}: {} vs {}", x[i], y[i]);
                }
            }
        }
    }

    #[test]
    fn rejects_non_dominant_and_tiny() {
        let n = 5;
        assert!(cyclic_tridiag_solve(&vec![1.0; n], &vec![2.0; n], &vec![1.0; n], &vec![1.0; n]).is_err());
        assert!(cyclic_tridiag_solve(&[0.0; 2], &[1.0; 2], &[0.0; 2], &[1.0; 2]).is_err());
    }
}
