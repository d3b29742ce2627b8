//! Discrete calculus on the unit torus.
//!
//! Uniform Eulerian fields of length `n` hold cell averages on the cells
//! `[i/n, (i+1)/n)`, i.e. values at the midpoints `(i + 1/2) / n`.

use crate::error::{invalid, Result};

/// Mean-zero antiderivative `F(x) - mean(F)` with `F(x) = int_0^x f`, sampled
/// at the cell midpoints.
///
/// For a field with zero mean the result is periodic; otherwise it carries the
/// linear part of `F`, exactly as the continuous operator does.
pub fn antiderivative_periodic(f: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    if n == 0 {
        return Err(invalid("antiderivative of an empty field"));
    }
    let h = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &fi in f {
        out.push(h * (acc + 0.5 * fi));
        acc += fi;
    }
    let mean = out.iter().sum::<f64>() * h;
    out.iter_mut().for_each(|v| *v -= mean);
    Ok(out)
}

/// Periodic centered first derivative of a uniform cell field.
pub fn central_derivative(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let inv = n as f64 / 2.0;
    (0..n).map(|i| (f[(i + 1) % n] - f[(i + n - 1) % n]) * inv).collect()
}

/// Differences of a cell field across the faces of a non-uniform periodic
/// grid: entry `i` is `(f[i+1] - f[i]) / dx_face` at the right face of cell `i`,
/// with `dx_face` the distance between the two cell centers.
pub fn face_difference(f: &[f64], widths: &[f64]) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            (f[j] - f[i]) / (0.5 * (widths[i] + widths[j]))
        })
        .collect()
}

/// Inverse of [`face_difference`] up to the mean: integrates a face field back
/// to cell centers and removes the width-weighted mean.
///
/// `antiderivative_faces(face_difference(f, w), w) == f - mean_w(f)` up to
/// rounding, which is the discrete form of `d^{-1} d f = f - int f`.
pub fn antiderivative_faces(g: &[f64], widths: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        out.push(acc);
        let j = (i + 1) % n;
        acc += g[i] * 0.5 * (widths[i] + widths[j]);
    }
    let total: f64 = widths.iter().sum();
    let mean = out.iter().zip(widths).map(|(v, w)| v * w).sum::<f64>() / total;
    out.iter_mut().for_each(|v| *v -= mean);
    out
}

/// Periodic top-hat moving average of width `window` over a uniform field.
///
/// The window must be an integer multiple `k` of the sampling step. For odd
/// `k` the kernel covers `k` whole cells; for even `k` it covers `k - 1` whole
/// cells and half of each neighbour, so the support is exactly `window` wide
/// and centered on every sample.
pub fn coarse_grain(f: &[f64], window: f64) -> Result<Vec<f64>> {
    let n = f.len();
    if n == 0 {
        return Err(invalid("coarse graining an empty field"));
    }
    if !(window > 0.0 && window < 1.0) {
        return Err(invalid(format!("window {window} outside (0, 1)")));
    }
    let k = window_cells(window, n)?;
    if k >= n {
        return Err(invalid(format!("window {window} spans the whole torus")));
    }
    let half = k / 2;
    // prefix[j] = sum of f over the periodic index range [-n, j - n)
    let mut prefix = Vec::with_capacity(3 * n + 1);
    prefix.push(0.0);
    for j in 0..3 * n {
        let last = *prefix.last().unwrap();
        prefix.push(last + f[j % n]);
    }
    let sum = |lo: isize, hi: isize| -> f64 {
        // sum over indices lo..hi (exclusive), both within [-n, 2n)
        let off = n as isize;
        prefix[(hi + off) as usize] - prefix[(lo + off) as usize]
    };
    let inv = 1.0 / k as f64;
    let out = (0..n as isize)
        .map(|i| {
            let h = half as isize;
            if k % 2 == 1 {
                sum(i - h, i + h + 1) * inv
            } else {
                let inner = sum(i - h + 1, i + h);
                let edge = 0.5 * (f[((i - h).rem_euclid(n as isize)) as usize] + f[((i + h) % n as isize) as usize]);
                (inner + edge) * inv
            }
        })
        .collect();
    Ok(out)
}

/// Number of sampling steps in `window`; rejects non-multiples.
pub fn window_cells(window: f64, n: usize) -> Result<usize> {
    let ratio = window * n as f64;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(invalid(format!(
            "window {window} is not an integer multiple of the sampling step 1/{n}"
        )));
    }
    Ok(k as usize)
}

/// Midpoints of the uniform cells.
pub fn midpoints(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    (0..n).map(|i| (i as f64 + 0.5) * h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn antiderivative_examples() {
        assert!(antiderivative_periodic(&[]).is_err());
        let zero = antiderivative_periodic(&[0.0; 16]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        let n = 32;
        let xs = midpoints(n);
        let one = antiderivative_periodic(&vec![1.0; n]).unwrap();
        for (v, x) in one.iter().zip(&xs) {
            assert!((v - (x - 0.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn antiderivative_of_sine_is_second_order() {
        let err = |n: usize| {
            let xs = midpoints(n);
            let f: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x).sin()).collect();
            let a = antiderivative_periodic(&f).unwrap();
            xs.iter()
                .zip(&a)
                .map(|(x, v)| (v + (2.0 * PI * x).cos() / (2.0 * PI)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 < 1e-3);
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn centered_derivative_of_antiderivative_is_second_order() {
        let n = 128;
        let xs = midpoints(n);
        let f: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x).cos() + 0.3 * (4.0 * PI * x).sin()).collect();
        let back = antiderivative_periodic(&central_derivative(&f)).unwrap();
        let mean = f.iter().sum::<f64>() / n as f64;
        let err = f.iter().zip(&back).map(|(a, b)| (a - mean - b).abs()).fold(0.0, f64::max);
        assert!(err < 10.0 * (2.0 * PI / n as f64).powi(2), "err {err}");
    }

    #[test]
    fn staggered_pair_is_exact() {
        let widths = [0.1, 0.3, 0.05, 0.25, 0.2, 0.1];
        let f = [1.0, -2.0, 0.5, 4.0, 3.0, -1.0];
        let back = antiderivative_faces(&face_difference(&f, &widths), &widths);
        let mean = f.iter().zip(&widths).map(|(a, w)| a * w).sum::<f64>();
        for (a, b) in f.iter().zip(&back) {
            assert!((a - mean - b).abs() < 1e-14);
        }
    }

    #[test]
    fn coarse_grain_examples() {
        let c = coarse_grain(&[2.5; 40], 0.1).unwrap();
        assert!(c.iter().all(|&v| (v - 2.5).abs() < 1e-15));

        // Square wave with 4 cells per period, duty 0.5, window of 8 periods.
        let n = 512;
        let f: Vec<f64> = (0..n).map(|i| if i % 4 < 2 { 1.0 } else { 0.0 }).collect();
        let g = coarse_grain(&f, 32.0 / n as f64).unwrap();
        assert!(g.iter().all(|&v| (v - 0.5).abs() < 1e-12));

        let xs = midpoints(256);
        let s: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x).sin()).collect();
        let g = coarse_grain(&s, 1.0 / 256.0).unwrap();
        assert!(s.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-14));
        let g3 = coarse_grain(&s, 3.0 / 256.0).unwrap();
        let err = s.iter().zip(&g3).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // top-hat smoothing error ~ w^2 (2 pi)^2 / 24 for a unit sine
        let w: f64 = 3.0 / 256.0;
        assert!(err < w * w * (2.0 * PI).powi(2) / 12.0);

        assert!(coarse_grain(&s, 1.5 / 256.0).is_err());
    }

    proptest! {
        #[test]
        fn coarse_grain_preserves_mean_and_range(
            f in proptest::collection::vec(-10.0f64..10.0, 64),
            k in 1usize..40,
        ) {
            let g = coarse_grain(&f, k as f64 / 64.0).unwrap();
            let (mf, mg) = (f.iter().sum::<f64>() / 64.0, g.iter().sum::<f64>() / 64.0);
            prop_assert!((mf - mg).abs() < 1e-12);
            let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(g.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }

        #[test]
        fn antiderivative_is_mean_zero(f in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
            let a = antiderivative_periodic(&f).unwrap();
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            prop_assert!(mean.abs() <= 1e-12);
        }

        #[test]
        fn staggered_identity_holds(
            f in proptest::collection::vec(-10.0f64..10.0, 3..64),
            seed in proptest::collection::vec(0.1f64..2.0, 64),
        ) {
            let n = f.len();
            let total: f64 = seed[..n].iter().sum();
            let widths: Vec<f64> = seed[..n].iter().map(|w| w / total).collect();
            let back = antiderivative_faces(&face_difference(&f, &widths), &widths);
            let mean: f64 = f.iter().zip(&widths).map(|(a, w)| a * w).sum();
            for (a, b) in f.iter().zip(&back) {
                prop_assert!((a - mean - b).abs() < 1e-11);
            }
        }
    }
}
