//! Independent oracles shared by the integration tests.
//!
//! Everything here is deliberately coded on a different path from the
//! library: the normal CDF by series/continued fraction instead of rational
//! approximation, quantiles by bisection, least squares by Gaussian
//! elimination, and the LATE by an explicit two-stage procedure.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use rand::rngs::StdRng;
use rand::Rng;

const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

// erf by the all-positive-terms confluent series; no cancellation.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= 2.0 * x2 / (2.0 * k as f64 + 1.0);
        let next = sum + term;
        if next == sum || k > 400 {
            break;
        }
        sum = next;
    }
    2.0 * INV_SQRT_PI * (-x2).exp() * sum
}

// erfc by the Gauss continued fraction, for y >= 2.5:
// sqrt(pi) e^{y^2} erfc(y) = 1/(y + (1/2)/(y + (2/2)/(y + (3/2)/(y + ...)))).
// Evaluated with Lentz's algorithm.
fn erfc_cf(y: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = y;
    let mut c = y;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = y + a * d;
        if d == 0.0 {
            d = tiny;
        }
        d = 1.0 / d;
        c = y + a / c;
        if c == 0.0 {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-y * y).exp() * INV_SQRT_PI / f
}

/// High-precision standard normal CDF oracle.
pub fn normal_cdf_oracle(z: f64) -> f64 {
    if z > 0.0 {
        return 1.0 - normal_cdf_oracle(-z);
    }
    let y = -z / std::f64::consts::SQRT_2;
    if y < 2.5 {
        0.5 * (1.0 - erf_series(y))
    } else {
        0.5 * erfc_cf(y)
    }
}

/// Normal quantile oracle by bisection on [`normal_cdf_oracle`].
///
/// Upper-tail probabilities are reflected to the lower tail first: near
/// p = 1 the CDF quantizes to ulp(1), which would cap bisection accuracy,
/// while the lower tail carries full relative precision (and 1 - p is exact
/// for p >= 0.5).
pub fn normal_quantile_oracle(p: f64) -> f64 {
    assert!(0.0 < p && p < 1.0);
    if p > 0.5 {
        return -normal_quantile_oracle(1.0 - p);
    }
    let (mut lo, mut hi) = (-10.0_f64, 0.5_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_oracle(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Student t CDF for df = 2 in closed form.
pub fn t_cdf_df2(t: f64) -> f64 {
    0.5 + t / (2.0 * (2.0 + t * t).sqrt())
}

/// Least squares by Gaussian elimination with partial pivoting on the
/// normal equations (independent of the library's Cholesky path).
pub fn gauss_lstsq(design: &[Vec<f64>], response: &[f64]) -> Option<Vec<f64>> {
    let n = design.len();
    let k = design[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for item in a.iter_mut().take(k) {
        debug_assert_eq!(item.len(), k + 1);
    }
    for r in 0..k {
        for c in 0..k {
            let mut s = 0.0;
            for i in 0..n {
                s += design[i][r] * design[i][c];
            }
            a[r][c] = s;
        }
        let mut s = 0.0;
        for i in 0..n {
            s += design[i][r] * response[i];
        }
        a[r][k] = s;
    }
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let factor = a[row][col] / a[col][col];
                for c in col..=k {
                    a[row][c] -= factor * a[col][c];
                }
            }
        }
    }
    Some((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

/// LATE by an explicit two-stage procedure: regress receipt on
/// (1, T, x), then the outcome on (1, fitted receipt, x); the coefficient
/// on the fitted receipt is the estimate.
pub fn two_stage_late(y: &[f64], d: &[u8], t: &[u8], x: &[Vec<f64>]) -> Option<f64> {
    let n = y.len();
    let v = if x.is_empty() { 0 } else { x[0].len() };
    let first: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![1.0, t[i] as f64];
            for j in 0..v {
                row.push(x[i][j]);
            }
            row
        })
        .collect();
    let d_f: Vec<f64> = d.iter().map(|&b| b as f64).collect();
    let stage1 = gauss_lstsq(&first, &d_f)?;
    let fitted: Vec<f64> = first
        .iter()
        .map(|row| row.iter().zip(&stage1).map(|(a, b)| a * b).sum())
        .collect();
    let second: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![1.0, fitted[i]];
            for j in 0..v {
                row.push(x[i][j]);
            }
            row
        })
        .collect();
    let stage2 = gauss_lstsq(&second, y)?;
    Some(stage2[1])
}

/// A random dataset with a reasonably strong first stage, for equivalence
/// checks. Returns (y, d, t, x rows).
pub fn random_dataset(
    rng: &mut StdRng,
    n: usize,
    v: usize,
) -> (Vec<f64>, Vec<u8>, Vec<u8>, Vec<Vec<f64>>) {
    loop {
        let n1 = n / 2;
        let mut t = vec![0u8; n];
        for slot in t.iter_mut().take(n1) {
            *slot = 1;
        }
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            t.swap(i, j);
        }
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..v).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let d: Vec<u8> = (0..n)
            .map(|i| {
                let noise: f64 = rng.gen();
                if t[i] == 1 {
                    (noise < 0.85) as u8
                } else {
                    (noise < 0.15) as u8
                }
            })
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let covariate_part: f64 = x[i].iter().sum::<f64>() * 0.5;
                2.0 * d[i] as f64 + covariate_part + rng.gen_range(-1.0..1.0)
            })
            .collect();
        let n1_actual: usize = t.iter().map(|&b| b as usize).sum();
        if n1_actual == 0 || n1_actual == n {
            continue;
        }
        // Keep the denominator away from zero so the ratio is stable.
        let d1: f64 = d
            .iter()
            .zip(&t)
            .filter(|(_, &ti)| ti == 1)
            .map(|(&di, _)| di as f64)
            .sum::<f64>()
            / n1_actual as f64;
        let d0: f64 = d
            .iter()
            .zip(&t)
            .filter(|(_, &ti)| ti == 0)
            .map(|(&di, _)| di as f64)
            .sum::<f64>()
            / (n - n1_actual) as f64;
        if (d1 - d0).abs() > 0.2 {
            return (y, d, t, x);
        }
    }
}
