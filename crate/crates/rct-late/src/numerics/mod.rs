//! Small dense least-squares solving and the statistical special functions
//! the estimators consume.
//!
//! Systems here are tiny (a handful of regressors, at most a few dozen), so
//! the solver works through the normal equations with a Cholesky
//! factorization and an explicit pivot tolerance for rank checks.

pub mod dist;

use crate::error::{Error, Result};

/// Relative pivot tolerance for the rank check in [`solve_least_squares`].
///
/// A pivot of the normal equations at or below this fraction of the largest
/// diagonal entry signals collinear columns.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Dense row-major matrix of observations (rows) by regressors (columns).
///
/// Also used to carry covariate blocks, where zero columns are allowed; the
/// `rows >= cols >= 1` requirement is enforced by the solver, not the type.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl DesignMatrix {
    /// Builds a matrix from row-major values, checking shape and finiteness.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Domain(format!(
                "matrix shape {rows}x{cols} does not match {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { values, rows, cols })
    }

    /// An all-zero matrix, including the `cols == 0` covariate-free case.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            values: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    /// Builds a matrix from equal-length columns.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let mut values = vec![0.0; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::Domain(format!(
                    "column {j} has {} entries, expected {rows}",
                    col.len()
                )));
            }
            for (i, &v) in col.iter().enumerate() {
                values[i * cols + j] = v;
            }
        }
        DesignMatrix::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    /// Row `i` as a slice of length `cols`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// Mean of column `j`.
    pub fn column_mean(&self, j: usize) -> f64 {
        if self.rows == 0 {
            return 0.0;
        }
        (0..self.rows).map(|i| self.get(i, j)).sum::<f64>() / self.rows as f64
    }

    /// Means of all columns.
    pub fn column_means(&self) -> Vec<f64> {
        (0..self.cols).map(|j| self.column_mean(j)).collect()
    }

    /// Mean of column `j` over the given row subset.
    pub fn column_mean_over(&self, j: usize, rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().map(|&i| self.get(i, j)).sum::<f64>() / rows.len() as f64
    }

    /// A copy with every column shifted to mean zero.
    pub fn centered(&self) -> DesignMatrix {
        let means = self.column_means();
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j) - means[j]);
            }
        }
        out
    }
}

/// Solves the least-squares problem `min ||design * beta - response||^2`.
///
/// Works through the normal equations with a Cholesky factorization. Pivots
/// are monitored against [`RANK_TOLERANCE`] times the largest diagonal of
/// the Gram matrix; a violation returns [`Error::RankDeficient`], which in
/// the estimators signals collinear covariates or a constant treatment
/// column.
pub fn solve_least_squares(design: &DesignMatrix, response: &[f64]) -> Result<Vec<f64>> {
    let n = design.rows();
    let k = design.cols();
    if k == 0 || n < k {
        return Err(Error::Domain(format!(
            "least squares needs rows >= cols >= 1, got {n}x{k}"
        )));
    }
    if response.len() != n {
        return Err(Error::Domain(format!(
            "response length {} does not match {n} rows",
            response.len()
        )));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("response entries must be finite".into()));
    }

    // Gram matrix G = X'X (k x k, symmetric) and moment vector b = X'y.
    let mut gram = vec![0.0; k * k];
    let mut moment = vec![0.0; k];
    for i in 0..n {
        let row = design.row(i);
        let y = response[i];
        for a in 0..k {
            moment[a] += row[a] * y;
            for b in a..k {
                gram[a * k + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[a * k + b] = gram[b * k + a];
        }
    }

    let scale = (0..k).map(|j| gram[j * k + j]).fold(0.0_f64, f64::max);
    if scale <= 0.0 {
        return Err(Error::RankDeficient);
    }

    // In-place Cholesky G = L L' with pivot monitoring.
    let mut chol = gram;
    for j in 0..k {
        let mut pivot = chol[j * k + j];
        for m in 0..j {
            pivot -= chol[j * k + m] * chol[j * k + m];
        }
        if pivot <= RANK_TOLERANCE * scale {
            return Err(Error::RankDeficient);
        }
        let root = pivot.sqrt();
        chol[j * k + j] = root;
        for i in (j + 1)..k {
            let mut v = chol[i * k + j];
            for m in 0..j {
                v -= chol[i * k + m] * chol[j * k + m];
            }
            chol[i * k + j] = v / root;
        }
    }

    // Forward then back substitution: L z = b, L' beta = z.
    let mut z = moment;
    for i in 0..k {
        for m in 0..i {
            z[i] -= chol[i * k + m] * z[m];
        }
        z[i] /= chol[i * k + i];
    }
    let mut beta = z;
    for i in (0..k).rev() {
        for m in (i + 1)..k {
            beta[i] -= chol[m * k + i] * beta[m];
        }
        beta[i] /= chol[i * k + i];
    }
    Ok(beta)
}
