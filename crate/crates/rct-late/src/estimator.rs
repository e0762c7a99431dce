//! Estimators for the simple (non-blocked, non-clustered) design: the two
//! intention-to-treat fits, the LATE ratio, residual-based and classical IV
//! variance estimators, inference, and the weak-instrument diagnostic.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::dist::{normal_cdf, normal_quantile, student_t_cdf, student_t_quantile};
use crate::numerics::{solve_least_squares, DesignMatrix};

/// Threshold below which an estimated compliance effect counts as zero.
pub const COMPLIANCE_THRESHOLD: f64 = 1e-12;

/// First-stage F below this flags a weak instrument.
pub const WEAK_INSTRUMENT_F: f64 = 16.0;

/// Variance estimators available for the LATE ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    /// Residual-based plug-in upper bound.
    Db,
    /// The plug-in bound minus a Cauchy-Schwarz floor on the heterogeneity
    /// term.
    DbBounded,
    /// The pooled constant-effects variance of classical IV software.
    Iv,
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VarianceMethod::Db => "db",
            VarianceMethod::DbBounded => "db_bounded",
            VarianceMethod::Iv => "iv",
        };
        f.write_str(s)
    }
}

/// Non-fatal conditions attached to results.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Warning {
    /// First-stage F below [`WEAK_INSTRUMENT_F`].
    WeakInstrument,
    /// Estimated compliance effect is negative.
    NegativeCompliance,
    /// The bounded variance hit its floor at zero.
    FlooredVariance,
    /// A pooling weight was negative and floored at zero.
    NegativeWeight,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Warning::WeakInstrument => "weak_instrument",
            Warning::NegativeCompliance => "negative_compliance",
            Warning::FlooredVariance => "floored_variance",
            Warning::NegativeWeight => "negative_weight",
        };
        f.write_str(s)
    }
}

/// One intention-to-treat regression fit (outcome or receipt model).
#[derive(Debug, Clone)]
pub struct IttFit {
    /// Coefficient on the centered assignment indicator.
    pub effect: f64,
    /// Intercept of the centered model (the response mean).
    pub intercept: f64,
    /// Coefficients on the grand-centered covariates.
    pub covariate_coefs: Vec<f64>,
    /// Group-centered residuals for treated units, in row order.
    pub residuals_treated: Vec<f64>,
    /// Group-centered residuals for control units, in row order.
    pub residuals_control: Vec<f64>,
    pub n_treated: usize,
    pub n_control: usize,
}

impl IttFit {
    pub fn n(&self) -> usize {
        self.n_treated + self.n_control
    }
}

/// Fits least squares of `response` on an intercept, the centered assignment
/// indicator, and grand-centered covariates.
///
/// The effect equals the difference in arm means adjusted by the covariate
/// imbalance; the returned residuals are the group-centered values that the
/// variance estimators consume.
pub fn fit_itt(response: &[f64], assignment: &[u8], covariates: &DesignMatrix) -> Result<IttFit> {
    let n = response.len();
    if assignment.len() != n || covariates.rows() != n {
        return Err(Error::Domain(
            "response, assignment, and covariates must share a length".into(),
        ));
    }
    let n1: usize = assignment.iter().map(|&b| b as usize).sum();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::DegenerateArm);
    }
    let v = covariates.cols();
    let p = n1 as f64 / n as f64;
    let x_means = covariates.column_means();

    let mut design = DesignMatrix::zeros(n, 2 + v);
    for i in 0..n {
        design.set(i, 0, 1.0);
        design.set(i, 1, assignment[i] as f64 - p);
        for j in 0..v {
            design.set(i, 2 + j, covariates.get(i, j) - x_means[j]);
        }
    }
    let coefs = solve_least_squares(&design, response)?;
    let intercept = coefs[0];
    let effect = coefs[1];
    let covariate_coefs = coefs[2..].to_vec();

    // Group-centered residuals (equal to the OLS residuals of the fit).
    let mut mean1 = 0.0;
    let mut mean0 = 0.0;
    for i in 0..n {
        if assignment[i] == 1 {
            mean1 += response[i];
        } else {
            mean0 += response[i];
        }
    }
    mean1 /= n1 as f64;
    mean0 /= n0 as f64;
    let mut x_mean1 = vec![0.0; v];
    let mut x_mean0 = vec![0.0; v];
    for i in 0..n {
        let target = if assignment[i] == 1 {
            &mut x_mean1
        } else {
            &mut x_mean0
        };
        for j in 0..v {
            target[j] += covariates.get(i, j);
        }
    }
    for j in 0..v {
        x_mean1[j] /= n1 as f64;
        x_mean0[j] /= n0 as f64;
    }

    let mut residuals_treated = Vec::with_capacity(n1);
    let mut residuals_control = Vec::with_capacity(n0);
    for i in 0..n {
        let treated = assignment[i] == 1;
        let (arm_mean, x_mean) = if treated {
            (mean1, &x_mean1)
        } else {
            (mean0, &x_mean0)
        };
        let mut r = response[i] - arm_mean;
        for j in 0..v {
            r -= (covariates.get(i, j) - x_mean[j]) * covariate_coefs[j];
        }
        if treated {
            residuals_treated.push(r);
        } else {
            residuals_control.push(r);
        }
    }

    Ok(IttFit {
        effect,
        intercept,
        covariate_coefs,
        residuals_treated,
        residuals_control,
        n_treated: n1,
        n_control: n0,
    })
}

/// The two ITT fits plus the ratio estimate.
#[derive(Debug, Clone)]
pub struct LateFit {
    pub fit_y: IttFit,
    pub fit_d: IttFit,
    pub tau_itt: f64,
    pub pi_itt: f64,
    pub tau_late: f64,
    pub warnings: Vec<Warning>,
}

/// Estimates the LATE ratio from the outcome and receipt fits, using the
/// same covariate set in both models (which keeps the result identical to
/// two-stage least squares).
pub fn estimate_late(data: &Dataset) -> Result<LateFit> {
    let fit_y = fit_itt(data.outcome(), data.assignment(), data.covariates())?;
    let fit_d = fit_itt(&data.receipt_f64(), data.assignment(), data.covariates())?;
    let tau_itt = fit_y.effect;
    let pi_itt = fit_d.effect;
    if pi_itt.abs() <= COMPLIANCE_THRESHOLD {
        return Err(Error::ZeroComplianceEffect);
    }
    let mut warnings = Vec::new();
    if pi_itt < 0.0 {
        warnings.push(Warning::NegativeCompliance);
    }
    Ok(LateFit {
        tau_itt,
        pi_itt,
        tau_late: tau_itt / pi_itt,
        fit_y,
        fit_d,
        warnings,
    })
}

/// Per-arm pieces of the residual variance split into outcome, receipt, and
/// covariance terms. All four share one denominator, so the first three sum
/// to `s2_r` exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArmComponents {
    pub s2_ry: f64,
    pub s2_rd: f64,
    pub s2_ryd: f64,
    pub s2_r: f64,
}

/// The component split for both arms.
#[derive(Debug, Clone, Copy, Default)]
pub struct VarianceComponents {
    pub treated: ArmComponents,
    pub control: ArmComponents,
}

fn arm_components(ry: &[f64], rd: &[f64], tau_late: f64, pi_sq: f64, df: f64) -> ArmComponents {
    let mut sum_yy = 0.0;
    let mut sum_dd = 0.0;
    let mut sum_yd = 0.0;
    for (a, b) in ry.iter().zip(rd) {
        sum_yy += a * a;
        sum_dd += b * b;
        sum_yd += a * b;
    }
    let base = pi_sq * df;
    ArmComponents {
        s2_ry: sum_yy / base,
        s2_rd: tau_late * tau_late * sum_dd / base,
        s2_ryd: -2.0 * tau_late * sum_yd / base,
        s2_r: (sum_yy + tau_late * tau_late * sum_dd - 2.0 * tau_late * sum_yd) / base,
    }
}

/// Residual-based plug-in variance for the LATE estimator, with its
/// component decomposition.
///
/// Covariate degrees of freedom are split across the arms in proportion to
/// the assignment rate, so the denominators may be fractional.
pub fn variance_db(
    fit_y: &IttFit,
    fit_d: &IttFit,
    tau_late: f64,
    v: usize,
) -> Result<(f64, VarianceComponents)> {
    let n1 = fit_y.n_treated;
    let n0 = fit_y.n_control;
    if fit_d.n_treated != n1 || fit_d.n_control != n0 {
        return Err(Error::Domain(
            "outcome and receipt fits disagree on arm sizes".into(),
        ));
    }
    let n = (n1 + n0) as f64;
    let p = n1 as f64 / n;
    let df1 = n1 as f64 - v as f64 * p - 1.0;
    let df0 = n0 as f64 - v as f64 * (1.0 - p) - 1.0;
    if df1 <= 0.0 || df0 <= 0.0 {
        return Err(Error::InsufficientDf);
    }
    let pi_sq = fit_d.effect * fit_d.effect;
    let treated = arm_components(
        &fit_y.residuals_treated,
        &fit_d.residuals_treated,
        tau_late,
        pi_sq,
        df1,
    );
    let control = arm_components(
        &fit_y.residuals_control,
        &fit_d.residuals_control,
        tau_late,
        pi_sq,
        df0,
    );
    let variance = treated.s2_r / n1 as f64 + control.s2_r / n0 as f64;
    Ok((variance, VarianceComponents { treated, control }))
}

/// Subtracts a Cauchy-Schwarz lower bound on the heterogeneity term from the
/// plug-in variance, flooring at zero. Returns the value and whether the
/// floor bound.
pub fn variance_db_bounded(
    variance_db: f64,
    components: &VarianceComponents,
    n: usize,
) -> (f64, bool) {
    let s1 = components.treated.s2_r.max(0.0).sqrt();
    let s0 = components.control.s2_r.max(0.0).sqrt();
    let bound = (s1 - s0) * (s1 - s0) / n as f64;
    let adjusted = variance_db - bound;
    if adjusted < 0.0 {
        (0.0, true)
    } else {
        (adjusted, false)
    }
}

/// The constant-effects variance of classical IV software: one pooled
/// residual variance with `n - V - 2` degrees of freedom.
pub fn variance_iv(fit_y: &IttFit, fit_d: &IttFit, tau_late: f64, v: usize) -> Result<f64> {
    let n1 = fit_y.n_treated;
    let n0 = fit_y.n_control;
    let n = n1 + n0;
    let df = n as f64 - v as f64 - 2.0;
    if df <= 0.0 {
        return Err(Error::InsufficientDf);
    }
    let mut rss = 0.0;
    for (ry, rd) in fit_y
        .residuals_treated
        .iter()
        .zip(&fit_d.residuals_treated)
        .chain(fit_y.residuals_control.iter().zip(&fit_d.residuals_control))
    {
        let r = ry - tau_late * rd;
        rss += r * r;
    }
    let pi_sq = fit_d.effect * fit_d.effect;
    let s2 = rss / (pi_sq * df);
    Ok(s2 * (1.0 / n1 as f64 + 1.0 / n0 as f64))
}

/// F statistic of the no-covariate regression of receipt on assignment.
///
/// Infinite when the receipt is perfectly predicted by assignment; zero when
/// receipt does not vary with assignment at all.
pub fn first_stage_f(receipt: &[u8], assignment: &[u8]) -> f64 {
    let n = receipt.len();
    let n1: usize = assignment.iter().map(|&b| b as usize).sum();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 || n < 3 {
        return 0.0;
    }
    let sum1: f64 = receipt
        .iter()
        .zip(assignment)
        .filter(|(_, &t)| t == 1)
        .map(|(&d, _)| d as f64)
        .sum();
    let sum0: f64 = receipt
        .iter()
        .zip(assignment)
        .filter(|(_, &t)| t == 0)
        .map(|(&d, _)| d as f64)
        .sum();
    let mean1 = sum1 / n1 as f64;
    let mean0 = sum0 / n0 as f64;
    let grand = (sum1 + sum0) / n as f64;

    let model_ss = n1 as f64 * (mean1 - grand) * (mean1 - grand)
        + n0 as f64 * (mean0 - grand) * (mean0 - grand);
    if model_ss == 0.0 {
        return 0.0;
    }
    let mut resid_ss = 0.0;
    for (&d, &t) in receipt.iter().zip(assignment) {
        let m = if t == 1 { mean1 } else { mean0 };
        let r = d as f64 - m;
        resid_ss += r * r;
    }
    if resid_ss == 0.0 {
        return f64::INFINITY;
    }
    model_ss / (resid_ss / (n as f64 - 2.0))
}

/// Reference distribution for tests and intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    T,
    Z,
}

/// A confidence interval with its test statistic and p-value.
#[derive(Debug, Clone, Copy)]
pub struct Inference {
    pub variance: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub t_stat: f64,
    pub p_value: f64,
}

/// Two-sided inference for a point estimate at level `alpha`.
pub fn infer(
    tau_late: f64,
    variance: f64,
    df: f64,
    alpha: f64,
    reference: Reference,
) -> Result<Inference> {
    if variance.is_nan() || variance < 0.0 {
        return Err(Error::Domain(format!(
            "variance must be nonnegative, got {variance}"
        )));
    }
    if alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if reference == Reference::T && (df.is_nan() || df <= 0.0) {
        return Err(Error::Domain(format!("t reference needs df > 0, got {df}")));
    }
    let se = variance.sqrt();
    let t_stat = if se == 0.0 {
        if tau_late == 0.0 {
            0.0
        } else {
            tau_late.signum() * f64::INFINITY
        }
    } else {
        tau_late / se
    };
    let quantile = match reference {
        Reference::T => student_t_quantile(1.0 - alpha / 2.0, df)?,
        Reference::Z => normal_quantile(1.0 - alpha / 2.0)?,
    };
    let upper_tail = match reference {
        Reference::T => 1.0 - student_t_cdf(t_stat.abs(), df)?,
        Reference::Z => 1.0 - normal_cdf(t_stat.abs()),
    };
    let p_value = (2.0 * upper_tail).min(1.0);
    let half = quantile * se;
    Ok(Inference {
        variance,
        se,
        ci: (tau_late - half, tau_late + half),
        t_stat,
        p_value,
    })
}

/// Options for a full simple-design analysis.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    /// Variance estimators to report; the first one drives the headline
    /// interval.
    pub variance_methods: Vec<VarianceMethod>,
    pub alpha: f64,
    pub reference: Reference,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            variance_methods: vec![VarianceMethod::Db],
            alpha: 0.05,
            reference: Reference::T,
        }
    }
}

/// Full result of a simple-design analysis.
#[derive(Debug, Clone)]
pub struct LateResult {
    pub tau_itt: f64,
    pub pi_itt: f64,
    pub tau_late: f64,
    /// Variance estimate per requested method.
    pub variance: BTreeMap<VarianceMethod, f64>,
    pub components: VarianceComponents,
    pub df: f64,
    /// Interval and test for the first requested method.
    pub ci: (f64, f64),
    pub t_stat: f64,
    pub p_value: f64,
    pub first_stage_f: f64,
    pub warnings: Vec<Warning>,
}

/// Runs estimation, the requested variance estimators, inference, and the
/// weak-instrument diagnostic on one dataset.
pub fn analyze(data: &Dataset, opts: &AnalysisOptions) -> Result<LateResult> {
    let methods = if opts.variance_methods.is_empty() {
        vec![VarianceMethod::Db]
    } else {
        opts.variance_methods.clone()
    };
    let fit = estimate_late(data)?;
    let v = data.v();
    let n = data.n();

    let (var_db, components) = variance_db(&fit.fit_y, &fit.fit_d, fit.tau_late, v)?;
    let mut warnings = fit.warnings.clone();
    let mut variance = BTreeMap::new();
    for method in &methods {
        let value = match method {
            VarianceMethod::Db => var_db,
            VarianceMethod::DbBounded => {
                let (value, floored) = variance_db_bounded(var_db, &components, n);
                if floored {
                    warnings.push(Warning::FlooredVariance);
                }
                value
            }
            VarianceMethod::Iv => variance_iv(&fit.fit_y, &fit.fit_d, fit.tau_late, v)?,
        };
        variance.insert(*method, value);
    }

    let df = n as f64 - v as f64 - 2.0;
    let primary = infer(
        fit.tau_late,
        variance[&methods[0]],
        df,
        opts.alpha,
        opts.reference,
    )?;
    let f_stat = first_stage_f(data.receipt(), data.assignment());
    if f_stat < WEAK_INSTRUMENT_F {
        warnings.push(Warning::WeakInstrument);
    }
    warnings.sort();
    warnings.dedup();

    Ok(LateResult {
        tau_itt: fit.tau_itt,
        pi_itt: fit.pi_itt,
        tau_late: fit.tau_late,
        variance,
        components,
        df,
        ci: primary.ci,
        t_stat: primary.t_stat,
        p_value: primary.p_value,
        first_stage_f: f_stat,
        warnings,
    })
}
