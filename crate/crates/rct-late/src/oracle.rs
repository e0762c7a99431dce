//! Exact finite-population truths computed from fully known potential
//! outcomes: estimands, linearized residual variances, and exhaustive
//! randomization distributions.
//!
//! Everything here treats the potential outcomes as fixed; the only random
//! element is which units land in the treatment arm. That makes these
//! quantities exact oracles for the estimators, not estimates themselves.

use crate::error::{Error, Result};
use crate::numerics::{solve_least_squares, DesignMatrix};

/// Threshold below which a compliance effect counts as zero.
pub const COMPLIANCE_THRESHOLD: f64 = 1e-12;

/// Guard on the number of assignments an exhaustive enumeration may visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// A finite population with all four potential outcomes known.
///
/// `d1[i] >= d0[i]` (no defiers) is enforced at construction. The exclusion
/// restriction (equal outcomes for always/never-takers) is how generated
/// populations are built, but hand-constructed ones may break it on purpose;
/// [`PotentialPopulation::exclusion_holds`] reports whether it holds.
#[derive(Debug, Clone)]
pub struct PotentialPopulation {
    y1: Vec<f64>,
    y0: Vec<f64>,
    d1: Vec<u8>,
    d0: Vec<u8>,
    x: DesignMatrix,
    delta: Option<Vec<f64>>,
}

impl PotentialPopulation {
    pub fn new(
        y1: Vec<f64>,
        y0: Vec<f64>,
        d1: Vec<u8>,
        d0: Vec<u8>,
        x: DesignMatrix,
    ) -> Result<Self> {
        let n = y1.len();
        if n == 0 {
            return Err(Error::Domain("population must be nonempty".into()));
        }
        if y0.len() != n || d1.len() != n || d0.len() != n || x.rows() != n {
            return Err(Error::Domain(
                "population fields must have matching lengths".into(),
            ));
        }
        if y1.iter().chain(y0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("potential outcomes must be finite".into()));
        }
        if d1.iter().chain(d0.iter()).any(|&v| v > 1) {
            return Err(Error::Domain(
                "potential receipt indicators must be 0 or 1".into(),
            ));
        }
        if d1.iter().zip(&d0).any(|(&a, &b)| a < b) {
            return Err(Error::Domain(
                "monotonicity violated: a unit has d1 < d0 (defier)".into(),
            ));
        }
        Ok(Self {
            y1,
            y0,
            d1,
            d0,
            x,
            delta: None,
        })
    }

    /// Attaches the latent simulation draws (generator use only).
    pub fn with_delta(mut self, delta: Vec<f64>) -> Result<Self> {
        if delta.len() != self.n() {
            return Err(Error::Domain("delta length must match n".into()));
        }
        self.delta = Some(delta);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    /// Number of covariate columns.
    pub fn v(&self) -> usize {
        self.x.cols()
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn d1(&self) -> &[u8] {
        &self.d1
    }

    pub fn d0(&self) -> &[u8] {
        &self.d0
    }

    pub fn x(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn delta(&self) -> Option<&[f64]> {
        self.delta.as_deref()
    }

    /// Whether always-takers and never-takers all have equal potential
    /// outcomes in the two arms.
    pub fn exclusion_holds(&self) -> bool {
        (0..self.n()).all(|i| self.d1[i] != self.d0[i] || self.y1[i] == self.y0[i])
    }

    /// Observed outcome and receipt under a given assignment vector.
    pub fn reveal(&self, assignment: &[u8]) -> (Vec<f64>, Vec<u8>) {
        let y = assignment
            .iter()
            .enumerate()
            .map(|(i, &t)| if t == 1 { self.y1[i] } else { self.y0[i] })
            .collect();
        let d = assignment
            .iter()
            .enumerate()
            .map(|(i, &t)| if t == 1 { self.d1[i] } else { self.d0[i] })
            .collect();
        (y, d)
    }
}

/// Population-level estimands and the hypothetical covariate coefficients.
#[derive(Debug, Clone)]
pub struct Estimands {
    /// Intention-to-treat effect on the outcome.
    pub tau_itt: f64,
    /// Intention-to-treat effect on receipt (the complier share).
    pub pi_itt: f64,
    /// The LATE estimand, `tau_itt / pi_itt`.
    pub tau_10: f64,
    /// Principal-stratum shares `(p11, p10, p00)`; defiers are absent.
    pub strata_shares: (f64, f64, f64),
    /// Coefficients of `p*Y(1) + (1-p)*Y(0)` on grand-centered covariates.
    pub beta_star: Vec<f64>,
    /// Coefficients of `p*D(1) + (1-p)*D(0)` on grand-centered covariates.
    pub gamma_star: Vec<f64>,
}

/// Estimands plus the exact variance pieces of the linearized contrast.
#[derive(Debug, Clone)]
pub struct TrueQuantities {
    pub estimands: Estimands,
    /// Exact variance of the linearized treatment-control contrast.
    pub var_qbar: f64,
    /// Variance of the treatment-arm linearized residuals, 1/(n-1) scaled.
    pub s2_r1: f64,
    /// Variance of the control-arm linearized residuals.
    pub s2_r0: f64,
    /// Treatment-control residual covariance (unidentifiable from data;
    /// exposed for completeness).
    pub s2_r10: f64,
    /// Heterogeneity of the unit-level linearized effects.
    pub s2_tau: f64,
}

// Coefficients of `response` on grand-centered covariate columns. Columns
// that are identically zero after centering get a zero coefficient, so a
// population padded with zero covariates matches the covariate-free one.
fn hypothetical_coefficients(x: &DesignMatrix, response: &[f64]) -> Result<Vec<f64>> {
    let n = x.rows();
    let v = x.cols();
    if v == 0 {
        return Ok(Vec::new());
    }
    let centered = x.centered();
    let live: Vec<usize> = (0..v)
        .filter(|&j| (0..n).any(|i| centered.get(i, j) != 0.0))
        .collect();
    let mut coefs = vec![0.0; v];
    if live.is_empty() {
        return Ok(coefs);
    }
    // Intercept column absorbs the response mean.
    let mut design = DesignMatrix::zeros(n, live.len() + 1);
    for i in 0..n {
        design.set(i, 0, 1.0);
        for (k, &j) in live.iter().enumerate() {
            design.set(i, k + 1, centered.get(i, j));
        }
    }
    let solved = solve_least_squares(&design, response)?;
    for (k, &j) in live.iter().enumerate() {
        coefs[j] = solved[k + 1];
    }
    Ok(coefs)
}

fn mean_u8(v: &[u8]) -> f64 {
    v.iter().map(|&b| b as f64).sum::<f64>() / v.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Exact estimands of a population under assignment rate `p`.
pub fn true_estimands(pop: &PotentialPopulation, p: f64) -> Result<Estimands> {
    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return Err(Error::Domain(format!(
            "assignment rate must lie in (0, 1), got {p}"
        )));
    }
    let n = pop.n();
    let tau_itt = mean(&pop.y1) - mean(&pop.y0);
    let dbar1 = mean_u8(&pop.d1);
    let dbar0 = mean_u8(&pop.d0);
    let pi_itt = dbar1 - dbar0;
    if pi_itt.abs() <= COMPLIANCE_THRESHOLD {
        return Err(Error::ZeroComplianceEffect);
    }
    let tau_10 = tau_itt / pi_itt;

    let combined_y: Vec<f64> = (0..n)
        .map(|i| p * pop.y1[i] + (1.0 - p) * pop.y0[i])
        .collect();
    let combined_d: Vec<f64> = (0..n)
        .map(|i| p * pop.d1[i] as f64 + (1.0 - p) * pop.d0[i] as f64)
        .collect();
    let beta_star = hypothetical_coefficients(&pop.x, &combined_y)?;
    let gamma_star = hypothetical_coefficients(&pop.x, &combined_d)?;

    Ok(Estimands {
        tau_itt,
        pi_itt,
        tau_10,
        strata_shares: (dbar0, pi_itt, 1.0 - dbar1),
        beta_star,
        gamma_star,
    })
}

/// Linearized residuals `R_i(t)` for both arms, given the estimands.
pub fn linearized_residuals(
    pop: &PotentialPopulation,
    estimands: &Estimands,
) -> (Vec<f64>, Vec<f64>) {
    let n = pop.n();
    let v = pop.v();
    let ybar1 = mean(&pop.y1);
    let ybar0 = mean(&pop.y0);
    let dbar1 = mean_u8(&pop.d1);
    let dbar0 = mean_u8(&pop.d0);
    let x_means = pop.x.column_means();
    let pi = estimands.pi_itt;
    let tau_10 = estimands.tau_10;

    let mut r1 = Vec::with_capacity(n);
    let mut r0 = Vec::with_capacity(n);
    for i in 0..n {
        let mut xb = 0.0;
        let mut xg = 0.0;
        for j in 0..v {
            let centered = pop.x.get(i, j) - x_means[j];
            xb += centered * estimands.beta_star[j];
            xg += centered * estimands.gamma_star[j];
        }
        let y1c = pop.y1[i] - ybar1;
        let y0c = pop.y0[i] - ybar0;
        let d1c = pop.d1[i] as f64 - dbar1;
        let d0c = pop.d0[i] as f64 - dbar0;
        r1.push((y1c - xb - tau_10 * (d1c - xg)) / pi);
        r0.push((y0c - xb - tau_10 * (d0c - xg)) / pi);
    }
    (r1, r0)
}

/// Exact variance of the linearized contrast for `n1` treated units, along
/// with its residual-variance components.
pub fn true_var_qbar(pop: &PotentialPopulation, n1: usize, p: f64) -> Result<TrueQuantities> {
    let n = pop.n();
    if n1 == 0 || n1 >= n {
        return Err(Error::Domain(format!(
            "treated count must satisfy 0 < n1 < n, got {n1} of {n}"
        )));
    }
    let estimands = true_estimands(pop, p)?;
    let (r1, r0) = linearized_residuals(pop, &estimands);

    let denom = (n - 1) as f64;
    let s2_r1 = r1.iter().map(|r| r * r).sum::<f64>() / denom;
    let s2_r0 = r0.iter().map(|r| r * r).sum::<f64>() / denom;
    let s2_r10 = r1.iter().zip(&r0).map(|(a, b)| a * b).sum::<f64>() / denom;
    let s2_tau = r1
        .iter()
        .zip(&r0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / denom;
    let n0 = n - n1;
    let var_qbar = s2_r1 / n1 as f64 + s2_r0 / n0 as f64 - s2_tau / n as f64;

    Ok(TrueQuantities {
        estimands,
        var_qbar,
        s2_r1,
        s2_r0,
        s2_r10,
        s2_tau,
    })
}

/// Estimator evaluated on every assignment during enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactEstimator {
    /// Difference in observed outcome means.
    IttOutcome,
    /// Difference in observed receipt means.
    IttReceipt,
    /// Ratio of the two differences; undefined when the denominator is zero.
    Late,
    /// Mean treatment-control difference of the true linearized residuals.
    LinearizedQbar,
}

/// One enumerated assignment with its estimate (`None` when undefined).
#[derive(Debug, Clone)]
pub struct AssignmentEstimate {
    /// Sorted indices of treated units.
    pub treated: Vec<u32>,
    pub estimate: Option<f64>,
}

/// The exact sampling distribution of an estimator under complete
/// randomization, one entry per treated subset in lexicographic order.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub estimator: ExactEstimator,
    pub entries: Vec<AssignmentEstimate>,
    /// Entries whose estimate was undefined (zero compliance denominator).
    pub undefined: usize,
}

impl ExactDistribution {
    fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().filter_map(|e| e.estimate)
    }

    pub fn defined_count(&self) -> usize {
        self.entries.len() - self.undefined
    }

    /// Mean over defined entries (uniform weights).
    pub fn mean(&self) -> f64 {
        let count = self.defined_count();
        if count == 0 {
            return f64::NAN;
        }
        self.defined().sum::<f64>() / count as f64
    }

    /// Exact (population) variance over defined entries.
    pub fn variance(&self) -> f64 {
        let count = self.defined_count();
        if count == 0 {
            return f64::NAN;
        }
        let m = self.mean();
        self.defined().map(|v| (v - m) * (v - m)).sum::<f64>() / count as f64
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul(n - i) / (i + 1);
    }
    result
}

/// Enumerates every size-`n1` treated subset and evaluates the chosen
/// estimator on each, in lexicographic subset order.
pub fn enumerate_assignments(
    pop: &PotentialPopulation,
    n1: usize,
    estimator: ExactEstimator,
) -> Result<ExactDistribution> {
    let n = pop.n();
    if n1 == 0 || n1 >= n {
        return Err(Error::Domain(format!(
            "treated count must satisfy 0 < n1 < n, got {n1} of {n}"
        )));
    }
    let combinations = binomial(n as u128, n1 as u128);
    if combinations > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            combinations,
            limit: ENUMERATION_LIMIT,
        });
    }

    // Precompute residuals once for the linearized statistic.
    let residuals = match estimator {
        ExactEstimator::LinearizedQbar => {
            let p = n1 as f64 / n as f64;
            let estimands = true_estimands(pop, p)?;
            Some(linearized_residuals(pop, &estimands))
        }
        _ => None,
    };

    let n0 = n - n1;
    let mut treated: Vec<u32> = (0..n1 as u32).collect();
    let mut entries = Vec::with_capacity(combinations as usize);
    let mut undefined = 0;
    let mut in_treatment = vec![false; n];

    loop {
        for flag in in_treatment.iter_mut() {
            *flag = false;
        }
        for &i in &treated {
            in_treatment[i as usize] = true;
        }

        let estimate = match estimator {
            ExactEstimator::IttOutcome => {
                Some(arm_mean_diff(&pop.y1, &pop.y0, &in_treatment, n1, n0))
            }
            ExactEstimator::IttReceipt => {
                let d1: Vec<f64> = pop.d1.iter().map(|&b| b as f64).collect();
                let d0: Vec<f64> = pop.d0.iter().map(|&b| b as f64).collect();
                Some(arm_mean_diff(&d1, &d0, &in_treatment, n1, n0))
            }
            ExactEstimator::Late => {
                let tau = arm_mean_diff(&pop.y1, &pop.y0, &in_treatment, n1, n0);
                let d1: Vec<f64> = pop.d1.iter().map(|&b| b as f64).collect();
                let d0: Vec<f64> = pop.d0.iter().map(|&b| b as f64).collect();
                let pi = arm_mean_diff(&d1, &d0, &in_treatment, n1, n0);
                if pi.abs() <= COMPLIANCE_THRESHOLD {
                    None
                } else {
                    Some(tau / pi)
                }
            }
            ExactEstimator::LinearizedQbar => {
                let (r1, r0) = residuals.as_ref().unwrap();
                Some(arm_mean_diff(r1, r0, &in_treatment, n1, n0))
            }
        };
        if estimate.is_none() {
            undefined += 1;
        }
        entries.push(AssignmentEstimate {
            treated: treated.clone(),
            estimate,
        });

        if !next_combination(&mut treated, n as u32) {
            break;
        }
    }

    Ok(ExactDistribution {
        estimator,
        entries,
        undefined,
    })
}

fn arm_mean_diff(
    treated_values: &[f64],
    control_values: &[f64],
    in_treatment: &[bool],
    n1: usize,
    n0: usize,
) -> f64 {
    let mut sum1 = 0.0;
    let mut sum0 = 0.0;
    for (i, &t) in in_treatment.iter().enumerate() {
        if t {
            sum1 += treated_values[i];
        } else {
            sum0 += control_values[i];
        }
    }
    sum1 / n1 as f64 - sum0 / n0 as f64
}

// Advances indices to the next lexicographic combination; false at the end.
fn next_combination(indices: &mut [u32], n: u32) -> bool {
    let k = indices.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if indices[i] < n - (k - i) as u32 {
            indices[i] += 1;
            for j in (i + 1)..k {
                indices[j] = indices[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
