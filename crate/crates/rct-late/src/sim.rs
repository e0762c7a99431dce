//! Finite-population Monte Carlo engine: a probit latent-variable generator
//! for potential outcomes and a replication harness that fixes each
//! population and re-randomizes only the assignment.
//!
//! Reproducibility contract: every (dataset, replication) pair draws from
//! its own counter-derived substream of the master seed, and summaries
//! reduce in replication order, so results are bit-identical for any worker
//! count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_late, variance_db, variance_db_bounded, variance_iv, VarianceMethod,
};
use crate::numerics::dist::{normal_quantile, student_t_quantile};
use crate::numerics::DesignMatrix;
use crate::oracle::{true_estimands, PotentialPopulation};

fn default_rho_delta_y0() -> f64 {
    0.3
}
fn default_r2_y0x() -> f64 {
    0.4
}
fn default_rho_delta_theta() -> f64 {
    0.1
}
fn default_sigma_theta2_rule() -> f64 {
    1.0 / 3.0
}
fn default_num_datasets() -> usize {
    5
}
fn default_reps() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_methods() -> Vec<VarianceMethod> {
    vec![VarianceMethod::Db]
}

/// Parameters of one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Units per dataset.
    pub n: usize,
    /// Treatment assignment rate.
    pub p: f64,
    /// Target receipt rate in the control condition (always-taker share).
    pub dbar0: f64,
    /// Target receipt rate in the treatment condition.
    pub dbar1: f64,
    /// Correlation between the latent receipt tendency and the control
    /// outcome.
    #[serde(default = "default_rho_delta_y0")]
    pub rho_delta_y0: f64,
    /// Target R-squared of the control outcome on the covariate.
    #[serde(default = "default_r2_y0x")]
    pub r2_y0x: f64,
    /// Correlation between the latent tendency and complier effects.
    #[serde(default = "default_rho_delta_theta")]
    pub rho_delta_theta: f64,
    /// Complier effect variance as a multiple of the control outcome
    /// variance.
    #[serde(default = "default_sigma_theta2_rule")]
    pub sigma_theta2_rule: f64,
    /// Whether estimation adjusts for the generated covariate.
    #[serde(default)]
    pub with_covariate: bool,
    #[serde(default = "default_num_datasets")]
    pub num_datasets: usize,
    /// Replications per dataset.
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub variance_methods: Vec<VarianceMethod>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Domain("simulation needs n >= 4".into()));
        }
        if self.p.is_nan() || self.p <= 0.0 || self.p >= 1.0 {
            return Err(Error::Domain(format!(
                "assignment rate must lie in (0, 1), got {}",
                self.p
            )));
        }
        if !(0.0..=1.0).contains(&self.dbar0)
            || !(0.0..=1.0).contains(&self.dbar1)
            || self.dbar0 >= self.dbar1
        {
            return Err(Error::Domain(format!(
                "receipt rates must satisfy 0 <= dbar0 < dbar1 <= 1, got {} and {}",
                self.dbar0, self.dbar1
            )));
        }
        if self.rho_delta_y0.abs() >= 1.0 || self.rho_delta_theta.abs() >= 1.0 {
            return Err(Error::Domain(
                "latent correlations must lie in (-1, 1)".into(),
            ));
        }
        if self.r2_y0x.is_nan() || self.r2_y0x <= 0.0 || self.r2_y0x >= 1.0 {
            return Err(Error::Domain(format!(
                "covariate R-squared must lie in (0, 1), got {}",
                self.r2_y0x
            )));
        }
        if self.sigma_theta2_rule < 0.0 {
            return Err(Error::Domain(
                "effect variance multiplier must be nonnegative".into(),
            ));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.alpha >= 1.0 {
            return Err(Error::Domain(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.num_datasets == 0 || self.reps == 0 {
            return Err(Error::Domain(
                "num_datasets and reps must be positive".into(),
            ));
        }
        if self.variance_methods.is_empty() {
            return Err(Error::Domain(
                "at least one variance method is required".into(),
            ));
        }
        Ok(())
    }

    /// Treated arm size: `n * p` rounded to the nearest integer.
    pub fn n_treated(&self) -> usize {
        (self.n as f64 * self.p).round() as usize
    }
}

const POPULATION_STREAM_TAG: u64 = 1 << 63;

// A ChaCha substream keyed by (master seed, stream id). Stream ids encode
// dataset and replication indices so no two draws share a stream.
fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn population_stream(dataset: usize) -> u64 {
    POPULATION_STREAM_TAG | dataset as u64
}

fn replication_stream(dataset: usize, rep: usize) -> u64 {
    ((dataset as u64) << 32) | rep as u64
}

/// Standard normal draws by the polar rejection method, carrying the spare
/// variate between calls.
pub struct PolarNormal {
    spare: Option<f64>,
}

impl PolarNormal {
    pub fn new() -> Self {
        Self { spare: None }
    }

    pub fn next<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u: f64 = 2.0 * rng.gen::<f64>() - 1.0;
            let v: f64 = 2.0 * rng.gen::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * scale);
                return u * scale;
            }
        }
    }
}

impl Default for PolarNormal {
    fn default() -> Self {
        Self::new()
    }
}

/// Draws one finite population from the latent-variable generator.
///
/// Receipt decisions are thresholds on a latent normal tendency, the control
/// outcome and the covariate load on that tendency, and complier effects add
/// heterogeneity correlated with it. Always- and never-takers keep equal
/// outcomes in both arms.
pub fn generate_population(
    cfg: &SimulationConfig,
    dataset_index: usize,
) -> Result<PotentialPopulation> {
    cfg.validate()?;
    let rho = cfg.rho_delta_y0;
    let phi = rho / (1.0 - rho * rho).sqrt();
    let var_y0 = phi * phi + 1.0;
    let sigma_u = (var_y0 * (1.0 - cfg.r2_y0x) / cfg.r2_y0x).sqrt();
    let sigma_theta = (cfg.sigma_theta2_rule * var_y0).sqrt();
    let psi = cfg.rho_delta_theta * sigma_theta;
    let sigma_v =
        (sigma_theta * sigma_theta * (1.0 - cfg.rho_delta_theta * cfg.rho_delta_theta)).sqrt();
    // Receipt thresholds: dbar0 = 0 or dbar1 = 1 map to the infinities.
    let threshold0 = normal_quantile(cfg.dbar0)?;
    let threshold1 = normal_quantile(cfg.dbar1)?;

    let mut rng = substream(cfg.seed, population_stream(dataset_index));
    let mut normals = PolarNormal::new();

    let n = cfg.n;
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut d1 = Vec::with_capacity(n);
    let mut d0 = Vec::with_capacity(n);
    let mut x = DesignMatrix::zeros(n, 1);
    let mut delta_all = Vec::with_capacity(n);

    for i in 0..n {
        let delta = normals.next(&mut rng);
        let eta = normals.next(&mut rng);
        let u = normals.next(&mut rng);
        let v = normals.next(&mut rng);

        let receives_as_control = delta <= threshold0;
        let receives_as_treated = delta <= threshold1;
        let outcome0 = phi * delta + eta;
        let covariate = outcome0 + sigma_u * u;
        let effect = psi * delta + sigma_v * v;
        let is_complier = receives_as_treated && !receives_as_control;

        d0.push(receives_as_control as u8);
        d1.push(receives_as_treated as u8);
        y0.push(outcome0);
        y1.push(if is_complier {
            outcome0 + effect
        } else {
            outcome0
        });
        x.set(i, 0, covariate);
        delta_all.push(delta);
    }

    PotentialPopulation::new(y1, y0, d1, d0, x)?.with_delta(delta_all)
}

/// Draws a complete-randomization assignment: exactly `n1` treated, every
/// subset equally likely (uniform permutation, first `n1` treated).
pub fn draw_assignment<R: Rng>(n: usize, n1: usize, rng: &mut R) -> Result<Vec<u8>> {
    if n1 == 0 || n1 >= n {
        return Err(Error::Domain(format!(
            "assignment needs 0 < n1 < n, got {n1} of {n}"
        )));
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut assignment = vec![0u8; n];
    for &i in order.iter().take(n1) {
        assignment[i as usize] = 1;
    }
    Ok(assignment)
}

/// Per-method aggregates across replications and datasets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MethodSummary {
    /// Mean estimate minus the per-dataset truth, averaged across datasets.
    pub bias: f64,
    /// Fraction of intervals covering the per-dataset truth.
    pub coverage: f64,
    /// Standard deviation of the estimates across replications.
    pub true_se: f64,
    /// Mean of the estimated standard errors.
    pub mean_est_se: f64,
    /// Replications dropped for a zero compliance denominator.
    pub rejected_replications: usize,
}

/// Summary of a full simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub methods: BTreeMap<VarianceMethod, MethodSummary>,
    pub datasets: usize,
    pub reps: usize,
}

struct RepRecord {
    tau_late: f64,
    // Standard error per requested method, in method order.
    se: Vec<f64>,
}

/// Runs the full finite-population Monte Carlo protocol.
///
/// Each dataset's potential outcomes are generated once and never redrawn;
/// replications only re-randomize the assignment. Per-dataset summaries are
/// averaged across datasets.
pub fn run_monte_carlo(cfg: &SimulationConfig) -> Result<SimulationSummary> {
    cfg.validate()?;
    let n = cfg.n;
    let n1 = cfg.n_treated();
    if n1 == 0 || n1 >= n {
        return Err(Error::Domain(
            "rounded treated count leaves an empty arm".into(),
        ));
    }
    let methods = &cfg.variance_methods;
    let v = if cfg.with_covariate { 1 } else { 0 };
    let df = n as f64 - v as f64 - 2.0;
    let p_hat = n1 as f64 / n as f64;
    let arm_df1 = n1 as f64 - v as f64 * p_hat - 1.0;
    let arm_df0 = (n - n1) as f64 - v as f64 * (1.0 - p_hat) - 1.0;
    if df <= 0.0 || arm_df1 <= 0.0 || arm_df0 <= 0.0 {
        return Err(Error::InsufficientDf);
    }
    let t_quantile = student_t_quantile(1.0 - cfg.alpha / 2.0, df)?;

    let mut per_dataset: Vec<Vec<MethodSummary>> = Vec::with_capacity(cfg.num_datasets);
    let mut rejected_total = 0usize;

    for dataset in 0..cfg.num_datasets {
        let pop = generate_population(cfg, dataset)?;
        let truth = true_estimands(&pop, n1 as f64 / n as f64)?;
        let covariates = if cfg.with_covariate {
            pop.x().clone()
        } else {
            DesignMatrix::zeros(n, 0)
        };

        let records: Vec<Option<RepRecord>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = substream(cfg.seed, replication_stream(dataset, rep));
                let assignment = draw_assignment(n, n1, &mut rng).expect("valid arm sizes");
                let (y, d) = pop.reveal(&assignment);
                let data = Dataset::new(y, d, assignment, covariates.clone())
                    .expect("generated data is valid");
                let fit = match estimate_late(&data) {
                    Ok(fit) => fit,
                    Err(Error::ZeroComplianceEffect) => return None,
                    Err(e) => panic!("unexpected estimation failure: {e}"),
                };
                let (var_db, components) = variance_db(&fit.fit_y, &fit.fit_d, fit.tau_late, v)
                    .expect("arm df checked before the replication loop");
                let se = methods
                    .iter()
                    .map(|method| {
                        let variance = match method {
                            VarianceMethod::Db => var_db,
                            VarianceMethod::DbBounded => {
                                variance_db_bounded(var_db, &components, n).0
                            }
                            VarianceMethod::Iv => {
                                variance_iv(&fit.fit_y, &fit.fit_d, fit.tau_late, v)
                                    .expect("pooled df positive")
                            }
                        };
                        variance.sqrt()
                    })
                    .collect();
                Some(RepRecord {
                    tau_late: fit.tau_late,
                    se,
                })
            })
            .collect();

        // Sequential reduction in replication order keeps sums bit-stable.
        let kept: Vec<&RepRecord> = records.iter().flatten().collect();
        let rejected = cfg.reps - kept.len();
        rejected_total += rejected;
        if kept.is_empty() {
            return Err(Error::ZeroComplianceEffect);
        }

        let count = kept.len() as f64;
        let mean_tau = kept.iter().map(|r| r.tau_late).sum::<f64>() / count;
        let sd_tau = if kept.len() > 1 {
            (kept
                .iter()
                .map(|r| (r.tau_late - mean_tau) * (r.tau_late - mean_tau))
                .sum::<f64>()
                / (count - 1.0))
                .sqrt()
        } else {
            0.0
        };

        let mut summaries = Vec::with_capacity(methods.len());
        for (k, _) in methods.iter().enumerate() {
            let mean_se = kept.iter().map(|r| r.se[k]).sum::<f64>() / count;
            let covered = kept
                .iter()
                .filter(|r| {
                    let half = t_quantile * r.se[k];
                    truth.tau_10 >= r.tau_late - half && truth.tau_10 <= r.tau_late + half
                })
                .count() as f64;
            summaries.push(MethodSummary {
                bias: mean_tau - truth.tau_10,
                coverage: covered / count,
                true_se: sd_tau,
                mean_est_se: mean_se,
                rejected_replications: rejected,
            });
        }
        per_dataset.push(summaries);
    }

    // Average the per-dataset summaries.
    let d = cfg.num_datasets as f64;
    let mut out = BTreeMap::new();
    for (k, method) in methods.iter().enumerate() {
        let bias = per_dataset.iter().map(|s| s[k].bias).sum::<f64>() / d;
        let coverage = per_dataset.iter().map(|s| s[k].coverage).sum::<f64>() / d;
        let true_se = per_dataset.iter().map(|s| s[k].true_se).sum::<f64>() / d;
        let mean_est_se = per_dataset.iter().map(|s| s[k].mean_est_se).sum::<f64>() / d;
        out.insert(
            *method,
            MethodSummary {
                bias,
                coverage,
                true_se,
                mean_est_se,
                rejected_replications: rejected_total,
            },
        );
    }
    Ok(SimulationSummary {
        methods: out,
        datasets: cfg.num_datasets,
        reps: cfg.reps,
    })
}
