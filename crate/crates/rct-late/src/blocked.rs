//! Blocked designs: one joint model with block intercepts, block-specific
//! centered treatment effects, and a single shared covariate coefficient
//! vector; per-block variances; complier-weighted pooling across blocks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{Warning, COMPLIANCE_THRESHOLD};
use crate::numerics::{solve_least_squares, DesignMatrix};

/// What to do with a block that cannot form a valid mini-experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockPolicy {
    /// Fail the whole analysis (default).
    #[default]
    Error,
    /// Drop the block, record the reason, and continue.
    Drop,
}

/// How pooled block weights are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolingScheme {
    /// Block size times the estimated compliance effect (complier count).
    #[default]
    ComplierSize,
    /// Block size.
    BlockSize,
    /// Equal weights.
    Uniform,
}

/// Estimates for one block.
#[derive(Debug, Clone)]
pub struct BlockResult {
    pub label: String,
    pub n_b: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub tau_itt: f64,
    pub pi_itt: f64,
    pub tau_late: f64,
    /// Plug-in variance of the block's LATE estimate.
    pub var_qbar: f64,
    /// Pooling weight; zero until [`pool`] assigns it.
    pub weight: f64,
}

/// The pooled estimate across blocks.
#[derive(Debug, Clone)]
pub struct PooledResult {
    pub tau_late: f64,
    pub variance: f64,
    pub df: f64,
    /// Weighted means of the per-block ITT effects, using the pooling
    /// weights (reported for context; the LATE identity is per-block).
    pub tau_itt: f64,
    pub pi_itt: f64,
    pub blocks: Vec<BlockResult>,
    pub dropped: Vec<(String, String)>,
    pub warnings: Vec<Warning>,
    /// Total clusters in the retained blocks, for clustered compositions.
    pub clusters: Option<usize>,
    /// Units in the retained blocks.
    pub n: usize,
    pub v: usize,
    /// Retained block count.
    pub h: usize,
}

// Row indices per block label, in label order.
fn group_by_block(labels: &[String]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        groups.entry(label.clone()).or_default().push(i);
    }
    groups
}

struct JointFit {
    /// Per-block coefficients on the block-centered treatment indicator.
    effects: Vec<f64>,
    /// Shared covariate coefficients.
    covariate_coefs: Vec<f64>,
}

// Fits the joint blocked model: block intercepts, block-specific centered
// treatment, shared block-centered covariates.
fn fit_joint(
    response: &[f64],
    assignment: &[u8],
    covariates: &DesignMatrix,
    blocks: &[(String, Vec<usize>)],
) -> Result<JointFit> {
    let h = blocks.len();
    let v = covariates.cols();
    let rows: usize = blocks.iter().map(|(_, idx)| idx.len()).sum();
    let mut design = DesignMatrix::zeros(rows, 2 * h + v);
    let mut y = Vec::with_capacity(rows);

    let mut r = 0;
    for (b, (_, idx)) in blocks.iter().enumerate() {
        let n_b = idx.len() as f64;
        let p_b = idx.iter().filter(|&&i| assignment[i] == 1).count() as f64 / n_b;
        let x_means: Vec<f64> = (0..v)
            .map(|j| covariates.column_mean_over(j, idx))
            .collect();
        for &i in idx {
            design.set(r, b, 1.0);
            design.set(r, h + b, assignment[i] as f64 - p_b);
            for j in 0..v {
                design.set(r, 2 * h + j, covariates.get(i, j) - x_means[j]);
            }
            y.push(response[i]);
            r += 1;
        }
    }

    let coefs = solve_least_squares(&design, &y)?;
    Ok(JointFit {
        effects: coefs[h..2 * h].to_vec(),
        covariate_coefs: coefs[2 * h..].to_vec(),
    })
}

// Per-block plug-in variance from block- and arm-centered residuals.
#[allow(clippy::too_many_arguments)]
fn block_variance(
    data: &Dataset,
    idx: &[usize],
    beta: &[f64],
    gamma: &[f64],
    tau_late: f64,
    pi_itt: f64,
    q_b: f64,
    v: usize,
) -> Result<f64> {
    let n_b = idx.len();
    let treated: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| data.assignment()[i] == 1)
        .collect();
    let control: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| data.assignment()[i] == 0)
        .collect();
    let p_b = treated.len() as f64 / n_b as f64;
    let df1 = treated.len() as f64 - v as f64 * q_b * p_b - 1.0;
    let df0 = control.len() as f64 - v as f64 * q_b * (1.0 - p_b) - 1.0;
    if df1 <= 0.0 || df0 <= 0.0 {
        return Err(Error::InsufficientDf);
    }

    let arm_rss = |arm: &[usize]| -> f64 {
        let m_y = arm.iter().map(|&i| data.outcome()[i]).sum::<f64>() / arm.len() as f64;
        let m_d = arm.iter().map(|&i| data.receipt()[i] as f64).sum::<f64>() / arm.len() as f64;
        let m_x: Vec<f64> = (0..v)
            .map(|j| data.covariates().column_mean_over(j, arm))
            .collect();
        arm.iter()
            .map(|&i| {
                let mut ry = data.outcome()[i] - m_y;
                let mut rd = data.receipt()[i] as f64 - m_d;
                for j in 0..v {
                    let xc = data.covariates().get(i, j) - m_x[j];
                    ry -= xc * beta[j];
                    rd -= xc * gamma[j];
                }
                let r = ry - tau_late * rd;
                r * r
            })
            .sum()
    };

    let pi_sq = pi_itt * pi_itt;
    let s2_r1 = arm_rss(&treated) / (pi_sq * df1);
    let s2_r0 = arm_rss(&control) / (pi_sq * df0);
    Ok(s2_r1 / treated.len() as f64 + s2_r0 / control.len() as f64)
}

/// Per-block estimates, dropped blocks with reasons, and accumulated
/// warnings.
pub type BlockEstimates = (Vec<BlockResult>, Vec<(String, String)>, Vec<Warning>);

/// Fits the joint blocked model and returns per-block estimates, dropped
/// blocks with reasons, and accumulated warnings.
pub fn estimate_blocks(data: &Dataset, policy: BlockPolicy) -> Result<BlockEstimates> {
    let labels = data
        .blocks()
        .ok_or_else(|| Error::Config("blocked design needs a block column".into()))?;
    let groups = group_by_block(labels);
    let mut dropped: Vec<(String, String)> = Vec::new();
    let mut blocks: Vec<(String, Vec<usize>)> = Vec::new();

    for (label, idx) in groups {
        let n1 = idx.iter().filter(|&&i| data.assignment()[i] == 1).count();
        if n1 == 0 || n1 == idx.len() {
            match policy {
                BlockPolicy::Error => return Err(Error::DegenerateArm),
                BlockPolicy::Drop => {
                    dropped.push((label, "single-arm block".into()));
                    continue;
                }
            }
        }
        blocks.push((label, idx));
    }
    if blocks.is_empty() {
        return Err(Error::AllBlocksDropped);
    }

    let fit_y = fit_joint(
        data.outcome(),
        data.assignment(),
        data.covariates(),
        &blocks,
    )?;
    let fit_d = fit_joint(
        &data.receipt_f64(),
        data.assignment(),
        data.covariates(),
        &blocks,
    )?;

    let n_total: usize = blocks.iter().map(|(_, idx)| idx.len()).sum();
    let v = data.v();
    let mut warnings = Vec::new();
    let mut results = Vec::new();

    for (b, (label, idx)) in blocks.iter().enumerate() {
        let tau_itt = fit_y.effects[b];
        let pi_itt = fit_d.effects[b];
        if pi_itt.abs() <= COMPLIANCE_THRESHOLD {
            match policy {
                BlockPolicy::Error => return Err(Error::ZeroComplianceEffect),
                BlockPolicy::Drop => {
                    dropped.push((label.clone(), "zero compliance effect".into()));
                    continue;
                }
            }
        }
        if pi_itt < 0.0 {
            warnings.push(Warning::NegativeCompliance);
        }
        let tau_late = tau_itt / pi_itt;
        let q_b = idx.len() as f64 / n_total as f64;
        let var_qbar = match block_variance(
            data,
            idx,
            &fit_y.covariate_coefs,
            &fit_d.covariate_coefs,
            tau_late,
            pi_itt,
            q_b,
            v,
        ) {
            Ok(value) => value,
            Err(Error::InsufficientDf) if policy == BlockPolicy::Drop => {
                dropped.push((label.clone(), "insufficient degrees of freedom".into()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let n1 = idx.iter().filter(|&&i| data.assignment()[i] == 1).count();
        results.push(BlockResult {
            label: label.clone(),
            n_b: idx.len(),
            n_treated: n1,
            n_control: idx.len() - n1,
            tau_itt,
            pi_itt,
            tau_late,
            var_qbar,
            weight: 0.0,
        });
    }
    if results.is_empty() {
        return Err(Error::AllBlocksDropped);
    }
    warnings.sort();
    warnings.dedup();
    Ok((results, dropped, warnings))
}

/// Pools per-block estimates with the chosen weights.
///
/// `n` is the unit count and `h` the block count entering the pooled
/// degrees of freedom `n - v - 2h`.
pub fn pool(
    mut blocks: Vec<BlockResult>,
    scheme: PoolingScheme,
    n: usize,
    v: usize,
    h: usize,
) -> Result<PooledResult> {
    if blocks.is_empty() {
        return Err(Error::AllBlocksDropped);
    }
    let mut warnings = Vec::new();
    for block in &mut blocks {
        block.weight = match scheme {
            PoolingScheme::ComplierSize => {
                let w = block.n_b as f64 * block.pi_itt;
                if w < 0.0 {
                    warnings.push(Warning::NegativeWeight);
                    0.0
                } else {
                    w
                }
            }
            PoolingScheme::BlockSize => block.n_b as f64,
            PoolingScheme::Uniform => 1.0,
        };
    }
    let total: f64 = blocks.iter().map(|b| b.weight).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Domain(
            "pooling weights sum to zero; nothing to pool".into(),
        ));
    }
    let tau_late = blocks.iter().map(|b| b.weight * b.tau_late).sum::<f64>() / total;
    let tau_itt = blocks.iter().map(|b| b.weight * b.tau_itt).sum::<f64>() / total;
    let pi_itt = blocks.iter().map(|b| b.weight * b.pi_itt).sum::<f64>() / total;
    let variance = blocks
        .iter()
        .map(|b| b.weight * b.weight * b.var_qbar)
        .sum::<f64>()
        / (total * total);
    let df = n as f64 - v as f64 - 2.0 * h as f64;
    warnings.sort();
    warnings.dedup();
    Ok(PooledResult {
        tau_late,
        variance,
        df,
        tau_itt,
        pi_itt,
        blocks,
        dropped: Vec::new(),
        warnings,
        clusters: None,
        n,
        v,
        h,
    })
}

/// Full blocked analysis: per-block estimation plus pooling.
pub fn analyze_blocked(
    data: &Dataset,
    policy: BlockPolicy,
    scheme: PoolingScheme,
) -> Result<PooledResult> {
    let (blocks, dropped, mut warnings) = estimate_blocks(data, policy)?;
    let n: usize = blocks.iter().map(|b| b.n_b).sum();
    let h = blocks.len();
    let mut pooled = pool(blocks, scheme, n, data.v(), h)?;
    warnings.append(&mut pooled.warnings);
    warnings.sort();
    warnings.dedup();
    pooled.warnings = warnings;
    pooled.dropped = dropped;
    Ok(pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{analyze, AnalysisOptions, VarianceMethod};
    use approx::assert_abs_diff_eq;

    fn two_copy_blocks() -> Dataset {
        Dataset::new(
            vec![4.0, 1.0, 2.0, 1.0, 4.0, 1.0, 2.0, 1.0],
            vec![1, 0, 0, 0, 1, 0, 0, 0],
            vec![1, 1, 0, 0, 1, 1, 0, 0],
            DesignMatrix::zeros(8, 0),
        )
        .unwrap()
        .with_blocks(
            ["a", "a", "a", "a", "b", "b", "b", "b"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_identical_blocks_by_hand() {
        let (blocks, dropped, _) = estimate_blocks(&two_copy_blocks(), BlockPolicy::Error).unwrap();
        assert!(dropped.is_empty());
        assert_eq!(blocks.len(), 2);
        for block in &blocks {
            assert_abs_diff_eq!(block.tau_late, 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(block.var_qbar, 2.0, epsilon = 1e-12);
        }
        let pooled = pool(blocks, PoolingScheme::ComplierSize, 8, 0, 2).unwrap();
        assert_abs_diff_eq!(pooled.blocks[0].weight, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pooled.tau_late, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pooled.variance, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pooled.df, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn schemes_agree_on_identical_blocks() {
        for scheme in [
            PoolingScheme::ComplierSize,
            PoolingScheme::BlockSize,
            PoolingScheme::Uniform,
        ] {
            let pooled = analyze_blocked(&two_copy_blocks(), BlockPolicy::Error, scheme).unwrap();
            assert_abs_diff_eq!(pooled.tau_late, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_block_reduces_to_simple_design() {
        let x = DesignMatrix::new(8, 1, vec![0.4, 1.9, -0.3, 0.8, 2.1, -1.2, 0.6, -0.5]).unwrap();
        let data = Dataset::new(
            vec![2.0, 4.5, 1.0, 3.0, 5.5, 0.5, 2.5, 1.5],
            vec![1, 0, 1, 0, 1, 0, 0, 0],
            vec![1, 0, 1, 0, 1, 0, 1, 0],
            x,
        )
        .unwrap();
        let blocked = data
            .clone()
            .with_blocks(vec!["only".to_string(); 8])
            .unwrap();
        let pooled =
            analyze_blocked(&blocked, BlockPolicy::Error, PoolingScheme::ComplierSize).unwrap();
        let simple = analyze(
            &data,
            &AnalysisOptions {
                variance_methods: vec![VarianceMethod::Db],
                ..Default::default()
            },
        )
        .unwrap();
        assert_abs_diff_eq!(pooled.tau_late, simple.tau_late, epsilon = 1e-10);
        assert_abs_diff_eq!(
            pooled.variance,
            simple.variance[&VarianceMethod::Db],
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(pooled.df, simple.df, epsilon = 1e-12);
    }

    #[test]
    fn single_arm_block_policy() {
        let data = Dataset::new(
            vec![4.0, 1.0, 2.0, 1.0, 3.0, 2.0],
            vec![1, 0, 0, 0, 1, 1],
            vec![1, 1, 0, 0, 1, 1],
            DesignMatrix::zeros(6, 0),
        )
        .unwrap()
        .with_blocks(
            ["a", "a", "a", "a", "bad", "bad"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            estimate_blocks(&data, BlockPolicy::Error),
            Err(Error::DegenerateArm)
        ));
        let (blocks, dropped, _) = estimate_blocks(&data, BlockPolicy::Drop).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].0, "bad");
    }

    #[test]
    fn pooled_invariant_to_relabeling_and_weight_scale() {
        let data = two_copy_blocks();
        let pooled =
            analyze_blocked(&data, BlockPolicy::Error, PoolingScheme::ComplierSize).unwrap();
        let relabeled = Dataset::new(
            data.outcome().to_vec(),
            data.receipt().to_vec(),
            data.assignment().to_vec(),
            data.covariates().clone(),
        )
        .unwrap()
        .with_blocks(
            ["z", "z", "z", "z", "q", "q", "q", "q"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap();
        let pooled2 =
            analyze_blocked(&relabeled, BlockPolicy::Error, PoolingScheme::ComplierSize).unwrap();
        assert_abs_diff_eq!(pooled.tau_late, pooled2.tau_late, epsilon = 1e-12);
        assert_abs_diff_eq!(pooled.variance, pooled2.variance, epsilon = 1e-12);
    }

    #[test]
    fn one_block_pool_is_identity() {
        let blocks = vec![BlockResult {
            label: "only".into(),
            n_b: 10,
            n_treated: 5,
            n_control: 5,
            tau_itt: 1.0,
            pi_itt: 0.5,
            tau_late: 2.0,
            var_qbar: 0.7,
            weight: 0.0,
        }];
        let pooled = pool(blocks, PoolingScheme::ComplierSize, 10, 0, 1).unwrap();
        assert_abs_diff_eq!(pooled.tau_late, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pooled.variance, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn negative_weight_floored_with_warning() {
        let blocks = vec![
            BlockResult {
                label: "good".into(),
                n_b: 4,
                n_treated: 2,
                n_control: 2,
                tau_itt: 1.0,
                pi_itt: 0.5,
                tau_late: 2.0,
                var_qbar: 1.0,
                weight: 0.0,
            },
            BlockResult {
                label: "flipped".into(),
                n_b: 4,
                n_treated: 2,
                n_control: 2,
                tau_itt: 1.0,
                pi_itt: -0.25,
                tau_late: -4.0,
                var_qbar: 1.0,
                weight: 0.0,
            },
        ];
        let pooled = pool(blocks, PoolingScheme::ComplierSize, 8, 0, 2).unwrap();
        assert!(pooled.warnings.contains(&Warning::NegativeWeight));
        assert_abs_diff_eq!(pooled.tau_late, 2.0, epsilon = 1e-12);
    }
}
