//! Cluster-randomized designs: estimation on weighted cluster-level
//! aggregates, a weight-aware residual variance, and the blocked-clustered
//! composition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blocked::{pool, BlockPolicy, BlockResult, PooledResult, PoolingScheme};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{ArmComponents, VarianceComponents, Warning, COMPLIANCE_THRESHOLD};
use crate::numerics::{solve_least_squares, DesignMatrix};

/// How cluster weights are formed during aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Cluster size.
    #[default]
    Size,
    /// Equal weights.
    Uniform,
    /// The dataset's weight column, constant within each cluster.
    Column,
}

/// Cluster-level aggregates: one row per cluster.
#[derive(Debug, Clone)]
pub struct ClusterDataset {
    labels: Vec<String>,
    t: Vec<u8>,
    weight: Vec<f64>,
    ybar: Vec<f64>,
    dbar: Vec<f64>,
    xbar: DesignMatrix,
    sizes: Vec<usize>,
}

impl ClusterDataset {
    /// Number of clusters.
    pub fn m(&self) -> usize {
        self.labels.len()
    }

    pub fn m_treated(&self) -> usize {
        self.t.iter().map(|&b| b as usize).sum()
    }

    pub fn m_control(&self) -> usize {
        self.m() - self.m_treated()
    }

    pub fn v(&self) -> usize {
        self.xbar.cols()
    }

    /// Total units across clusters.
    pub fn total_units(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn assignments(&self) -> &[u8] {
        &self.t
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn outcome_means(&self) -> &[f64] {
        &self.ybar
    }

    pub fn receipt_means(&self) -> &[f64] {
        &self.dbar
    }

    pub fn covariate_means(&self) -> &DesignMatrix {
        &self.xbar
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Collapses unit rows to cluster aggregates: unweighted within-cluster
/// means plus a per-cluster weight from the chosen scheme.
pub fn aggregate(data: &Dataset, scheme: WeightScheme) -> Result<ClusterDataset> {
    let labels = data
        .clusters()
        .ok_or_else(|| Error::Config("clustered design needs a cluster column".into()))?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        groups.entry(label.clone()).or_default().push(i);
    }

    let v = data.v();
    let m = groups.len();
    let mut out = ClusterDataset {
        labels: Vec::with_capacity(m),
        t: Vec::with_capacity(m),
        weight: Vec::with_capacity(m),
        ybar: Vec::with_capacity(m),
        dbar: Vec::with_capacity(m),
        xbar: DesignMatrix::zeros(m, v),
        sizes: Vec::with_capacity(m),
    };

    for (c, (label, idx)) in groups.into_iter().enumerate() {
        let t0 = data.assignment()[idx[0]];
        if idx.iter().any(|&i| data.assignment()[i] != t0) {
            return Err(Error::MixedAssignmentInCluster(label));
        }
        let n_j = idx.len();
        let ybar = idx.iter().map(|&i| data.outcome()[i]).sum::<f64>() / n_j as f64;
        let dbar = idx.iter().map(|&i| data.receipt()[i] as f64).sum::<f64>() / n_j as f64;
        for j in 0..v {
            out.xbar
                .set(c, j, data.covariates().column_mean_over(j, &idx));
        }
        let weight = match scheme {
            WeightScheme::Size => n_j as f64,
            WeightScheme::Uniform => 1.0,
            WeightScheme::Column => {
                let weights = data.weights().ok_or_else(|| {
                    Error::Config("weight scheme `column` needs a weight column".into())
                })?;
                let w0 = weights[idx[0]];
                if idx.iter().any(|&i| weights[i] != w0) {
                    return Err(Error::InconsistentWeightColumn(label));
                }
                w0
            }
        };
        out.labels.push(label);
        out.t.push(t0);
        out.weight.push(weight);
        out.ybar.push(ybar);
        out.dbar.push(dbar);
        out.sizes.push(n_j);
    }
    Ok(out)
}

/// Weighted least-squares fits on the cluster aggregates plus the ratio
/// estimate.
#[derive(Debug, Clone)]
pub struct ClusteredFit {
    pub tau_itt: f64,
    pub pi_itt: f64,
    pub tau_late: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub warnings: Vec<Warning>,
}

// WLS of a cluster-level response on (1, centered T, centered xbar), rows
// scaled by sqrt(w).
fn fit_cluster_model(cd: &ClusterDataset, response: &[f64], x_center: &[f64]) -> Result<Vec<f64>> {
    let m = cd.m();
    let v = cd.v();
    let p = cd.m_treated() as f64 / m as f64;
    let mut design = DesignMatrix::zeros(m, 2 + v);
    let mut scaled = Vec::with_capacity(m);
    for j in 0..m {
        let s = cd.weight[j].sqrt();
        design.set(j, 0, s);
        design.set(j, 1, s * (cd.t[j] as f64 - p));
        for k in 0..v {
            design.set(j, 2 + k, s * (cd.xbar.get(j, k) - x_center[k]));
        }
        scaled.push(s * response[j]);
    }
    solve_least_squares(&design, &scaled)
}

/// Estimates the LATE on cluster aggregates with weighted least squares,
/// covariates centered at the overall weighted mean.
pub fn estimate_late_clustered(cd: &ClusterDataset) -> Result<ClusteredFit> {
    let m1 = cd.m_treated();
    if m1 == 0 || m1 == cd.m() {
        return Err(Error::EmptyArm);
    }
    let v = cd.v();
    let total_w: f64 = cd.weight.iter().sum();
    let x_center: Vec<f64> = (0..v)
        .map(|k| {
            (0..cd.m())
                .map(|j| cd.weight[j] * cd.xbar.get(j, k))
                .sum::<f64>()
                / total_w
        })
        .collect();

    let coef_y = fit_cluster_model(cd, &cd.ybar, &x_center)?;
    let coef_d = fit_cluster_model(cd, &cd.dbar, &x_center)?;
    let tau_itt = coef_y[1];
    let pi_itt = coef_d[1];
    if pi_itt.abs() <= COMPLIANCE_THRESHOLD {
        return Err(Error::ZeroComplianceEffect);
    }
    let mut warnings = Vec::new();
    if pi_itt < 0.0 {
        warnings.push(Warning::NegativeCompliance);
    }
    Ok(ClusteredFit {
        tau_itt,
        pi_itt,
        tau_late: tau_itt / pi_itt,
        beta: coef_y[2..].to_vec(),
        gamma: coef_d[2..].to_vec(),
        warnings,
    })
}

struct ClusterArm {
    members: Vec<usize>,
    mean_weight: f64,
    ybar: f64,
    dbar: f64,
    xbar: Vec<f64>,
}

fn cluster_arm(cd: &ClusterDataset, arm: u8) -> ClusterArm {
    let members: Vec<usize> = (0..cd.m()).filter(|&j| cd.t[j] == arm).collect();
    let w_total: f64 = members.iter().map(|&j| cd.weight[j]).sum();
    let ybar = members
        .iter()
        .map(|&j| cd.weight[j] * cd.ybar[j])
        .sum::<f64>()
        / w_total;
    let dbar = members
        .iter()
        .map(|&j| cd.weight[j] * cd.dbar[j])
        .sum::<f64>()
        / w_total;
    let xbar: Vec<f64> = (0..cd.v())
        .map(|k| {
            members
                .iter()
                .map(|&j| cd.weight[j] * cd.xbar.get(j, k))
                .sum::<f64>()
                / w_total
        })
        .collect();
    ClusterArm {
        mean_weight: w_total / members.len() as f64,
        members,
        ybar,
        dbar,
        xbar,
    }
}

fn cluster_arm_components(
    cd: &ClusterDataset,
    arm: &ClusterArm,
    fit: &ClusteredFit,
    tau_late: f64,
    df: f64,
) -> ArmComponents {
    let v = cd.v();
    let mut sum_yy = 0.0;
    let mut sum_dd = 0.0;
    let mut sum_yd = 0.0;
    for &j in &arm.members {
        let mut ry = cd.ybar[j] - arm.ybar;
        let mut rd = cd.dbar[j] - arm.dbar;
        for k in 0..v {
            let xc = cd.xbar.get(j, k) - arm.xbar[k];
            ry -= xc * fit.beta[k];
            rd -= xc * fit.gamma[k];
        }
        let f = (cd.weight[j] / arm.mean_weight) * (cd.weight[j] / arm.mean_weight);
        sum_yy += f * ry * ry;
        sum_dd += f * rd * rd;
        sum_yd += f * ry * rd;
    }
    let base = fit.pi_itt * fit.pi_itt * df;
    ArmComponents {
        s2_ry: sum_yy / base,
        s2_rd: tau_late * tau_late * sum_dd / base,
        s2_ryd: -2.0 * tau_late * sum_yd / base,
        s2_r: (sum_yy + tau_late * tau_late * sum_dd - 2.0 * tau_late * sum_yd) / base,
    }
}

/// Weight-aware plug-in variance on cluster aggregates, with the same
/// component split as the unit-level estimator.
pub fn variance_clustered(
    cd: &ClusterDataset,
    fit: &ClusteredFit,
    tau_late: f64,
    v: usize,
) -> Result<(f64, VarianceComponents)> {
    let m = cd.m() as f64;
    let m1 = cd.m_treated();
    let m0 = cd.m_control();
    let p = m1 as f64 / m;
    let df1 = m1 as f64 - v as f64 * p - 1.0;
    let df0 = m0 as f64 - v as f64 * (1.0 - p) - 1.0;
    if df1 <= 0.0 || df0 <= 0.0 {
        return Err(Error::InsufficientDf);
    }
    let arm1 = cluster_arm(cd, 1);
    let arm0 = cluster_arm(cd, 0);
    let treated = cluster_arm_components(cd, &arm1, fit, tau_late, df1);
    let control = cluster_arm_components(cd, &arm0, fit, tau_late, df0);
    let variance = treated.s2_r / m1 as f64 + control.s2_r / m0 as f64;
    Ok((variance, VarianceComponents { treated, control }))
}

/// Clustered analysis result: the usual estimate plus cluster counts.
#[derive(Debug, Clone)]
pub struct ClusteredResult {
    pub result: crate::estimator::LateResult,
    pub m: usize,
    pub m_treated: usize,
    pub m_control: usize,
}

/// Full clustered analysis on unit-level data: aggregate, estimate, the
/// weighted plug-in variance, and inference with cluster-based degrees of
/// freedom.
pub fn analyze_clustered(
    data: &Dataset,
    weight_scheme: WeightScheme,
    alpha: f64,
    reference: crate::estimator::Reference,
) -> Result<ClusteredResult> {
    let cd = aggregate(data, weight_scheme)?;
    let fit = estimate_late_clustered(&cd)?;
    let v = data.v();
    let (variance, components) = variance_clustered(&cd, &fit, fit.tau_late, v)?;
    let df = cd.m() as f64 - v as f64 - 2.0;
    if df <= 0.0 {
        return Err(Error::InsufficientDf);
    }
    let inference = crate::estimator::infer(fit.tau_late, variance, df, alpha, reference)?;
    let f_stat = crate::estimator::first_stage_f(data.receipt(), data.assignment());
    let mut warnings = fit.warnings.clone();
    if f_stat < crate::estimator::WEAK_INSTRUMENT_F {
        warnings.push(Warning::WeakInstrument);
    }
    warnings.sort();
    warnings.dedup();
    let mut variance_map = std::collections::BTreeMap::new();
    variance_map.insert(crate::estimator::VarianceMethod::Db, variance);
    Ok(ClusteredResult {
        result: crate::estimator::LateResult {
            tau_itt: fit.tau_itt,
            pi_itt: fit.pi_itt,
            tau_late: fit.tau_late,
            variance: variance_map,
            components,
            df,
            ci: inference.ci,
            t_stat: inference.t_stat,
            p_value: inference.p_value,
            first_stage_f: f_stat,
            warnings,
        },
        m: cd.m(),
        m_treated: cd.m_treated(),
        m_control: cd.m_control(),
    })
}

/// Blocked-clustered composition: a full clustered analysis inside each
/// block, pooled with complier-size weights built from unit counts.
pub fn analyze_blocked_clustered(
    data: &Dataset,
    weight_scheme: WeightScheme,
    policy: BlockPolicy,
    pooling: PoolingScheme,
) -> Result<PooledResult> {
    let labels = data
        .blocks()
        .ok_or_else(|| Error::Config("blocked design needs a block column".into()))?;
    let cluster_labels = data
        .clusters()
        .ok_or_else(|| Error::Config("clustered design needs a cluster column".into()))?;
    // Clusters must nest inside blocks.
    let mut cluster_block: BTreeMap<&String, &String> = BTreeMap::new();
    for (cluster, block) in cluster_labels.iter().zip(labels) {
        if let Some(&seen) = cluster_block.get(cluster) {
            if seen != block {
                return Err(Error::Domain(format!(
                    "cluster {cluster:?} spans blocks {seen:?} and {block:?}"
                )));
            }
        } else {
            cluster_block.insert(cluster, block);
        }
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        groups.entry(label.clone()).or_default().push(i);
    }

    let mut blocks = Vec::new();
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();
    let mut total_clusters = 0usize;

    for (label, idx) in groups {
        let step = || -> Result<(BlockResult, usize)> {
            let subset = data.subset(&idx)?;
            let cd = aggregate(&subset, weight_scheme)?;
            let fit = estimate_late_clustered(&cd)?;
            let (var_qbar, _) = variance_clustered(&cd, &fit, fit.tau_late, subset.v())?;
            Ok((
                BlockResult {
                    label: label.clone(),
                    n_b: subset.n(),
                    n_treated: subset.n_treated(),
                    n_control: subset.n_control(),
                    tau_itt: fit.tau_itt,
                    pi_itt: fit.pi_itt,
                    tau_late: fit.tau_late,
                    var_qbar,
                    weight: 0.0,
                },
                cd.m(),
            ))
        };
        match step() {
            Ok((block, m_b)) => {
                if block.pi_itt < 0.0 {
                    warnings.push(Warning::NegativeCompliance);
                }
                total_clusters += m_b;
                blocks.push(block);
            }
            Err(e) if policy == BlockPolicy::Drop && e.exit_code() == 3 => {
                dropped.push((label, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if blocks.is_empty() {
        return Err(Error::AllBlocksDropped);
    }
    let h = blocks.len();
    // Degrees of freedom count clusters, not units.
    let mut pooled = pool(blocks, pooling, total_clusters, data.v(), h)?;
    let n_units: usize = pooled.blocks.iter().map(|b| b.n_b).sum();
    pooled.n = n_units;
    pooled.clusters = Some(total_clusters);
    warnings.append(&mut pooled.warnings);
    warnings.sort();
    warnings.dedup();
    pooled.warnings = warnings;
    pooled.dropped = dropped;
    Ok(pooled)
}
