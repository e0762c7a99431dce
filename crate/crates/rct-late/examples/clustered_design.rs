//! Cluster-randomized estimation on weighted cluster aggregates.
//!
//! Six schools are randomized as whole groups. Estimation collapses units to
//! cluster means, weights clusters by size, and bases degrees of freedom on
//! the cluster count.

use rct_late::numerics::DesignMatrix;
use rct_late::{analyze_clustered, Dataset, Reference, WeightScheme};

fn main() -> rct_late::Result<()> {
    let data = Dataset::new(
        vec![4.2, 3.8, 2.7, 1.0, 0.8, 3.1, 2.9, 0.4, 1.6, 1.4, 2.2, 0.9],
        vec![1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0],
        vec![1, 1, 1, 0, 0, 1, 1, 0, 0, 0, 1, 0],
        DesignMatrix::zeros(12, 0),
    )?
    .with_clusters(
        [
            "school1", "school1", "school2", "school3", "school3", "school4", "school4", "school5",
            "school5", "school5", "school2", "school6",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    )?;

    let clustered = analyze_clustered(&data, WeightScheme::Size, 0.05, Reference::T)?;
    let result = &clustered.result;

    println!(
        "clusters: {} ({} treated, {} control)",
        clustered.m, clustered.m_treated, clustered.m_control
    );
    println!("ITT effect on outcome:  {:+.4}", result.tau_itt);
    println!("ITT effect on receipt:  {:+.4}", result.pi_itt);
    println!("LATE estimate:          {:+.4}", result.tau_late);
    let variance = result.variance.values().next().copied().unwrap_or(f64::NAN);
    println!(
        "cluster variance: {:.4} (se {:.4})",
        variance,
        variance.sqrt()
    );
    println!(
        "95% CI with {} cluster-based df: ({:+.3}, {:+.3})",
        result.df, result.ci.0, result.ci.1
    );
    for warning in &result.warnings {
        println!("warning: {warning}");
    }
    Ok(())
}
