//! Per-block estimation and complier-weighted pooling in a blocked trial.
//!
//! Two sites run the same mini-experiment. Each block gets its own LATE
//! estimate and variance; the pooled estimate weights blocks by their
//! estimated complier counts.

use rct_late::numerics::DesignMatrix;
use rct_late::{analyze_blocked, BlockPolicy, Dataset, PoolingScheme};

fn main() -> rct_late::Result<()> {
    let data = Dataset::new(
        vec![4.0, 1.0, 2.0, 1.0, 5.0, 2.0, 2.0, 0.0],
        vec![1, 0, 0, 0, 1, 1, 0, 0],
        vec![1, 1, 0, 0, 1, 1, 0, 0],
        DesignMatrix::zeros(8, 0),
    )?
    .with_blocks(
        [
            "site_a", "site_a", "site_a", "site_a", "site_b", "site_b", "site_b", "site_b",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    )?;

    let pooled = analyze_blocked(&data, BlockPolicy::Error, PoolingScheme::ComplierSize)?;

    println!(
        "{:<8} {:>4} {:>8} {:>8} {:>8} {:>8}",
        "block", "n", "tau_itt", "pi_itt", "late", "weight"
    );
    for block in &pooled.blocks {
        println!(
            "{:<8} {:>4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            block.label, block.n_b, block.tau_itt, block.pi_itt, block.tau_late, block.weight
        );
    }
    println!();
    println!("pooled LATE: {:+.4}", pooled.tau_late);
    println!(
        "pooled variance: {:.4} (se {:.4})",
        pooled.variance,
        pooled.variance.sqrt()
    );
    println!("degrees of freedom: {}", pooled.df);
    for (label, reason) in &pooled.dropped {
        println!("dropped block {label}: {reason}");
    }
    Ok(())
}
