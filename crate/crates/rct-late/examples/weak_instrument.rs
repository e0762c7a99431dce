//! First-stage strength diagnostics.
//!
//! The LATE ratio inflates the ITT effect by the inverse compliance effect,
//! so a weak first stage makes it noisy and finite-sample biased. The F
//! statistic from regressing receipt on assignment screens for this; values
//! below 16 earn a warning.

use rct_late::estimator::first_stage_f;
use rct_late::numerics::DesignMatrix;
use rct_late::{analyze, AnalysisOptions, Dataset};

fn main() -> rct_late::Result<()> {
    // Strong first stage: assignment almost determines receipt.
    let strong = Dataset::new(
        vec![4.0, 3.5, 3.8, 1.0, 1.2, 0.8, 3.9, 1.1],
        vec![1, 1, 1, 0, 0, 0, 1, 0],
        vec![1, 1, 1, 0, 0, 0, 1, 0],
        DesignMatrix::zeros(8, 0),
    )?;
    // Weak first stage: receipt barely responds to assignment.
    let weak = Dataset::new(
        vec![4.0, 3.5, 3.8, 1.0, 1.2, 0.8, 3.9, 1.1],
        vec![1, 0, 1, 1, 1, 0, 0, 1],
        vec![1, 1, 1, 1, 0, 0, 0, 0],
        DesignMatrix::zeros(8, 0),
    )?;

    for (label, data) in [("strong", &strong), ("weak", &weak)] {
        let f = first_stage_f(data.receipt(), data.assignment());
        println!("{label} design: first-stage F = {f:.3}");
        let result = analyze(data, &AnalysisOptions::default())?;
        println!(
            "  LATE {:+.3}, se {:.3}, warnings: {}",
            result.tau_late,
            result.variance.values().next().unwrap().sqrt(),
            if result.warnings.is_empty() {
                "none".to_string()
            } else {
                result
                    .warnings
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            }
        );
    }
    Ok(())
}
