//! LATE estimation on a tiny trial with noncompliance.
//!
//! Four units: two assigned to treatment, one of whom takes it up; nobody in
//! the control arm does. The intention-to-treat effect on the outcome is 1.0
//! and on receipt 0.5, so the LATE ratio is 2.0.

use rct_late::numerics::DesignMatrix;
use rct_late::{analyze, AnalysisOptions, Dataset, VarianceMethod};

fn main() -> rct_late::Result<()> {
    let data = Dataset::new(
        vec![4.0, 1.0, 2.0, 1.0], // observed outcomes
        vec![1, 0, 0, 0],         // observed treatment receipt
        vec![1, 1, 0, 0],         // random assignment
        DesignMatrix::zeros(4, 0),
    )?;

    let opts = AnalysisOptions {
        variance_methods: vec![
            VarianceMethod::Db,
            VarianceMethod::DbBounded,
            VarianceMethod::Iv,
        ],
        ..Default::default()
    };
    let result = analyze(&data, &opts)?;

    println!("ITT effect on outcome:  {:+.4}", result.tau_itt);
    println!("ITT effect on receipt:  {:+.4}", result.pi_itt);
    println!("LATE estimate:          {:+.4}", result.tau_late);
    println!();
    for (method, variance) in &result.variance {
        println!(
            "{method:>10} variance: {variance:.4} (se {:.4})",
            variance.sqrt()
        );
    }
    println!();
    println!(
        "95% CI ({} df): ({:+.3}, {:+.3})",
        result.df, result.ci.0, result.ci.1
    );
    println!("first-stage F: {:.3}", result.first_stage_f);
    for warning in &result.warnings {
        println!("warning: {warning}");
    }
    Ok(())
}
