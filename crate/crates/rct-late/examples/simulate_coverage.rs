//! A small finite-population Monte Carlo run.
//!
//! Generates a handful of fixed populations, re-randomizes the assignment
//! many times, and reports bias, interval coverage, the spread of the
//! estimates, and the mean estimated standard error per variance method.
//! Scaled down from the full protocol (5 datasets x 10,000 replications) to
//! finish quickly; pass `--release` for the real thing.

use rct_late::{run_monte_carlo, SimulationConfig, VarianceMethod};

fn main() -> rct_late::Result<()> {
    let cfg = SimulationConfig {
        n: 400,
        p: 0.5,
        dbar0: 0.2,
        dbar1: 0.5,
        rho_delta_y0: 0.3,
        r2_y0x: 0.4,
        rho_delta_theta: 0.1,
        sigma_theta2_rule: 1.0 / 3.0,
        with_covariate: false,
        num_datasets: 2,
        reps: 1000,
        alpha: 0.05,
        seed: 1729,
        variance_methods: vec![
            VarianceMethod::Db,
            VarianceMethod::DbBounded,
            VarianceMethod::Iv,
        ],
    };
    let summary = run_monte_carlo(&cfg)?;

    println!(
        "n={}, assignment rate {}, receipt rates {} -> {}, {} datasets x {} replications",
        cfg.n, cfg.p, cfg.dbar0, cfg.dbar1, summary.datasets, summary.reps
    );
    println!();
    println!(
        "{:<12} {:>8} {:>10} {:>9} {:>13} {:>9}",
        "method", "bias", "coverage", "true_se", "mean_est_se", "rejected"
    );
    for (method, s) in &summary.methods {
        println!(
            "{:<12} {:>+8.4} {:>10.4} {:>9.4} {:>13.4} {:>9}",
            method.to_string(),
            s.bias,
            s.coverage,
            s.true_se,
            s.mean_est_se,
            s.rejected_replications
        );
    }
    Ok(())
}
