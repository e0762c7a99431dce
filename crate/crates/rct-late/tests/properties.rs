//! Property tests for the estimators and oracles.

mod common;

use proptest::prelude::*;
use rct_late::blocked::{analyze_blocked, BlockPolicy, PoolingScheme};
use rct_late::data::Dataset;
use rct_late::estimator::{estimate_late, fit_itt, variance_db};
use rct_late::numerics::DesignMatrix;
use rct_late::oracle::{
    enumerate_assignments, true_estimands, true_var_qbar, ExactEstimator, PotentialPopulation,
};
use rct_late::report::format_float;

// A small population with monotone receipt and a nonzero complier share.
fn small_population() -> impl Strategy<Value = PotentialPopulation> {
    (3usize..=5)
        .prop_flat_map(|half| {
            let n = 2 * half;
            (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(0u8..2, n),
                prop::collection::vec(0u8..3, n),
            )
        })
        .prop_filter_map("needs a nonzero compliance effect", |(y1, y0, d0, comp)| {
            let n = y1.len();
            let d0: Vec<u8> = d0;
            // A unit becomes a complier with probability 2/3 when not an
            // always-taker.
            let d1: Vec<u8> = d0
                .iter()
                .zip(&comp)
                .map(|(&b, &c)| if b == 1 { 1 } else { (c > 0) as u8 })
                .collect();
            let pop = PotentialPopulation::new(y1, y0, d1, d0, DesignMatrix::zeros(n, 0)).ok()?;
            true_estimands(&pop, 0.5).ok().map(|_| pop)
        })
}

// A dataset with both arms nonempty and a solidly nonzero compliance effect.
fn simple_dataset() -> impl Strategy<Value = Dataset> {
    (4usize..=12)
        .prop_flat_map(|half| {
            let n = 2 * half;
            (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(0u8..2, n),
                Just(n),
            )
        })
        .prop_filter_map("needs estimable compliance", |(y, noise, n)| {
            let mut t = vec![0u8; n];
            for slot in t.iter_mut().take(n / 2) {
                *slot = 1;
            }
            // Deterministic interleave so arms mix row positions.
            t.reverse();
            let d: Vec<u8> = (0..n)
                .map(|i| {
                    if t[i] == 1 {
                        1 - noise[i] % 2
                    } else {
                        noise[i] % 2
                    }
                })
                .collect();
            let data = Dataset::new(y, d, t, DesignMatrix::zeros(n, 0)).ok()?;
            let fit = estimate_late(&data).ok()?;
            (fit.pi_itt.abs() > 0.2).then_some(data)
        })
}

proptest! {
    // Ratio identity of the estimands, exact by construction.
    #[test]
    fn late_times_compliance_equals_itt(pop in small_population()) {
        let est = true_estimands(&pop, 0.5).unwrap();
        prop_assert!((est.tau_10 * est.pi_itt - est.tau_itt).abs() <= 1e-12);
        let (p11, p10, p00) = est.strata_shares;
        prop_assert!((p11 + p10 + p00 - 1.0).abs() <= 1e-12);
    }

    // The closed-form variance equals the exhaustively enumerated variance
    // of the linearized contrast.
    #[test]
    fn closed_form_variance_matches_enumeration(pop in small_population()) {
        let n1 = pop.n() / 2;
        let truth = true_var_qbar(&pop, n1, 0.5).unwrap();
        let dist = enumerate_assignments(&pop, n1, ExactEstimator::LinearizedQbar).unwrap();
        let tol = 1e-12 * truth.var_qbar.abs().max(1.0);
        prop_assert!((dist.variance() - truth.var_qbar).abs() <= tol);
    }

    // Difference-in-means estimators are exactly unbiased over the
    // randomization distribution.
    #[test]
    fn enumeration_unbiasedness(pop in small_population()) {
        let n1 = pop.n() / 2;
        let est = true_estimands(&pop, n1 as f64 / pop.n() as f64).unwrap();
        let itt = enumerate_assignments(&pop, n1, ExactEstimator::IttOutcome).unwrap();
        prop_assert!((itt.mean() - est.tau_itt).abs() <= 1e-12);
    }

    // Padding a population with all-zero covariate columns changes nothing.
    #[test]
    fn zero_covariates_are_inert(pop in small_population()) {
        let n1 = pop.n() / 2;
        let base = true_var_qbar(&pop, n1, 0.5).unwrap();
        let padded = PotentialPopulation::new(
            pop.y1().to_vec(),
            pop.y0().to_vec(),
            pop.d1().to_vec(),
            pop.d0().to_vec(),
            DesignMatrix::zeros(pop.n(), 2),
        ).unwrap();
        let same = true_var_qbar(&padded, n1, 0.5).unwrap();
        prop_assert!((base.var_qbar - same.var_qbar).abs() <= 1e-12);
        prop_assert!((base.s2_tau - same.s2_tau).abs() <= 1e-12);
    }

    // Shifting the outcome by a constant leaves the LATE unchanged; scaling
    // scales it.
    #[test]
    fn location_scale_equivariance(data in simple_dataset(), shift in -20.0f64..20.0, scale in 0.25f64..4.0) {
        let base = estimate_late(&data).unwrap();
        let shifted: Vec<f64> = data.outcome().iter().map(|v| v + shift).collect();
        let scaled: Vec<f64> = data.outcome().iter().map(|v| v * scale).collect();
        let d = data.receipt().to_vec();
        let t = data.assignment().to_vec();
        let x = data.covariates().clone();
        let a = estimate_late(&Dataset::new(shifted, d.clone(), t.clone(), x.clone()).unwrap()).unwrap();
        let b = estimate_late(&Dataset::new(scaled, d, t, x).unwrap()).unwrap();
        prop_assert!((a.tau_late - base.tau_late).abs() <= 1e-10 * base.tau_late.abs().max(1.0));
        prop_assert!((b.tau_late - scale * base.tau_late).abs() <= 1e-10 * base.tau_late.abs().max(1.0));
    }

    // The fitted effect obeys the covariate-adjusted difference-in-means
    // identity.
    #[test]
    fn effect_identity_with_covariates(data in simple_dataset(), xs in prop::collection::vec(-3.0f64..3.0, 24)) {
        let n = data.n();
        let x = DesignMatrix::new(n, 1, xs[..n].to_vec()).unwrap();
        let fit = match fit_itt(data.outcome(), data.assignment(), &x) {
            Ok(fit) => fit,
            Err(_) => return Ok(()),
        };
        let treated: Vec<usize> = (0..n).filter(|&i| data.assignment()[i] == 1).collect();
        let control: Vec<usize> = (0..n).filter(|&i| data.assignment()[i] == 0).collect();
        let mean_over = |rows: &[usize], v: &[f64]| {
            rows.iter().map(|&i| v[i]).sum::<f64>() / rows.len() as f64
        };
        let y1 = mean_over(&treated, data.outcome());
        let y0 = mean_over(&control, data.outcome());
        let x1 = x.column_mean_over(0, &treated);
        let x0 = x.column_mean_over(0, &control);
        let expected = (y1 - y0) - (x1 - x0) * fit.covariate_coefs[0];
        prop_assert!((fit.effect - expected).abs() <= 1e-10 * expected.abs().max(1.0));
    }

    // When arm covariate means match exactly, adjustment changes nothing.
    #[test]
    fn balanced_covariate_reduces_to_difference_in_means(data in simple_dataset(), pattern in prop::collection::vec(-3.0f64..3.0, 12)) {
        let n = data.n();
        // Give treated and control the same covariate multiset.
        let treated: Vec<usize> = (0..n).filter(|&i| data.assignment()[i] == 1).collect();
        let control: Vec<usize> = (0..n).filter(|&i| data.assignment()[i] == 0).collect();
        let mut xs = vec![0.0; n];
        for (k, (&a, &b)) in treated.iter().zip(&control).enumerate() {
            xs[a] = pattern[k % pattern.len()];
            xs[b] = pattern[k % pattern.len()];
        }
        let x = DesignMatrix::new(n, 1, xs).unwrap();
        let fit = match fit_itt(data.outcome(), data.assignment(), &x) {
            Ok(fit) => fit,
            Err(_) => return Ok(()),
        };
        let mean_over = |rows: &[usize], v: &[f64]| {
            rows.iter().map(|&i| v[i]).sum::<f64>() / rows.len() as f64
        };
        let raw = mean_over(&treated, data.outcome()) - mean_over(&control, data.outcome());
        prop_assert!((fit.effect - raw).abs() <= 1e-12 * raw.abs().max(1.0));
    }

    // Components share denominators, so they sum exactly.
    #[test]
    fn component_identity(data in simple_dataset()) {
        let fit = estimate_late(&data).unwrap();
        let (variance, comps) = variance_db(&fit.fit_y, &fit.fit_d, fit.tau_late, 0).unwrap();
        prop_assert!(variance >= 0.0);
        for arm in [comps.treated, comps.control] {
            let sum = arm.s2_ry + arm.s2_rd + arm.s2_ryd;
            prop_assert!((sum - arm.s2_r).abs() <= 1e-9 * arm.s2_r.abs().max(1e-12));
        }
    }

    // Duplicating every block keeps the pooled estimate and halves the
    // pooled variance.
    #[test]
    fn duplicated_blocks_halve_pooled_variance(data in simple_dataset()) {
        let n = data.n();
        let single = data.clone().with_blocks(vec!["a".into(); n]).unwrap();
        let pooled1 = match analyze_blocked(&single, BlockPolicy::Error, PoolingScheme::ComplierSize) {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        let mut y = data.outcome().to_vec();
        y.extend_from_slice(data.outcome());
        let mut d = data.receipt().to_vec();
        d.extend_from_slice(data.receipt());
        let mut t = data.assignment().to_vec();
        t.extend_from_slice(data.assignment());
        let mut labels = vec!["a".to_string(); n];
        labels.extend(vec!["b".to_string(); n]);
        let doubled = Dataset::new(y, d, t, DesignMatrix::zeros(2 * n, 0))
            .unwrap()
            .with_blocks(labels)
            .unwrap();
        let pooled2 = analyze_blocked(&doubled, BlockPolicy::Error, PoolingScheme::ComplierSize).unwrap();
        prop_assert!((pooled2.tau_late - pooled1.tau_late).abs() <= 1e-10 * pooled1.tau_late.abs().max(1.0));
        prop_assert!((pooled2.variance - 0.5 * pooled1.variance).abs() <= 1e-10 * pooled1.variance.max(1e-12));
    }

    // 17-significant-digit serialization round-trips every finite float.
    #[test]
    fn float_serialization_round_trips(x in prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL) {
        let text = format_float(x);
        let parsed: f64 = text.parse().unwrap();
        prop_assert_eq!(parsed.to_bits(), x.to_bits());
    }
}
