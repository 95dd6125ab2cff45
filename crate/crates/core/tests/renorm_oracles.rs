use pinball_core::escape::{drift_residual, second_order_drift};
use pinball_core::maps::MapParams;
use pinball_core::renorm::{
    g_mu_form, least_squares_slope, measured_n, predicted_n, renorm_error_scan, s1_asymptotic, s1_exact, CaseFormulas,
    CaseId, RenormContext,
};
use pinball_core::{Alpha, MapError};

fn mus() -> [Alpha; 3] {
    [
        Alpha::inverse_log_ratio(3, 2),
        Alpha::inverse_log(2),
        Alpha::inverse_log_ratio(5, 2),
    ]
}

#[test]
fn step_count_formula_matches_iteration() {
    let (mut total, mut hits) = (0, 0);
    for alpha in mus() {
        let ctx = RenormContext::new(alpha).unwrap();
        let p = MapParams::pinball(alpha);
        let mut n = 50.0f64;
        while n <= 5000.0 {
            let nn = n.round() as u64;
            total += 1;
            match predicted_n(&ctx, nn) {
                Ok(v) if v == measured_n(&p, nn).unwrap() => hits += 1,
                Ok(v) => panic!("{alpha} N={nn}: predicted {v}"),
                Err(MapError::NonIntegerPrediction { .. }) => {}
                Err(e) => panic!("{e}"),
            }
            n *= 1.2;
        }
    }
    assert!(hits as f64 >= 0.999 * total as f64, "{hits}/{total}");
}

#[test]
fn harmonic_expansion_error_decays_fast() {
    let pts: Vec<(f64, f64)> = (4..10)
        .map(|k| {
            let n = 1u64 << k;
            let err = (s1_asymptotic(n, n) - s1_exact(n, n)).abs();
            ((n as f64).ln(), err.ln())
        })
        .collect();
    let slope = least_squares_slope(&pts);
    assert!(slope <= -2.5, "slope {slope}");
}

#[test]
fn gaining_and_losing_cases_converge_at_first_order() {
    for alpha in [Alpha::inverse_log(2), Alpha::inverse_log_ratio(5, 2)] {
        let s = renorm_error_scan(
            &MapParams::pinball(alpha),
            &[100, 200, 400, 800],
            400,
            CaseFormulas::Printed,
        )
        .unwrap();
        let pts: Vec<(f64, f64)> = s
            .rows
            .iter()
            .map(|r| {
                let e = r.cases[&CaseId::Plus].max_error.max(r.cases[&CaseId::Minus].max_error);
                ((r.i as f64).ln(), e.ln())
            })
            .collect();
        let slope = least_squares_slope(&pts);
        assert!((-1.5..=-0.5).contains(&slope), "{alpha}: {slope}");
    }
}

#[test]
fn printed_neutral_cases_are_off_by_one_over_mu() {
    for alpha in [Alpha::inverse_log(2), Alpha::inverse_log_ratio(5, 2)] {
        let mu = alpha.mu();
        let s = renorm_error_scan(&MapParams::pinball(alpha), &[800], 400, CaseFormulas::Printed).unwrap();
        let mid = s.rows[0].cases[&CaseId::ZeroMiddle].max_error;
        assert!((mid - 1.0 / mu).abs() < 0.01, "{alpha}: {mid}");
        let r = renorm_error_scan(
            &MapParams::pinball(alpha),
            &[100, 200, 400, 800],
            400,
            CaseFormulas::Restored,
        )
        .unwrap();
        let slope = r.slope.unwrap();
        assert!((-1.5..=-0.5).contains(&slope), "{alpha}: {slope}");
    }
}

#[test]
fn compact_form_agrees_with_gaining_case_for_mu_two() {
    let ctx = RenormContext::new(Alpha::inverse_log(2)).unwrap();
    for k in 0..50 {
        let t = (k as f64 + 0.5) / 100.0;
        assert_eq!(g_mu_form(&ctx, 1001, t, true, false).unwrap(), t);
    }
}

#[test]
fn mu_two_gaining_returns_follow_second_order_drift() {
    let mut residuals = Vec::new();
    for n in [100u64, 200, 400, 800, 1600] {
        let d = drift_residual(n, 200).unwrap();
        assert!(d.plus_points > 30, "{}", d.plus_points);
        residuals.push(d.max_residual * (n * n) as f64);
        assert!(second_order_drift(n) < 0.0);
    }
    assert!(residuals.iter().all(|&c| c <= 1.0), "{residuals:?}");
}
