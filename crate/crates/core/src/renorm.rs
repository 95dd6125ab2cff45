//! Renormalized first-return map in the rescaled angle `φ̃ = (I−1)φ/α`.
//!
//! With `μ = exp(1/α)` the number of climbing steps from the left end of a
//! fiber is `μ(N−1) − N + H_μ(N−1)`, and the return map is, up to `O(1/N)`, a
//! rotation of `φ̃` whose angle depends on which of the gaining, neutral or
//! losing sets `φ̃` belongs to. This module evaluates those predictions and
//! measures them against the exact return map.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::alpha::Alpha;
use crate::error::{MapError, Result};
use crate::maps::{CylState, MapParams};
use crate::numeric::{two_prod, DoubleDouble, NeumaierSum};
use crate::return_map::{analytic_intervals, gaps_from, i_min, Interval, ReturnClass, ReturnMapper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MuRegime {
    /// 1 < μ < 3
    Low,
    /// μ ≥ 3: the step count picks up an extra `⌊(μ−1)/2⌋`.
    High,
}

impl MuRegime {
    pub fn of(mu: f64) -> Self {
        if mu < 3.0 {
            MuRegime::Low
        } else {
            MuRegime::High
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenormContext {
    pub alpha: Alpha,
    pub mu: f64,
    pub strip0: Interval,
    pub strip1: Interval,
    pub mu_regime: MuRegime,
}

impl RenormContext {
    pub fn new(alpha: Alpha) -> Result<Self> {
        alpha.validate()?;
        let mu = alpha.mu();
        Ok(RenormContext {
            alpha,
            mu,
            strip0: Interval::new(0.0, 1.0 / mu),
            strip1: Interval::new(1.0 - 1.0 / mu, 1.0),
            mu_regime: MuRegime::of(mu),
        })
    }

    /// Refuses contexts outside `1 < μ < 3`.
    pub fn require_low(&self) -> Result<()> {
        match self.mu_regime {
            MuRegime::Low => Ok(()),
            MuRegime::High => Err(MapError::domain(format!(
                "the renormalized return map needs 1 < mu < 3, got mu = {}",
                self.mu
            ))),
        }
    }

    pub fn h(&self, x: f64) -> f64 {
        h_mu(self.mu, x)
    }

    fn in_strip0(&self, t: f64) -> bool {
        t >= self.strip0.lo && t <= self.strip0.hi
    }

    fn in_strip1(&self, t: f64) -> bool {
        t >= self.strip1.lo && t <= self.strip1.hi
    }
}

/// `exp(1/α)` and its regime.
pub fn mu_of_alpha(alpha: f64) -> Result<(f64, MuRegime)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(MapError::domain(format!("alpha must be positive, got {alpha}")));
    }
    let mu = (1.0 / alpha).exp();
    Ok((mu, MuRegime::of(mu)))
}

/// Fractional part of `μx`, from the exact product.
pub fn frac_mu_x(mu: f64, x: f64) -> f64 {
    let (p, e) = two_prod(mu, x);
    DoubleDouble::from_pair(p, e).fract_f64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HParts {
    /// `χ(μ + 2{μx} − 3 ≥ 0)`
    pub chi: u8,
    pub frac: f64,
    pub value: f64,
}

pub fn h_mu_parts(mu: f64, x: f64) -> HParts {
    let frac = frac_mu_x(mu, x);
    let chi = u8::from(mu + 2.0 * frac - 3.0 >= 0.0);
    HParts {
        chi,
        frac,
        value: f64::from(chi) - frac,
    }
}

/// `H_μ(x) = χ(μ + 2{μx} − 3 ≥ 0) − {μx}`.
pub fn h_mu(mu: f64, x: f64) -> f64 {
    h_mu_parts(mu, x).value
}

/// Predicted climbing-step count `n` at action `N`.
pub fn predicted_n(ctx: &RenormContext, n_action: u64) -> Result<i64> {
    let nf = n_action as f64;
    if nf < i_min(ctx.alpha.value()) {
        return Err(MapError::domain(format!(
            "N = {n_action} is below the analysis threshold"
        )));
    }
    let (p, e) = two_prod(ctx.mu, nf - 1.0);
    let mut v = DoubleDouble::from_pair(p, e).add_f64(-nf).add_f64(ctx.h(nf - 1.0));
    if ctx.mu_regime == MuRegime::High {
        v = v.add_f64(((ctx.mu - 1.0) / 2.0).floor());
    }
    let value = v.to_f64();
    let r = value.round();
    if (value - r).abs() > 1e-6 {
        return Err(MapError::NonIntegerPrediction { value });
    }
    Ok(r as i64)
}

/// Climbing-step count `up_steps − 1` measured at the middle of the analytic
/// gaining interval.
pub fn measured_n(params: &MapParams, n_action: u64) -> Result<i64> {
    let mapper = ReturnMapper::new(params)?;
    let an = analytic_intervals(params, n_action as f64)?;
    let phi = 0.5 * (an.i_plus.lo + an.i_plus.hi);
    Ok(mapper.first_return(CylState::new(phi, n_action as f64))?.n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CaseId {
    Plus,
    Minus,
    ZeroMiddle,
    ZeroLeft,
    ZeroRight,
}

impl CaseId {
    pub const ALL: [CaseId; 5] = [
        CaseId::Plus,
        CaseId::Minus,
        CaseId::ZeroMiddle,
        CaseId::ZeroLeft,
        CaseId::ZeroRight,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            CaseId::Plus => "plus",
            CaseId::Minus => "minus",
            CaseId::ZeroMiddle => "zero_middle",
            CaseId::ZeroLeft => "zero_left",
            CaseId::ZeroRight => "zero_right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CasePrediction {
    pub case_id: CaseId,
    pub phi_tilde_next: f64,
    pub increment: f64,
}

fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// The five case formulas of the renormalized return map.
pub fn predicted_return_cases(
    ctx: &RenormContext,
    n_action: u64,
    phi_tilde: f64,
    case: CaseId,
) -> Result<CasePrediction> {
    ctx.require_low()?;
    let n = n_action as f64;
    let k = 2.0 / ctx.mu;
    let increment = match case {
        CaseId::Plus => k * (1.0 + ctx.h(n - 1.0)) - 1.0,
        CaseId::Minus => k * (1.0 + ctx.h(n - 2.0)) - 1.0,
        CaseId::ZeroMiddle => k * (ctx.h(n - 1.0) - 0.5) - 1.0,
        CaseId::ZeroLeft => k * (ctx.h(n - 1.0) + 0.5) - 1.0,
        CaseId::ZeroRight => k * (ctx.h(n - 2.0) + 0.5) - 1.0,
    };
    Ok(CasePrediction {
        case_id: case,
        phi_tilde_next: frac(phi_tilde + increment),
        increment,
    })
}

/// Shift of the neutral-set return when the step count drops by `k` below its
/// value on the gaining set: each lost climbing step rotates by `−2/μ`.
pub fn restored_zero_increment(ctx: &RenormContext, n_action: u64, stratum_shift: i64) -> Result<f64> {
    ctx.require_low()?;
    let n = n_action as f64;
    Ok(2.0 / ctx.mu * (1.0 + ctx.h(n - 1.0) - stratum_shift as f64) - 1.0)
}

/// `g_μ` of the compact form; the indicator strips are evaluated at `φ̃`.
pub fn g_mu_value(ctx: &RenormContext, n_action: u64, phi_tilde: f64, chi_plus: bool, chi_minus: bool) -> Result<f64> {
    ctx.require_low()?;
    let c0 = f64::from(u8::from(ctx.in_strip0(phi_tilde)));
    let c1 = f64::from(u8::from(ctx.in_strip1(phi_tilde)));
    let n = n_action as f64;
    let cp = f64::from(u8::from(chi_plus));
    let cm = f64::from(u8::from(chi_minus));
    Ok(ctx.h(n - 1.0 - c1) + 0.5 * (1.0 + cp + cm) - (c0 + c1))
}

/// Compact form `φ̃ + (2/μ) g_μ mod 1`.
pub fn g_mu_form(ctx: &RenormContext, n_action: u64, phi_tilde: f64, chi_plus: bool, chi_minus: bool) -> Result<f64> {
    let g = g_mu_value(ctx, n_action, phi_tilde, chi_plus, chi_minus)?;
    Ok(frac(phi_tilde + 2.0 / ctx.mu * g))
}

/// Three-term expansion of `Σ_{k=0}^{n} 1/(N+k)`.
pub fn s1_asymptotic(n_action: u64, n: u64) -> f64 {
    let a = (n_action + n) as f64;
    let b = n_action as f64 - 1.0;
    ((n + 1) as f64 / b).ln_1p() + 0.5 * (1.0 / a - 1.0 / b) - (1.0 / (a * a) - 1.0 / (b * b)) / 12.0
}

/// Compensated `Σ_{k=0}^{n} 1/(N+k)`.
pub fn s1_exact(n_action: u64, n: u64) -> f64 {
    (0..=n)
        .map(|k| 1.0 / (n_action + k) as f64)
        .collect::<NeumaierSum>()
        .value()
}

/// Circle distance on `[0, 1)`.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = frac(a - b);
    d.min(1.0 - d)
}

/// Which formulas the error scan compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseFormulas {
    /// The five case formulas as written.
    Printed,
    /// Gaining and losing cases as written; neutral cases shifted by the
    /// measured step-count drop.
    Restored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseStats {
    pub count: u64,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormRow {
    pub i: u64,
    pub grid: u64,
    pub max_abs_error: f64,
    /// `φ̃` where the maximum occurs.
    pub argmax_phi_tilde: f64,
    pub argmax_case: Option<CaseId>,
    pub cases: BTreeMap<CaseId, CaseStats>,
    pub failed_cells: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormScan {
    pub alpha: f64,
    pub mu: f64,
    pub formulas: CaseFormulas,
    pub rows: Vec<RenormRow>,
    /// Least-squares slope of `ln(max error)` against `ln I`; needs two rows.
    pub slope: Option<f64>,
    /// `I · max error` per row.
    pub scaled_errors: Vec<f64>,
}

/// Case selection from the true class and the position relative to the
/// analytic gaining and losing intervals.
pub fn case_for(class: ReturnClass, phi: f64, i_plus: &Interval, i_minus: &Interval) -> CaseId {
    match class {
        ReturnClass::Plus => CaseId::Plus,
        ReturnClass::Minus => CaseId::Minus,
        ReturnClass::Zero => {
            if phi <= i_plus.lo {
                CaseId::ZeroLeft
            } else if phi >= i_minus.hi {
                CaseId::ZeroRight
            } else {
                CaseId::ZeroMiddle
            }
        }
    }
}

/// Max circle distance between the exact rescaled return and the matching
/// case prediction, over `grid` midpoints `φ̃ = (k + 1/2)/grid`, for each `I`.
pub fn renorm_error_scan(params: &MapParams, i_list: &[u64], grid: u64, formulas: CaseFormulas) -> Result<RenormScan> {
    let ctx = RenormContext::new(params.alpha)?;
    ctx.require_low()?;
    let mapper = ReturnMapper::new(params)?;
    let alpha = mapper.alpha();
    let mut rows = Vec::with_capacity(i_list.len());
    for &i in i_list {
        let fi = i as f64;
        let an = analytic_intervals(params, fi)?;
        let n_plus = gaps_from(&params.alpha, 0.0, fi).n;
        let cells: Vec<Option<(CaseId, f64, f64)>> = (0..grid)
            .into_par_iter()
            .map(|k| {
                let t = (k as f64 + 0.5) / grid as f64;
                let phi = alpha * t / (fi - 1.0);
                let e = mapper.first_return(CylState::new(phi, fi)).ok()?;
                let case = case_for(e.classification, phi, &an.i_plus, &an.i_minus);
                let pred = match (formulas, e.classification) {
                    (CaseFormulas::Restored, ReturnClass::Zero) => {
                        frac(t + restored_zero_increment(&ctx, i, n_plus - e.n).ok()?)
                    }
                    _ => predicted_return_cases(&ctx, i, t, case).ok()?.phi_tilde_next,
                };
                Some((case, t, circle_distance(e.phi_tilde_out, pred)))
            })
            .collect();
        let mut row = RenormRow {
            i,
            grid,
            max_abs_error: 0.0,
            argmax_phi_tilde: f64::NAN,
            argmax_case: None,
            cases: BTreeMap::new(),
            failed_cells: 0,
        };
        for c in cells {
            let Some((case, t, err)) = c else {
                row.failed_cells += 1;
                continue;
            };
            let st = row.cases.entry(case).or_insert(CaseStats {
                count: 0,
                max_error: 0.0,
            });
            st.count += 1;
            st.max_error = st.max_error.max(err);
            if err > row.max_abs_error || row.argmax_case.is_none() {
                row.max_abs_error = err;
                row.argmax_phi_tilde = t;
                row.argmax_case = Some(case);
            }
        }
        rows.push(row);
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.max_abs_error > 0.0)
        .map(|r| ((r.i as f64).ln(), r.max_abs_error.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        Some(least_squares_slope(&pts))
    } else {
        None
    };
    Ok(RenormScan {
        alpha,
        mu: ctx.mu,
        formulas,
        scaled_errors: rows.iter().map(|r| r.i as f64 * r.max_abs_error).collect(),
        rows,
        slope,
    })
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(alpha: Alpha) -> RenormContext {
        RenormContext::new(alpha).unwrap()
    }

    #[test]
    fn mu_values() {
        let (mu, r) = mu_of_alpha(1.0 / 2f64.ln()).unwrap();
        assert!((mu - 2.0).abs() < 1e-14);
        assert_eq!(r, MuRegime::Low);
        assert!((mu_of_alpha(1.0).unwrap().0 - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(ctx(Alpha::inverse_log(3)).mu_regime, MuRegime::High);
        assert_eq!(ctx(Alpha::inverse_log(3)).mu, 3.0);
        assert!(mu_of_alpha(0.0).is_err());
        assert!(mu_of_alpha(-1.0).is_err());
    }

    #[test]
    fn strips_have_width_one_over_mu() {
        let c = ctx(Alpha::inverse_log_ratio(5, 2));
        assert_eq!(c.strip0.len(), 0.4);
        assert!((c.strip1.len() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn h_examples() {
        assert_eq!(h_mu(2.0, 7.0), 0.0);
        assert_eq!(h_mu_parts(2.0, 7.0).chi, 0);
        assert_eq!(h_mu(2.5, 1.0), 0.5);
        assert_eq!(h_mu_parts(2.5, 1.0).chi, 1);
        assert!((h_mu(1.2, 2.0) + 0.4).abs() < 1e-15);
    }

    #[test]
    fn h_range() {
        for mu in [1.1, 1.5, 2.0, 2.5, 2.9] {
            for k in 0..1000 {
                let p = h_mu_parts(mu, k as f64 * 0.37 + 0.01);
                assert!(p.value > -1.0 && p.value <= 1.0);
                assert!(p.chi <= 1);
            }
        }
    }

    #[test]
    fn predicted_n_examples() {
        assert_eq!(predicted_n(&ctx(Alpha::inverse_log(2)), 101).unwrap(), 99);
        assert_eq!(predicted_n(&ctx(Alpha::inverse_log(2)), 1000).unwrap(), 998);
        assert_eq!(predicted_n(&ctx(Alpha::inverse_log_ratio(5, 2)), 200).unwrap(), 298);
        assert!(predicted_n(&ctx(Alpha::inverse_log(2)), 3).is_err());
    }

    #[test]
    fn predicted_n_matches_oracle() {
        for (alpha, n) in [
            (Alpha::inverse_log(2), 101u64),
            (Alpha::inverse_log(2), 1000),
            (Alpha::inverse_log_ratio(5, 2), 200),
        ] {
            let p = MapParams::pinball(alpha);
            assert_eq!(predicted_n(&ctx(alpha), n).unwrap(), measured_n(&p, n).unwrap());
        }
    }

    #[test]
    fn case_formula_examples() {
        let c2 = ctx(Alpha::inverse_log(2));
        let p = predicted_return_cases(&c2, 101, 0.3, CaseId::Plus).unwrap();
        assert_eq!(p.increment, 0.0);
        assert_eq!(p.phi_tilde_next, 0.3);
        let z = predicted_return_cases(&c2, 101, 0.2, CaseId::ZeroMiddle).unwrap();
        assert_eq!(frac(z.increment), 0.5);
        assert!((z.phi_tilde_next - 0.7).abs() < 1e-15);
        let c25 = ctx(Alpha::inverse_log_ratio(5, 2));
        let p = predicted_return_cases(&c25, 200, 0.1, CaseId::Plus).unwrap();
        assert!((p.increment - 0.2).abs() < 1e-15);
        assert!(predicted_return_cases(&ctx(Alpha::inverse_log(3)), 200, 0.1, CaseId::Plus).is_err());
    }

    #[test]
    fn g_mu_examples() {
        let c2 = ctx(Alpha::inverse_log(2));
        assert_eq!(g_mu_value(&c2, 101, 0.1, true, false).unwrap(), 0.0);
        assert_eq!(g_mu_form(&c2, 101, 0.1, true, false).unwrap(), 0.1);
        // μ = 2 strips cover [0, 1/2] and [1/2, 1]; only φ̃ = 1/2 lies in both,
        // so "neither strip" needs μ > 2
        let c25 = ctx(Alpha::inverse_log_ratio(5, 2));
        let g = g_mu_value(&c25, 200, 0.5, false, false).unwrap();
        assert!((g - (h_mu(2.5, 199.0) + 0.5)).abs() < 1e-15);
        let g = g_mu_value(&c25, 200, 0.9, false, true).unwrap();
        assert!((g - h_mu(2.5, 198.0)).abs() < 1e-15);
    }

    #[test]
    fn s1_expansion_accuracy() {
        assert!((s1_asymptotic(101, 99) - s1_exact(101, 99)).abs() <= 1e-8);
        for n in [50u64, 100, 1000] {
            assert!((s1_asymptotic(n, 0) - 1.0 / n as f64).abs() <= 1e-6);
        }
        let big = 1_000_000u64;
        assert!((s1_asymptotic(big, big - 2) - 2f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn circle_distance_wraps() {
        assert!((circle_distance(0.95, 0.05) - 0.1).abs() < 1e-15);
        assert_eq!(circle_distance(0.3, 0.3), 0.0);
        assert!((circle_distance(0.0, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_cell_scan() {
        let p = MapParams::pinball(Alpha::inverse_log(2));
        let s = renorm_error_scan(&p, &[200], 1, CaseFormulas::Printed).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert!(s.slope.is_none());
        let mapper = ReturnMapper::new(&p).unwrap();
        let phi = p.alpha.value() * 0.5 / 199.0;
        let e = mapper.first_return(CylState::new(phi, 200.0)).unwrap();
        let an = analytic_intervals(&p, 200.0).unwrap();
        let case = case_for(e.classification, phi, &an.i_plus, &an.i_minus);
        let pred = predicted_return_cases(&ctx(p.alpha), 200, 0.5, case).unwrap();
        assert_eq!(
            s.rows[0].max_abs_error,
            circle_distance(e.phi_tilde_out, pred.phi_tilde_next)
        );
    }

    #[test]
    fn scan_refuses_high_mu() {
        let p = MapParams::pinball(Alpha::inverse_log(3));
        assert!(renorm_error_scan(&p, &[100], 10, CaseFormulas::Printed).is_err());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [100.0f64, 200.0, 400.0]
            .iter()
            .map(|&x| (x.ln(), (3.0 / x).ln()))
            .collect();
        assert!((least_squares_slope(&pts) + 1.0).abs() < 1e-12);
    }
}
