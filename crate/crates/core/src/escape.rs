//! Unbounded orbits for α = 1/ln(2m).
//!
//! For μ = 2 the return map restricted to the gaining set is a translation of
//! φ̃ by `1/(8(N−1)) − 1/(4N−2) + O(N⁻²)`, while the rescaling to the next
//! level shrinks φ̃ by `(N−1)/N`. A seed where the two balance, near φ̃ = 1/8,
//! gains one unit of action on every return.

use serde::Serialize;

use crate::alpha::Alpha;
use crate::error::{MapError, Result};
use crate::maps::{AngleAccumulator, CylState, MapParams, NumericPolicy};
use crate::numeric::{DoubleDouble, NeumaierSum};
use crate::return_map::{analytic_intervals, ReturnClass, ReturnEvent, ReturnMapper};

/// `1/(8(N−1)) − 1/(4N−2)`.
pub fn second_order_drift(n: u64) -> f64 {
    let n = n as f64;
    1.0 / (8.0 * (n - 1.0)) - 1.0 / (4.0 * n - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeSeed {
    pub m: u64,
    pub alpha: Alpha,
    pub n0: u64,
    pub phi_tilde_0: f64,
    pub phi_0: f64,
    /// Set when φ̃₀ came from a numerical fixed-point solve.
    pub non_closed_form: bool,
}

impl EscapeSeed {
    pub fn params(&self, policy: NumericPolicy) -> MapParams {
        MapParams::pinball(self.alpha).with_policy(policy)
    }

    /// φ₀ at double-double precision.
    pub fn phi_0_dd(&self) -> DoubleDouble {
        let t = if self.m == 1 && !self.non_closed_form {
            closed_form_phi_tilde(self.n0)
        } else {
            DoubleDouble::from_f64(self.phi_tilde_0)
        };
        (self.alpha.value_dd() * t).div_f64(self.n0 as f64 - 1.0)
    }

    /// Same seed moved by `delta` in φ̃.
    pub fn perturbed(&self, delta: f64) -> Self {
        let t = self.phi_tilde_0 + delta;
        EscapeSeed {
            phi_tilde_0: t,
            phi_0: self.alpha.value() * t / (self.n0 as f64 - 1.0),
            non_closed_form: true,
            ..*self
        }
    }
}

fn closed_form_phi_tilde(n0: u64) -> DoubleDouble {
    let n = n0 as f64;
    DoubleDouble::ONE.div_f64(8.0) + DoubleDouble::ONE.div_f64(8.0 * (n - 1.0)).div_f64(2.0 * n - 1.0)
}

/// Seed for `α = 1/ln(2m)` at action `N0`: the closed form
/// `1/8 + 1/(8(N0−1)(2N0−1))` for `m = 1`, a numerical fixed point otherwise.
pub fn make_seed(m: u64, n0: u64) -> Result<EscapeSeed> {
    if m < 1 {
        return Err(MapError::domain("m must be at least 1"));
    }
    if n0 < 100 {
        return Err(MapError::domain(format!("N0 must be at least 100, got {n0}")));
    }
    if m > 1 {
        return fixed_point_seed(m, n0);
    }
    let alpha = Alpha::escape(m);
    let t = closed_form_phi_tilde(n0).to_f64();
    Ok(EscapeSeed {
        m,
        alpha,
        n0,
        phi_tilde_0: t,
        phi_0: alpha.value() * t / (n0 as f64 - 1.0),
        non_closed_form: false,
    })
}

/// Solves `φ̃′(φ̃) = φ̃` (next-level rescaling) by bisection over the part of
/// the gaining interval inside the first strip `(0, 1/μ)`.
pub fn fixed_point_seed(m: u64, n0: u64) -> Result<EscapeSeed> {
    if m < 1 {
        return Err(MapError::domain("m must be at least 1"));
    }
    let alpha = Alpha::escape(m);
    let params = MapParams::pinball(alpha).with_policy(NumericPolicy::DoubleDouble);
    let mapper = ReturnMapper::new(&params)?;
    let n = n0 as f64;
    let a = mapper.alpha();
    let an = analytic_intervals(&params, n)?;
    let scale = (n - 1.0) / a;
    let mut lo = (an.i_plus.lo * scale).max(0.0);
    let mut hi = (an.i_plus.hi * scale).min(1.0 / mapper.mu());
    // stay off the interval ends, where the class may flip
    let pad = 1e-9 * (hi - lo);
    lo += pad;
    hi -= pad;
    let residual = |t: f64| -> Result<f64> {
        let e = mapper.first_return(CylState::new(a * t / (n - 1.0), n))?;
        if e.classification != ReturnClass::Plus {
            return Err(MapError::domain(format!("probe {t} left the gaining set")));
        }
        Ok(e.phi_tilde_out - t)
    };
    let (mut flo, fhi) = (residual(lo)?, residual(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(MapError::domain(format!(
            "no fixed point of the rescaled return in ({lo}, {hi}) for m = {m}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = residual(mid)?;
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(EscapeSeed {
        m,
        alpha,
        n0,
        phi_tilde_0: t,
        phi_0: a * t / (n - 1.0),
        non_closed_form: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackPoint {
    pub return_index: u64,
    pub action: f64,
    pub phi_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub seed: EscapeSeed,
    pub numeric_policy: NumericPolicy,
    pub returns_requested: u64,
    pub returns_completed: u64,
    pub plus_returns: u64,
    pub zero_returns: u64,
    pub minus_returns: u64,
    pub longest_monotone_prefix: u64,
    pub final_action: f64,
    pub phi_tilde_track: Vec<TrackPoint>,
    pub track_decimation: u64,
    pub phi_tilde_min: f64,
    pub phi_tilde_max: f64,
    /// Returns whose crossing value `φ + 2αS1 + α/(N+n+1)` was checked against 2.
    pub certificate_checked: u64,
    pub certificate_passed: u64,
    pub min_crossing_margin: f64,
    /// Bound on the angle rounding accumulated over the run.
    pub rounding_estimate: f64,
    pub precision_warning: bool,
    pub stopped: Option<String>,
}

impl GrowthReport {
    pub fn all_gained(&self) -> bool {
        self.returns_completed == self.returns_requested && self.longest_monotone_prefix == self.returns_requested
    }
}

/// Number of leading returns whose crossing value is checked explicitly.
pub const CERTIFIED_RETURNS: u64 = 100;

/// Follows `returns` consecutive first returns from the seed.
pub fn run_escape(
    seed: &EscapeSeed,
    returns: u64,
    policy: NumericPolicy,
    track_decimation: u64,
) -> Result<GrowthReport> {
    let params = seed.params(policy);
    let mapper = ReturnMapper::new(&params)?;
    let d = track_decimation.max(1);
    match policy {
        NumericPolicy::Double => Ok(run_with(&mapper, seed, seed.phi_0, returns, d)),
        NumericPolicy::CompensatedDouble => {
            Ok(run_with(&mapper, seed, NeumaierSum::from_value(seed.phi_0), returns, d))
        }
        NumericPolicy::DoubleDouble => Ok(run_with(&mapper, seed, seed.phi_0_dd(), returns, d)),
    }
}

fn unit_roundoff(policy: NumericPolicy) -> f64 {
    match policy {
        NumericPolicy::Double | NumericPolicy::CompensatedDouble => f64::EPSILON / 2.0,
        NumericPolicy::DoubleDouble => f64::EPSILON * f64::EPSILON / 4.0,
    }
}

fn run_with<A: AngleAccumulator>(
    mapper: &ReturnMapper,
    seed: &EscapeSeed,
    phi0: A,
    returns: u64,
    d: u64,
) -> GrowthReport {
    let policy = A::POLICY;
    let u = unit_roundoff(policy);
    let mut r = GrowthReport {
        seed: *seed,
        numeric_policy: policy,
        returns_requested: returns,
        returns_completed: 0,
        plus_returns: 0,
        zero_returns: 0,
        minus_returns: 0,
        longest_monotone_prefix: 0,
        final_action: seed.n0 as f64,
        phi_tilde_track: Vec::with_capacity((returns / d) as usize + 1),
        track_decimation: d,
        phi_tilde_min: seed.phi_tilde_0,
        phi_tilde_max: seed.phi_tilde_0,
        certificate_checked: 0,
        certificate_passed: 0,
        min_crossing_margin: f64::INFINITY,
        rounding_estimate: 0.0,
        precision_warning: false,
        stopped: None,
    };
    let mut acc = phi0;
    let mut action = seed.n0 as f64;
    let mut monotone = true;
    for k in 1..=returns {
        let (e, next): (ReturnEvent, A) = match mapper.first_return_acc(acc, action) {
            Ok(x) => x,
            Err(err) => {
                r.stopped = Some(format!("return {k}: {err}"));
                break;
            }
        };
        acc = next;
        action = e.i_out;
        r.returns_completed = k;
        match e.classification {
            ReturnClass::Plus => r.plus_returns += 1,
            ReturnClass::Zero => r.zero_returns += 1,
            ReturnClass::Minus => r.minus_returns += 1,
        }
        if monotone && e.delta_i == 1 {
            r.longest_monotone_prefix = k;
        } else {
            monotone = false;
        }
        if k <= CERTIFIED_RETURNS {
            r.certificate_checked += 1;
            if e.crossing_margin > 0.0 {
                r.certificate_passed += 1;
            }
            r.min_crossing_margin = r.min_crossing_margin.min(e.crossing_margin);
        }
        r.phi_tilde_min = r.phi_tilde_min.min(e.phi_tilde_out);
        r.phi_tilde_max = r.phi_tilde_max.max(e.phi_tilde_out);
        if k % d == 0 {
            r.phi_tilde_track.push(TrackPoint {
                return_index: k,
                action,
                phi_tilde: e.phi_tilde_out,
            });
        }
        // plain sums round every step; compensated sums keep only the rounding
        // of the increments themselves, which add up to the ~2 traversed
        r.rounding_estimate += match policy {
            NumericPolicy::Double => 2.0 * u * e.total_steps as f64,
            NumericPolicy::CompensatedDouble => 4.0 * u,
            NumericPolicy::DoubleDouble => 4.0 * u * e.total_steps as f64,
        };
        if r.rounding_estimate > 1e-3 * mapper.width(action) {
            r.precision_warning = true;
        }
    }
    r.final_action = action;
    if r.certificate_checked == 0 {
        r.min_crossing_margin = f64::NAN;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRung {
    pub policy: NumericPolicy,
    pub longest_monotone_prefix: u64,
    pub returns_completed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderReport {
    pub rungs: Vec<LadderRung>,
    /// First policy whose monotone prefix reached the requested horizon.
    pub stabilized_at: Option<NumericPolicy>,
    pub report: GrowthReport,
}

/// Runs the escape at increasing precision until the monotone prefix covers
/// every requested return or the ladder is exhausted.
pub fn run_escape_ladder(seed: &EscapeSeed, returns: u64, track_decimation: u64) -> Result<LadderReport> {
    let mut rungs = Vec::new();
    let mut last = None;
    for policy in [
        NumericPolicy::Double,
        NumericPolicy::CompensatedDouble,
        NumericPolicy::DoubleDouble,
    ] {
        let rep = run_escape(seed, returns, policy, track_decimation)?;
        rungs.push(LadderRung {
            policy,
            longest_monotone_prefix: rep.longest_monotone_prefix,
            returns_completed: rep.returns_completed,
        });
        let done = rep.all_gained();
        last = Some(rep);
        if done {
            return Ok(LadderReport {
                rungs,
                stabilized_at: Some(policy),
                report: last.unwrap(),
            });
        }
    }
    Ok(LadderReport {
        rungs,
        stabilized_at: None,
        report: last.expect("ladder has rungs"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftResidual {
    pub n: u64,
    pub plus_points: u64,
    /// `max |φ̃′ − φ̃ − drift(N)|` over gaining points, φ̃′ rescaled at level N.
    pub max_residual: f64,
}

/// Compares the exact gaining returns for μ = 2 with the second-order drift.
pub fn drift_residual(n: u64, grid: u64) -> Result<DriftResidual> {
    let params = MapParams::pinball(Alpha::escape(1)).with_policy(NumericPolicy::DoubleDouble);
    let mapper = ReturnMapper::new(&params)?;
    let a = mapper.alpha();
    let nf = n as f64;
    let drift = second_order_drift(n);
    let mut out = DriftResidual {
        n,
        plus_points: 0,
        max_residual: 0.0,
    };
    for k in 0..grid {
        let t = (k as f64 + 0.5) / grid as f64;
        let e = mapper.first_return(CylState::new(a * t / (nf - 1.0), nf))?;
        if e.classification != ReturnClass::Plus {
            continue;
        }
        let old = (nf - 1.0) * e.phi_out / a;
        out.plus_points += 1;
        out.max_residual = out.max_residual.max((old - e.phi_tilde_in - drift).abs());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_examples() {
        assert!((second_order_drift(1000) - (1.0 / 7992.0 - 1.0 / 3998.0)).abs() < 1e-18);
        assert!((second_order_drift(1000) + 1.25e-4).abs() < 1e-6);
        assert!((second_order_drift(5) - (1.0 / 32.0 - 1.0 / 18.0)).abs() < 1e-16);
        let n = 1_000_000u64;
        assert!((second_order_drift(n) * 8.0 * n as f64 + 1.0).abs() < 1e-5);
    }

    #[test]
    fn closed_form_seed() {
        let s = make_seed(1, 1000).unwrap();
        let expect = 0.125 + 1.0 / (8.0 * 999.0 * 1999.0);
        assert!((s.phi_tilde_0 - expect).abs() < 1e-17);
        assert!(!s.non_closed_form);
        assert!((s.phi_0 - s.alpha.value() * s.phi_tilde_0 / 999.0).abs() < 1e-19);
        let far = make_seed(1, 1_000_000).unwrap();
        assert!((far.phi_tilde_0 - 0.125).abs() < 1e-12);
        assert!(make_seed(0, 1000).is_err());
        assert!(make_seed(1, 50).is_err());
    }

    #[test]
    fn empty_run() {
        let s = make_seed(1, 1000).unwrap();
        let r = run_escape(&s, 0, NumericPolicy::DoubleDouble, 1).unwrap();
        assert_eq!(r.final_action, 1000.0);
        assert_eq!(r.returns_completed, 0);
        assert!(r.phi_tilde_track.is_empty());
    }

    #[test]
    fn short_run_gains_every_return() {
        let s = make_seed(1, 1000).unwrap();
        let r = run_escape(&s, 50, NumericPolicy::DoubleDouble, 1).unwrap();
        assert_eq!(r.longest_monotone_prefix, 50);
        assert_eq!(r.final_action, 1050.0);
        assert_eq!(r.certificate_passed, 50);
        assert!(r.min_crossing_margin > 0.0);
        assert!(!r.precision_warning);
        assert_eq!(
            r.final_action - 1000.0,
            (r.plus_returns as f64) - (r.minus_returns as f64)
        );
    }

    #[test]
    fn drift_residual_is_second_order() {
        for n in [200u64, 800] {
            let d = drift_residual(n, 400).unwrap();
            assert!(d.plus_points > 0);
            assert!(d.max_residual * (n as f64).powi(2) <= 1.0, "{d:?}");
        }
    }
}
