//! First-return map of the pinball map to the fundamental domain
//! `Φ = {0 < φ < α/(I−1)}`, and the split of each fiber into the sets where
//! the return gains, keeps or loses one unit of action.
//!
//! An excursion from `(φ, I)` climbs while its iterates land in `(0, 1)`,
//! crosses 1 once, descends while it lands in `(1, 2)` and re-enters Φ on the
//! step that wraps past 2. With `up` landings below 1 and `down` landings above
//! (the crossing step included), `n = up − 1`, `n′ = down − 2` and
//! `I′ − I = n − n′`. The wrap is a gain step of its own, so the map runs
//! `up + down + 1` times.

use rayon::prelude::*;
use serde::Serialize;

use crate::alpha::Alpha;
use crate::error::{MapError, Result};
use crate::maps::{
    step_pinball_inverse, step_with, AngleAccumulator, Coef, CylState, Increment, MapParams, NumericPolicy,
    SingularPolicy,
};
use crate::numeric::{DoubleDouble, NeumaierSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ReturnClass {
    Plus,
    Zero,
    Minus,
}

impl ReturnClass {
    pub fn from_delta(delta_i: i64) -> Self {
        match delta_i.signum() {
            1 => ReturnClass::Plus,
            -1 => ReturnClass::Minus,
            _ => ReturnClass::Zero,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ReturnClass::Plus => "plus",
            ReturnClass::Zero => "zero",
            ReturnClass::Minus => "minus",
        }
    }
}

/// One excursion from Φ back to Φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnEvent {
    pub phi_in: f64,
    pub i_in: f64,
    pub phi_tilde_in: f64,
    /// Landings in (0, 1) before the crossing.
    pub up_steps: u64,
    /// Landings in (1, 2), the crossing step included.
    pub down_steps: u64,
    pub n: i64,
    pub n_prime: i64,
    /// Σ 1/J over the climbing steps.
    pub s1: f64,
    /// Σ 1/J over the descending steps after the crossing.
    pub s2: f64,
    /// `S2 − S1 + 1/(I′ − 1)`: the action-dependent part of the return shift.
    pub delta_s: f64,
    /// Gap between the last iterate below 1 and 1.
    pub delta1: f64,
    /// Gap between 1 and the first iterate above 1.
    pub delta2: f64,
    pub phi_out: f64,
    pub i_out: f64,
    pub phi_tilde_out: f64,
    pub delta_i: i64,
    pub classification: ReturnClass,
    pub total_steps: u64,
    /// `φ + 2αS1 + α/(I+n+1) − 2`; positive exactly on gaining returns.
    pub crossing_margin: f64,
}

/// Lower bound on the action for return-map analysis: `max(3, ⌈2α⌉ + 2)`.
pub fn i_min(alpha: f64) -> f64 {
    3f64.max((2.0 * alpha).ceil() + 2.0)
}

/// Width `α/(I−1)` of the fundamental fiber.
pub fn fiber_width(alpha: f64, action: f64) -> f64 {
    alpha / (action - 1.0)
}

pub fn in_fundamental_domain(params: &MapParams, s: CylState) -> Result<bool> {
    params.require_pinball()?;
    if !(s.action > 1.0) {
        return Err(MapError::domain(format!(
            "the fundamental domain needs action > 1, got {}",
            s.action
        )));
    }
    Ok(s.angle > 0.0 && s.angle < fiber_width(params.alpha.value(), s.action))
}

/// Rescaled angle `(I−1)φ/α`, defined on the closure of Φ.
pub fn rescale(params: &MapParams, s: CylState) -> Result<f64> {
    params.require_pinball()?;
    if !(s.action > 1.0) {
        return Err(MapError::domain(format!(
            "rescaling needs action > 1, got {}",
            s.action
        )));
    }
    let alpha = params.alpha.value();
    if !(s.angle >= 0.0 && s.angle <= fiber_width(alpha, s.action)) {
        return Err(MapError::domain(format!(
            "angle {} lies outside the fundamental fiber",
            s.angle
        )));
    }
    Ok(((s.action - 1.0) * s.angle / alpha).min(1.0))
}

/// Precomputed constants for repeated first returns with one parameter set.
#[derive(Debug, Clone, Copy)]
pub struct ReturnMapper {
    params: MapParams,
    coef: Coef,
    alpha: f64,
    mu: f64,
    i_min: f64,
}

impl ReturnMapper {
    pub fn new(params: &MapParams) -> Result<Self> {
        params.require_pinball()?;
        // Exact singular landings always stop a return: there is no next visit
        // to Φ to report for them.
        let params = params.with_singular_policy(SingularPolicy::Halt);
        let coef = Coef::of_alpha(&params.alpha);
        Ok(ReturnMapper {
            params,
            coef,
            alpha: coef.f,
            mu: params.alpha.mu(),
            i_min: i_min(coef.f),
        })
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn i_min(&self) -> f64 {
        self.i_min
    }

    pub fn width(&self, action: f64) -> f64 {
        fiber_width(self.alpha, action)
    }

    /// Step budget `4μI + 64`.
    pub fn budget(&self, action: f64) -> u64 {
        (4.0 * self.mu * action + 64.0).ceil() as u64
    }

    /// First return under the configured numeric policy.
    pub fn first_return(&self, s: CylState) -> Result<ReturnEvent> {
        match self.params.numeric_policy {
            NumericPolicy::Double => self.first_return_acc(s.angle, s.action).map(|r| r.0),
            NumericPolicy::CompensatedDouble => self
                .first_return_acc(NeumaierSum::from_value(s.angle), s.action)
                .map(|r| r.0),
            NumericPolicy::DoubleDouble => self
                .first_return_acc(DoubleDouble::from_f64(s.angle), s.action)
                .map(|r| r.0),
        }
    }

    /// First return with an explicit accumulator; the returned accumulator holds
    /// the exit angle at full working precision for chaining returns.
    pub fn first_return_acc<A: AngleAccumulator>(&self, phi: A, action: f64) -> Result<(ReturnEvent, A)> {
        if !(action >= self.i_min) {
            return Err(MapError::domain(format!(
                "return-map analysis needs action >= {}, got {action}",
                self.i_min
            )));
        }
        let w = self.width(action);
        let phi_dd = phi.to_dd();
        if !(phi_dd > DoubleDouble::ZERO && phi_dd < DoubleDouble::from_f64(w)) {
            return Err(MapError::domain(format!(
                "angle {} is outside the fundamental fiber (0, {w})",
                phi.to_f64()
            )));
        }
        let budget = self.budget(action);
        let one = DoubleDouble::ONE;
        let mut angle = phi;
        let mut j = action;
        let mut s1 = A::from_f64(0.0);
        let mut s2 = A::from_f64(0.0);
        let mut up = 0u64;
        let mut down = 0u64;
        let mut crossing: Option<(A, A)> = None;
        let mut prev = phi_dd;
        for k in 1..=budget {
            let before = angle;
            let pre = j;
            step_with(&self.params, &self.coef, &mut angle, &mut j).map_err(|e| e.at_step(k))?;
            let a = angle.to_dd();
            let wrapped = a < prev;
            prev = a;
            if wrapped && j > 1.0 && a < DoubleDouble::from_f64(self.width(j)) {
                return Ok((self.event(phi, action, angle, j, up, down, s1, s2, crossing), angle));
            }
            if a < one {
                up += 1;
                s1.add_inc(&Coef::ONE, Increment::Div(pre));
            } else if crossing.is_none() {
                down += 1;
                crossing = Some((before, angle));
            } else {
                down += 1;
                s2.add_inc(&Coef::ONE, Increment::Div(pre));
            }
        }
        Err(MapError::BudgetExceeded { budget })
    }

    #[allow(clippy::too_many_arguments)]
    fn event<A: AngleAccumulator>(
        &self,
        phi: A,
        i_in: f64,
        out: A,
        i_out: f64,
        up: u64,
        down: u64,
        s1: A,
        s2: A,
        crossing: Option<(A, A)>,
    ) -> ReturnEvent {
        let alpha_dd = self.coef.dd;
        let (delta1, delta2) = match crossing {
            Some((b, a)) => (
                (DoubleDouble::ONE - b.to_dd()).to_f64(),
                (a.to_dd() - DoubleDouble::ONE).to_f64(),
            ),
            None => (f64::NAN, f64::NAN),
        };
        let n = up as i64 - 1;
        let n_prime = down as i64 - 2;
        let s1_dd = s1.to_dd();
        let s2_dd = s2.to_dd();
        let delta_s = s2_dd - s1_dd + DoubleDouble::ONE.div_f64(i_out - 1.0);
        let margin = phi.to_dd() + (alpha_dd * s1_dd).mul_f64(2.0) + alpha_dd.div_f64(i_in + n as f64 + 1.0)
            - DoubleDouble::from_f64(2.0);
        let tilde = |a: DoubleDouble, i: f64| (a.mul_f64(i - 1.0) / alpha_dd).to_f64();
        let delta_i = (i_out - i_in) as i64;
        ReturnEvent {
            phi_in: phi.to_f64(),
            i_in,
            phi_tilde_in: tilde(phi.to_dd(), i_in),
            up_steps: up,
            down_steps: down,
            n,
            n_prime,
            s1: s1_dd.to_f64(),
            s2: s2_dd.to_f64(),
            delta_s: delta_s.to_f64(),
            delta1,
            delta2,
            phi_out: out.angle_f64(2.0),
            i_out,
            phi_tilde_out: tilde(out.to_dd(), i_out),
            delta_i,
            classification: ReturnClass::from_delta(delta_i),
            total_steps: up + down + 1,
            crossing_margin: margin.to_f64(),
        }
    }

    /// Return class only, `None` if the return could not be computed.
    pub fn classify(&self, s: CylState) -> Option<ReturnClass> {
        self.first_return(s).ok().map(|e| e.classification)
    }
}

/// First return of `s ∈ Φ` with `action ≥ i_min`.
pub fn first_return(params: &MapParams, s: CylState) -> Result<ReturnEvent> {
    ReturnMapper::new(params)?.first_return(s)
}

/// Step count and crossing gaps of the forward harmonic walk
/// `start + α Σ_{j≥0} 1/(I+j)` across 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gaps {
    /// Index of the last term that stays below 1.
    pub n: i64,
    pub delta1: f64,
    pub delta2: f64,
}

pub fn gaps_from(alpha: &Alpha, start: f64, action: f64) -> Gaps {
    let a = alpha.value_dd();
    let mut s = DoubleDouble::from_f64(start);
    let mut j = 0i64;
    loop {
        let t = a.div_f64(action + j as f64);
        let next = s + t;
        if next > DoubleDouble::ONE {
            return Gaps {
                n: j - 1,
                delta1: (DoubleDouble::ONE - s).to_f64(),
                delta2: (next - DoubleDouble::ONE).to_f64(),
            };
        }
        s = next;
        j += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn within(&self, outer: &Interval) -> bool {
        self.lo >= outer.lo && self.hi <= outer.hi
    }
}

/// Endpoints of the gaining and losing sets at one action level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticIntervals {
    pub i_plus: Interval,
    pub i_minus: Interval,
    pub delta1_0: f64,
    pub delta2_0: f64,
    pub delta1_00: f64,
    pub delta2_00: f64,
    /// Climbing steps from the left end of the fiber.
    pub n_plus: i64,
    /// Action of the preimage of the right end of the fiber.
    pub preimage_action: f64,
}

/// `I₊` from the forward walk out of `φ = 0⁺`; `I₋` from the forward walk of
/// the preimage `(0⁻, I−1)` of the right end `(α/(I−1), I)`.
pub fn analytic_intervals(params: &MapParams, action: f64) -> Result<AnalyticIntervals> {
    params.require_pinball()?;
    let alpha = params.alpha.value();
    if !(action >= i_min(alpha)) {
        return Err(MapError::domain(format!(
            "interval analysis needs action >= {}",
            i_min(alpha)
        )));
    }
    let w = fiber_width(alpha, action);
    let g0 = gaps_from(&params.alpha, 0.0, action);
    let i_plus = if g0.delta2 > g0.delta1 {
        Interval::new(0.0, g0.delta1)
    } else {
        Interval::new(g0.delta1 - g0.delta2, g0.delta1)
    };

    let pre = step_pinball_inverse(
        &params.with_singular_policy(SingularPolicy::TreatAsPlus),
        CylState::new(w, action),
    )?;
    // a preimage just below 0 appears as just below 2 after reduction
    let start = if pre.angle > 1.0 { pre.angle - 2.0 } else { pre.angle };
    let g00 = gaps_from(&params.alpha, start, pre.action);
    let i_minus = if g00.delta1 > g00.delta2 {
        Interval::new(w - g00.delta2, w)
    } else {
        Interval::new(w - g00.delta2, w - (g00.delta2 - g00.delta1))
    };
    Ok(AnalyticIntervals {
        i_plus,
        i_minus,
        delta1_0: g0.delta1,
        delta2_0: g0.delta2,
        delta1_00: g00.delta1,
        delta2_00: g00.delta2,
        n_plus: g0.n,
        preimage_action: pre.action,
    })
}

/// Analytic versus brute-force decomposition of one fiber.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalReport {
    pub i: f64,
    pub alpha: f64,
    pub mu: f64,
    pub width: f64,
    pub grid: u64,
    pub cell: f64,
    pub i_plus: Interval,
    pub i_minus: Interval,
    pub i_zero_components: Vec<Interval>,
    pub delta1_0: f64,
    pub delta2_0: f64,
    pub delta1_00: f64,
    pub delta2_00: f64,
    pub bruteforce_grid: u64,
    pub bruteforce_i_plus: Option<Interval>,
    pub bruteforce_i_minus: Option<Interval>,
    pub bruteforce_zero_components: Vec<Interval>,
    pub plus_components: usize,
    pub minus_components: usize,
    pub plus_cells: u64,
    pub zero_cells: u64,
    pub minus_cells: u64,
    /// Cells that differ from both neighbours.
    pub edge_band_cells: Vec<u64>,
    /// Cells whose return failed (singular landing or budget).
    pub failed_cells: u64,
    pub leftmost_class: Option<ReturnClass>,
    pub plus_endpoint_error_cells: f64,
    pub minus_endpoint_error_cells: f64,
    /// `(|I₊| − |I₋|)/cell` from the scan.
    pub bruteforce_measure_gap_cells: f64,
    pub analytic_measure_gap_cells: f64,
    pub plus_contained: bool,
    pub minus_contained: bool,
    pub analytic_mismatch: bool,
}

impl IntervalReport {
    pub fn max_endpoint_error_cells(&self) -> f64 {
        self.plus_endpoint_error_cells.max(self.minus_endpoint_error_cells)
    }
}

/// Scans `grid` cell midpoints of the fiber at action `I` and compares the
/// classes with the analytic endpoints.
pub fn classify_fiber(params: &MapParams, action: f64, grid: u64) -> Result<IntervalReport> {
    let mapper = ReturnMapper::new(params)?;
    let an = analytic_intervals(params, action)?;
    if grid == 0 {
        return Err(MapError::invalid("grid must be positive"));
    }
    let alpha = mapper.alpha();
    let mu = mapper.mu();
    let w = mapper.width(action);
    let cell = w / grid as f64;
    let classes: Vec<Option<ReturnClass>> = (0..grid)
        .into_par_iter()
        .map(|k| mapper.classify(CylState::new((k as f64 + 0.5) * cell, action)))
        .collect();
    let scan = summarize_scan(&classes, cell);

    let err = |a: &Interval, b: &Option<Interval>| match b {
        Some(b) => ((a.lo - b.lo).abs().max((a.hi - b.hi).abs())) / cell,
        None => f64::INFINITY,
    };
    let plus_err = err(&an.i_plus, &scan.plus);
    let minus_err = err(&an.i_minus, &scan.minus);
    let plus_region = Interval::new(0.0, w / mu);
    let minus_region = Interval::new(w * (1.0 - 1.0 / mu), w);
    let plus_contained = an.i_plus.within(&plus_region) && scan.plus.is_none_or(|b| b.within(&plus_region));
    let minus_contained = an.i_minus.within(&minus_region) && scan.minus.is_none_or(|b| b.within(&minus_region));

    let mut zero = Vec::new();
    let (p, m) = (an.i_plus, an.i_minus);
    for piece in [
        Interval::new(0.0, p.lo),
        Interval::new(p.hi, m.lo),
        Interval::new(m.hi, w),
    ] {
        if !piece.is_empty() {
            zero.push(piece);
        }
    }
    let bf_len = |x: &Option<Interval>| x.map_or(0.0, |i| i.len());
    Ok(IntervalReport {
        i: action,
        alpha,
        mu,
        width: w,
        grid,
        cell,
        i_plus: an.i_plus,
        i_minus: an.i_minus,
        i_zero_components: zero,
        delta1_0: an.delta1_0,
        delta2_0: an.delta2_0,
        delta1_00: an.delta1_00,
        delta2_00: an.delta2_00,
        bruteforce_grid: grid,
        bruteforce_i_plus: scan.plus,
        bruteforce_i_minus: scan.minus,
        bruteforce_zero_components: scan.zero_runs,
        plus_components: scan.plus_components,
        minus_components: scan.minus_components,
        plus_cells: scan.counts[0],
        zero_cells: scan.counts[1],
        minus_cells: scan.counts[2],
        edge_band_cells: scan.band,
        failed_cells: scan.failed,
        leftmost_class: classes.first().copied().flatten(),
        plus_endpoint_error_cells: plus_err,
        minus_endpoint_error_cells: minus_err,
        bruteforce_measure_gap_cells: (bf_len(&scan.plus) - bf_len(&scan.minus)) / cell,
        analytic_measure_gap_cells: (an.i_plus.len() - an.i_minus.len()) / cell,
        plus_contained,
        minus_contained,
        analytic_mismatch: plus_err > 2.0 || minus_err > 2.0,
    })
}

struct ScanSummary {
    plus: Option<Interval>,
    minus: Option<Interval>,
    zero_runs: Vec<Interval>,
    plus_components: usize,
    minus_components: usize,
    counts: [u64; 3],
    band: Vec<u64>,
    failed: u64,
}

fn summarize_scan(classes: &[Option<ReturnClass>], cell: f64) -> ScanSummary {
    let len = classes.len();
    let mut band = Vec::new();
    for k in 1..len.saturating_sub(1) {
        if classes[k] != classes[k - 1] && classes[k] != classes[k + 1] {
            band.push(k as u64);
        }
    }
    let mut counts = [0u64; 3];
    let mut failed = 0;
    // runs over the cells outside the edge band
    let mut runs: Vec<(ReturnClass, usize, usize)> = Vec::new();
    let mut bi = 0;
    for (k, c) in classes.iter().enumerate() {
        let Some(c) = c else {
            failed += 1;
            continue;
        };
        counts[match c {
            ReturnClass::Plus => 0,
            ReturnClass::Zero => 1,
            ReturnClass::Minus => 2,
        }] += 1;
        while bi < band.len() && (band[bi] as usize) < k {
            bi += 1;
        }
        if bi < band.len() && band[bi] as usize == k {
            continue;
        }
        match runs.last_mut() {
            Some((rc, _, end)) if rc == c => *end = k,
            _ => runs.push((*c, k, k)),
        }
    }
    let span = |class: ReturnClass| {
        let mut it = runs.iter().filter(|r| r.0 == class);
        let first = it.next()?;
        let last = runs.iter().rev().find(|r| r.0 == class).unwrap_or(first);
        Some(Interval::new(first.1 as f64 * cell, (last.2 + 1) as f64 * cell))
    };
    let components = |class: ReturnClass| runs.iter().filter(|r| r.0 == class).count();
    ScanSummary {
        plus: span(ReturnClass::Plus),
        minus: span(ReturnClass::Minus),
        zero_runs: runs
            .iter()
            .filter(|r| r.0 == ReturnClass::Zero)
            .map(|r| Interval::new(r.1 as f64 * cell, (r.2 + 1) as f64 * cell))
            .collect(),
        plus_components: components(ReturnClass::Plus),
        minus_components: components(ReturnClass::Minus),
        counts,
        band,
        failed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityReport {
    /// All samples share one climbing-step count.
    pub holds: bool,
    pub common_up_steps: Option<u64>,
    pub samples: u64,
    /// Samples whose return actually gained.
    pub plus_samples: u64,
}

/// Samples the analytic `I₊` and checks that every return there climbs the
/// same number of steps.
pub fn rigidity_check(params: &MapParams, action: f64, samples: u64) -> Result<RigidityReport> {
    let mapper = ReturnMapper::new(params)?;
    let an = analytic_intervals(params, action)?;
    let ip = an.i_plus;
    let events: Vec<ReturnEvent> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let phi = ip.lo + (k as f64 + 0.5) / samples as f64 * ip.len();
            mapper.first_return(CylState::new(phi, action))
        })
        .collect::<Result<_>>()?;
    let common = events.first().map(|e| e.up_steps);
    let holds = events.iter().all(|e| Some(e.up_steps) == common);
    Ok(RigidityReport {
        holds,
        common_up_steps: if holds { common } else { None },
        samples,
        plus_samples: events.iter().filter(|e| e.classification == ReturnClass::Plus).count() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln2() -> MapParams {
        MapParams::pinball(Alpha::inverse_log(2))
    }

    /// Plain step-by-step orbit, counting landings below 1 until the angle
    /// wraps past 2.
    fn raw_excursion(alpha: f64, phi: f64, i: f64) -> (u64, u64, f64, f64) {
        let (mut a, mut j, mut up, mut down) = (phi, i, 0u64, 0u64);
        loop {
            a += alpha / j;
            if a >= 2.0 {
                return (up, down, a - 2.0, j + 1.0);
            }
            if a < 1.0 {
                up += 1;
                j += 1.0;
            } else {
                down += 1;
                j -= 1.0;
            }
        }
    }

    #[test]
    fn fundamental_domain_membership() {
        let p = MapParams::pinball(1.0);
        assert!(in_fundamental_domain(&p, CylState::new(0.005, 101.0)).unwrap());
        assert!(!in_fundamental_domain(&p, CylState::new(0.02, 101.0)).unwrap());
        assert!(matches!(
            in_fundamental_domain(&p, CylState::new(0.005, 1.0)),
            Err(MapError::Domain(_))
        ));
    }

    #[test]
    fn rescale_examples() {
        let p = MapParams::pinball(1.3);
        let mid = 1.3 / (2.0 * 40.0);
        assert!((rescale(&p, CylState::new(mid, 41.0)).unwrap() - 0.5).abs() < 1e-15);
        assert!(rescale(&p, CylState::new(1e-300, 41.0)).unwrap() < 1e-290);
        let q = ln2();
        let a = q.alpha.value();
        let t = rescale(&q, CylState::new(a / (8.0 * 999.0), 1000.0)).unwrap();
        assert!((t - 0.125).abs() < 1e-15);
        assert!(rescale(&q, CylState::new(0.5, 1000.0)).is_err());
    }

    #[test]
    fn i_min_values() {
        assert_eq!(i_min(0.5), 3.0);
        assert_eq!(i_min(1.0), 4.0);
        assert_eq!(i_min(1.0 / 2f64.ln()), 5.0);
        assert_eq!(i_min(0.1), 3.0);
    }

    #[test]
    fn near_zero_seed_matches_raw_orbit() {
        let p = ln2();
        let alpha = p.alpha.value();
        let e = first_return(&p, CylState::new(1e-6, 101.0)).unwrap();
        let (up, down, phi_out, i_out) = raw_excursion(alpha, 1e-6, 101.0);
        assert_eq!(e.up_steps, up);
        assert_eq!(e.down_steps, down);
        assert_eq!(e.up_steps, 100);
        assert_eq!(e.n, 99);
        assert_eq!(e.i_out, i_out);
        assert!((e.phi_out - phi_out).abs() < 1e-12);
        assert!(e.delta_i.abs() <= 1);
        assert_eq!(e.total_steps, up + down + 1);
        assert_eq!(e.delta_i, e.n - e.n_prime);
    }

    #[test]
    fn return_event_identities() {
        let p = ln2();
        let alpha = p.alpha.value();
        let w = alpha / 100.0;
        for k in 0..200 {
            let phi = (k as f64 + 0.5) * w / 200.0;
            let e = first_return(&p, CylState::new(phi, 101.0)).unwrap();
            let gap = alpha / (101.0 + e.n as f64 + 1.0);
            assert!(((e.delta1 + e.delta2) - gap).abs() <= 1e-10 * gap);
            assert!(e.phi_out > 0.0 && e.phi_out < alpha / (e.i_out - 1.0));
            assert_eq!(e.delta_i, e.n - e.n_prime);
            let expected = match e.classification {
                ReturnClass::Plus => 0.0,
                ReturnClass::Zero => 1.0 / 100.0,
                ReturnClass::Minus => 1.0 / 100.0 + 1.0 / 99.0,
            };
            assert!((e.delta_s - expected).abs() <= 1e-10 / 101.0, "{e:?}");
            assert_eq!(e.crossing_margin > 0.0, e.classification == ReturnClass::Plus);
        }
    }

    #[test]
    fn first_return_preconditions() {
        let p = ln2();
        assert!(matches!(
            first_return(&p, CylState::new(0.5, 101.0)),
            Err(MapError::Domain(_))
        ));
        assert!(matches!(
            first_return(&p, CylState::new(0.1, 4.0)),
            Err(MapError::Domain(_))
        ));
        assert!(first_return(&MapParams::erdos_kesten(0.5), CylState::new(0.1, 10.0)).is_err());
    }

    #[test]
    fn gaps_sum_to_last_term() {
        let a = Alpha::inverse_log(2);
        let g = gaps_from(&a, 0.0, 101.0);
        let t = a.value() / (101.0 + g.n as f64 + 1.0);
        assert!((g.delta1 + g.delta2 - t).abs() < 1e-15);
        assert!(g.delta1 > 0.0 && g.delta2 > 0.0);
    }

    #[test]
    fn analytic_intervals_lie_in_their_regions() {
        let p = ln2();
        let an = analytic_intervals(&p, 101.0).unwrap();
        let w = p.alpha.value() / 100.0;
        assert!(an.i_plus.lo >= 0.0 && an.i_plus.hi <= w / 2.0);
        assert!(an.i_minus.lo >= w / 2.0 && an.i_minus.hi <= w);
        assert_eq!(an.preimage_action, 100.0);
    }

    #[test]
    fn classify_small_fiber() {
        let r = classify_fiber(&ln2(), 101.0, 2000).unwrap();
        assert_eq!(r.failed_cells, 0);
        assert_eq!(r.plus_components, 1);
        assert_eq!(r.minus_components, 1);
        assert!(r.max_endpoint_error_cells() <= 2.0, "{r:?}");
        assert!(r.plus_contained && r.minus_contained);
        assert_ne!(r.leftmost_class, Some(ReturnClass::Minus));
        assert_eq!(r.plus_cells + r.zero_cells + r.minus_cells, 2000);
    }

    #[test]
    fn scan_summary_edge_band() {
        use ReturnClass::*;
        let c = [
            Some(Plus),
            Some(Plus),
            Some(Zero),
            Some(Plus),
            Some(Zero),
            Some(Zero),
            Some(Minus),
            Some(Minus),
        ];
        let s = summarize_scan(&c, 1.0);
        assert_eq!(s.band, vec![2, 3]);
        assert_eq!(s.plus, Some(Interval::new(0.0, 2.0)));
        assert_eq!(s.minus, Some(Interval::new(6.0, 8.0)));
        assert_eq!(s.plus_components, 1);
        assert_eq!(s.counts, [3, 3, 2]);
    }

    #[test]
    fn rigidity_examples() {
        let r = rigidity_check(&ln2(), 101.0, 100).unwrap();
        assert!(r.holds);
        assert_eq!(r.common_up_steps, Some(100));
        let r = rigidity_check(&MapParams::pinball(Alpha::inverse_log_ratio(5, 2)), 500.0, 100).unwrap();
        assert!(r.holds);
        let r = rigidity_check(&ln2(), 101.0, 0).unwrap();
        assert!(r.holds);
    }
}
