//! The αz family of discontinuous twist maps on the cylinder, forward and
//! inverse, plus the saw-tooth Fermi–Ulam map.
//!
//! One step sends `(angle, action)` to
//! `angle' = (angle + α·action^z) mod L`, `action' = action ± 1`, where the sign
//! depends on which half of the circle `angle'` lands in. Landings exactly on a
//! discontinuity are detected bitwise and resolved by [`SingularPolicy`].

use std::fmt;

use serde::Serialize;

use crate::alpha::Alpha;
use crate::error::{MapError, Result};
use crate::numeric::{DoubleDouble, NeumaierSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignVariant {
    /// Gain on the upper half `(L/2, L)`, loss on `[0, L/2)`; singular at `L/2`.
    AzHalf,
    /// Gain on `(0, L/2)`, loss on `(L/2, L)`; singular at `0` and `L/2`.
    PinballProofs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SingularPolicy {
    Halt,
    TreatAsPlus,
    TreatAsMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NumericPolicy {
    Double,
    /// Neumaier accumulation of angle increments between reductions.
    CompensatedDouble,
    DoubleDouble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MapFamily {
    AlphaZ,
    SawtoothFermiUlam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapParams {
    pub alpha: Alpha,
    pub z: f64,
    pub circle_len: f64,
    pub sign_variant: SignVariant,
    pub singular_policy: SingularPolicy,
    pub numeric_policy: NumericPolicy,
    pub family: MapFamily,
}

impl MapParams {
    /// A generic αz map with the half-circle sign rule.
    pub fn alpha_z(alpha: impl Into<Alpha>, z: f64, circle_len: f64) -> Self {
        MapParams {
            alpha: alpha.into(),
            z,
            circle_len,
            sign_variant: SignVariant::AzHalf,
            singular_policy: SingularPolicy::Halt,
            numeric_policy: NumericPolicy::Double,
            family: MapFamily::AlphaZ,
        }
    }

    /// z = −1 on the circle of length 2, gain while the angle stays in (0, 1).
    pub fn pinball(alpha: impl Into<Alpha>) -> Self {
        MapParams {
            sign_variant: SignVariant::PinballProofs,
            numeric_policy: NumericPolicy::CompensatedDouble,
            ..Self::alpha_z(alpha, -1.0, 2.0)
        }
    }

    /// z = 0: rotation by α with ±1 jumps.
    pub fn erdos_kesten(alpha: impl Into<Alpha>) -> Self {
        Self::alpha_z(alpha, 0.0, 1.0)
    }

    /// z = 1/2 on the circle of length 2.
    pub fn switching_potential(alpha: impl Into<Alpha>) -> Self {
        Self::alpha_z(alpha, 0.5, 2.0)
    }

    pub fn sawtooth_fermi_ulam() -> Self {
        MapParams {
            family: MapFamily::SawtoothFermiUlam,
            ..Self::alpha_z(1.0, 1.0, 1.0)
        }
    }

    pub fn with_policy(mut self, policy: NumericPolicy) -> Self {
        self.numeric_policy = policy;
        self
    }

    pub fn with_singular_policy(mut self, policy: SingularPolicy) -> Self {
        self.singular_policy = policy;
        self
    }

    pub fn with_sign_variant(mut self, variant: SignVariant) -> Self {
        self.sign_variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha.validate()?;
        if self.circle_len != 1.0 && self.circle_len != 2.0 {
            return Err(MapError::invalid(format!(
                "circle length must be 1 or 2, got {}",
                self.circle_len
            )));
        }
        if !self.z.is_finite() {
            return Err(MapError::invalid("z must be finite"));
        }
        if self.family == MapFamily::SawtoothFermiUlam && self.circle_len != 1.0 {
            return Err(MapError::invalid("the saw-tooth map lives on the unit circle"));
        }
        Ok(())
    }

    pub fn is_pinball(&self) -> bool {
        self.family == MapFamily::AlphaZ && self.z == -1.0 && self.circle_len == 2.0
    }

    pub(crate) fn require_pinball(&self) -> Result<()> {
        self.validate()?;
        if !self.is_pinball() {
            return Err(MapError::invalid("pinball operations need z = -1 and circle length 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylState {
    pub angle: f64,
    pub action: f64,
}

impl CylState {
    pub const fn new(angle: f64, action: f64) -> Self {
        CylState { angle, action }
    }
}

impl fmt::Display for CylState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.angle, self.action)
    }
}

/// A constant carried in both binary64 and double-double form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coef {
    pub f: f64,
    pub dd: DoubleDouble,
}

impl Coef {
    pub const ONE: Coef = Coef {
        f: 1.0,
        dd: DoubleDouble::ONE,
    };

    pub fn of_alpha(alpha: &Alpha) -> Self {
        let dd = alpha.value_dd();
        Coef { f: dd.to_f64(), dd }
    }
}

/// How `action^z` enters the angle increment `c·action^z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Increment {
    /// `c / d`
    Div(f64),
    /// `c · m`
    Mul(f64),
    /// `c`
    Unit,
}

/// Storage for an angle (or any running sum) under a numeric policy.
pub trait AngleAccumulator: Copy + Send + Sync + fmt::Debug {
    const POLICY: NumericPolicy;
    fn from_f64(x: f64) -> Self;
    fn add_f64(&mut self, x: f64);
    fn add_inc(&mut self, c: &Coef, inc: Increment);
    fn to_dd(&self) -> DoubleDouble;
    fn to_f64(&self) -> f64;

    /// The value rounded to binary64 and kept below `l`.
    #[inline]
    fn angle_f64(&self, l: f64) -> f64 {
        let x = self.to_f64();
        if x >= l {
            below(l)
        } else {
            x
        }
    }

    /// Brings the value into `[0, l)`.
    fn reduce(&mut self, l: f64) {
        let v = self.to_dd();
        if v.hi >= 0.0 && v < DoubleDouble::from_f64(l) {
            return;
        }
        let k = v.div_f64(l).floor().to_f64();
        self.add_f64(-k * l);
        let v = self.to_dd();
        if v.hi < 0.0 {
            self.add_f64(l);
        }
        if self.to_dd() >= DoubleDouble::from_f64(l) {
            *self = Self::from_f64(below(l));
        } else if self.to_dd().hi < 0.0 {
            *self = Self::from_f64(0.0);
        }
    }
}

impl AngleAccumulator for f64 {
    const POLICY: NumericPolicy = NumericPolicy::Double;
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn add_f64(&mut self, x: f64) {
        *self += x;
    }
    #[inline]
    fn add_inc(&mut self, c: &Coef, inc: Increment) {
        *self += inc.apply_f64(c.f);
    }
    #[inline]
    fn to_dd(&self) -> DoubleDouble {
        DoubleDouble::from_f64(*self)
    }
    #[inline]
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl AngleAccumulator for NeumaierSum {
    const POLICY: NumericPolicy = NumericPolicy::CompensatedDouble;
    #[inline]
    fn from_f64(x: f64) -> Self {
        NeumaierSum::from_value(x)
    }
    #[inline]
    fn add_f64(&mut self, x: f64) {
        self.add(x);
    }
    #[inline]
    fn add_inc(&mut self, c: &Coef, inc: Increment) {
        self.add(inc.apply_f64(c.f));
    }
    #[inline]
    fn to_dd(&self) -> DoubleDouble {
        NeumaierSum::to_dd(*self)
    }
    #[inline]
    fn to_f64(&self) -> f64 {
        self.value()
    }
}

impl AngleAccumulator for DoubleDouble {
    const POLICY: NumericPolicy = NumericPolicy::DoubleDouble;
    #[inline]
    fn from_f64(x: f64) -> Self {
        DoubleDouble::from_f64(x)
    }
    #[inline]
    fn add_f64(&mut self, x: f64) {
        *self = DoubleDouble::add_f64(*self, x);
    }
    #[inline]
    fn add_inc(&mut self, c: &Coef, inc: Increment) {
        let t = match inc {
            Increment::Div(d) => c.dd.div_f64(d),
            Increment::Mul(m) => c.dd.mul_f64(m),
            Increment::Unit => c.dd,
        };
        *self += t;
    }
    #[inline]
    fn to_dd(&self) -> DoubleDouble {
        *self
    }
    #[inline]
    fn to_f64(&self) -> f64 {
        DoubleDouble::to_f64(*self)
    }
}

impl Increment {
    #[inline]
    fn apply_f64(self, c: f64) -> f64 {
        match self {
            Increment::Div(d) => c / d,
            Increment::Mul(m) => c * m,
            Increment::Unit => c,
        }
    }
}

/// Largest double strictly below a positive `x`.
#[inline]
pub(crate) fn below(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    f64::from_bits(x.to_bits() - 1)
}

/// `x mod l` in `[0, l)`, bit-reliable at the upper end.
pub fn reduce_angle(x: f64, l: f64) -> f64 {
    let mut r = x - l * (x / l).floor();
    if r < 0.0 {
        r += l;
    }
    if r >= l {
        r = below(l);
    }
    r
}

/// Decomposes `action^z`. Integer exponents use repeated multiplication,
/// fractional ones `exp(z ln action)` for positive actions only.
pub(crate) fn increment(z: f64, action: f64) -> Result<Increment> {
    if z == -1.0 {
        if action == 0.0 {
            return Err(MapError::domain("action 0 with negative exponent"));
        }
        return Ok(Increment::Div(action));
    }
    if z == 0.0 {
        return Ok(Increment::Unit);
    }
    if z.fract() == 0.0 && z.abs() <= 64.0 {
        let k = z.abs() as u32;
        let mut p = 1.0;
        for _ in 0..k {
            p *= action;
        }
        if z < 0.0 {
            if action == 0.0 {
                return Err(MapError::domain("action 0 with negative exponent"));
            }
            return Ok(Increment::Div(p));
        }
        return Ok(Increment::Mul(p));
    }
    if !(action > 0.0) {
        return Err(MapError::domain(format!("action^{z} undefined for action {action}")));
    }
    Ok(Increment::Mul((z * action.ln()).exp()))
}

/// +1, −1, or `None` on the singular set.
#[inline]
fn landing_sign(variant: SignVariant, l: f64, angle: DoubleDouble) -> Option<f64> {
    let half = DoubleDouble::from_f64(0.5 * l);
    match variant {
        SignVariant::AzHalf => {
            if angle > half {
                Some(1.0)
            } else if angle < half {
                Some(-1.0)
            } else {
                None
            }
        }
        SignVariant::PinballProofs => {
            if angle == DoubleDouble::ZERO || angle == half {
                None
            } else if angle < half {
                Some(1.0)
            } else {
                Some(-1.0)
            }
        }
    }
}

fn resolve(policy: SingularPolicy, sign: Option<f64>, angle: f64) -> Result<(f64, bool)> {
    match (sign, policy) {
        (Some(s), _) => Ok((s, false)),
        (None, SingularPolicy::Halt) => Err(MapError::SingularHit { step: 1, angle }),
        (None, SingularPolicy::TreatAsPlus) => Ok((1.0, true)),
        (None, SingularPolicy::TreatAsMinus) => Ok((-1.0, true)),
    }
}

/// One αz step on an accumulator. Returns whether a singular landing was
/// resolved by policy.
#[inline]
pub fn step_with<A: AngleAccumulator>(params: &MapParams, c: &Coef, angle: &mut A, action: &mut f64) -> Result<bool> {
    let inc = increment(params.z, *action)?;
    let mut a = *angle;
    a.add_inc(c, inc);
    a.reduce(params.circle_len);
    let sign = landing_sign(params.sign_variant, params.circle_len, a.to_dd());
    let (s, singular) = resolve(params.singular_policy, sign, a.angle_f64(params.circle_len))?;
    *angle = a;
    *action += s;
    Ok(singular)
}

/// Forward αz step.
pub fn step_az(params: &MapParams, s: CylState) -> Result<CylState> {
    params.validate()?;
    if params.family != MapFamily::AlphaZ {
        return Err(MapError::invalid("step_az needs the alpha-z family"));
    }
    let c = Coef::of_alpha(&params.alpha);
    let mut angle = reduce_angle(s.angle, params.circle_len);
    let mut action = s.action;
    step_with(params, &c, &mut angle, &mut action)?;
    Ok(CylState::new(angle, action))
}

/// Preimage under the αz map: the action jump is read off the current angle,
/// then the increment at the previous action is undone.
pub fn step_az_inverse(params: &MapParams, s: CylState) -> Result<CylState> {
    params.validate()?;
    if params.family != MapFamily::AlphaZ {
        return Err(MapError::invalid("step_az_inverse needs the alpha-z family"));
    }
    let angle = reduce_angle(s.angle, params.circle_len);
    let sign = landing_sign(params.sign_variant, params.circle_len, DoubleDouble::from_f64(angle));
    let (sgn, _) = resolve(params.singular_policy, sign, angle)?;
    let prev_action = s.action - sgn;
    let inc = increment(params.z, prev_action)?;
    let c = Coef::of_alpha(&params.alpha);
    let prev_angle = reduce_angle(angle - inc.apply_f64(c.f), params.circle_len);
    Ok(CylState::new(prev_angle, prev_action))
}

fn check_pinball_action(action: f64) -> Result<()> {
    if !(action > 0.0) {
        return Err(MapError::domain(format!(
            "pinball action must be positive, got {action}"
        )));
    }
    Ok(())
}

/// Forward pinball step (z = −1, circle of length 2).
pub fn step_pinball(params: &MapParams, s: CylState) -> Result<CylState> {
    params.require_pinball()?;
    check_pinball_action(s.action)?;
    let next = step_az(params, s)?;
    check_pinball_action(next.action)?;
    Ok(next)
}

/// Unique pinball preimage; `step_pinball(step_pinball_inverse(s)) == s` up to rounding.
pub fn step_pinball_inverse(params: &MapParams, s: CylState) -> Result<CylState> {
    params.require_pinball()?;
    check_pinball_action(s.action)?;
    let prev = step_az_inverse(params, s)?;
    check_pinball_action(prev.action)?;
    Ok(prev)
}

/// Saw-tooth Fermi–Ulam map: `angle` plays y, `action` plays y′.
pub fn step_sawtooth_fu(params: &MapParams, s: CylState) -> Result<CylState> {
    params.validate()?;
    if params.circle_len != 1.0 {
        return Err(MapError::invalid("the saw-tooth map lives on the unit circle"));
    }
    Ok(sawtooth_raw(params.singular_policy, s)?.0)
}

fn sawtooth_raw(policy: SingularPolicy, s: CylState) -> Result<(CylState, bool)> {
    let y2 = reduce_angle(s.angle + s.action, 1.0);
    let sign = if y2 > 0.5 {
        Some(1.0)
    } else if y2 < 0.5 {
        Some(-1.0)
    } else {
        None
    };
    let (sgn, singular) = resolve(policy, sign, y2)?;
    Ok((CylState::new(y2, s.action + sgn * y2), singular))
}

/// A (possibly decimated) orbit segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitTrace {
    pub params: MapParams,
    pub initial: CylState,
    /// States after steps `d, 2d, 3d, …` for decimation `d`.
    pub states: Vec<CylState>,
    pub decimation: u64,
    /// Steps actually performed.
    pub step_count: u64,
    /// 1-based indices of steps that landed on the singular set.
    pub singular_hits: Vec<u64>,
    pub action_min: f64,
    pub action_max: f64,
    pub final_state: CylState,
    /// Why the run ended early, if it did.
    #[serde(skip)]
    pub stopped: Option<MapError>,
}

impl OrbitTrace {
    pub fn completed(&self) -> bool {
        self.stopped.is_none()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.stopped.clone() {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Applies the map `n_steps` times, keeping every `decimation`-th state.
///
/// Errors in the parameters are returned directly; errors along the orbit end
/// the run and are stored in [`OrbitTrace::stopped`] with the partial trace.
pub fn iterate(params: &MapParams, s0: CylState, n_steps: u64, decimation: u64) -> Result<OrbitTrace> {
    params.validate()?;
    if decimation == 0 {
        return Err(MapError::invalid("decimation must be at least 1"));
    }
    if params.is_pinball() {
        check_pinball_action(s0.action)?;
    }
    let trace = match params.family {
        MapFamily::SawtoothFermiUlam => iterate_sawtooth(params, s0, n_steps, decimation),
        MapFamily::AlphaZ => match params.numeric_policy {
            NumericPolicy::Double => iterate_with::<f64>(params, s0, n_steps, decimation),
            NumericPolicy::CompensatedDouble => iterate_with::<NeumaierSum>(params, s0, n_steps, decimation),
            NumericPolicy::DoubleDouble => iterate_with::<DoubleDouble>(params, s0, n_steps, decimation),
        },
    };
    Ok(trace)
}

struct TraceBuilder {
    trace: OrbitTrace,
}

impl TraceBuilder {
    fn new(params: &MapParams, s0: CylState, n_steps: u64, decimation: u64) -> Self {
        let cap = (n_steps / decimation).min(1 << 22) as usize;
        TraceBuilder {
            trace: OrbitTrace {
                params: *params,
                initial: s0,
                states: Vec::with_capacity(cap),
                decimation,
                step_count: 0,
                singular_hits: Vec::new(),
                action_min: s0.action,
                action_max: s0.action,
                final_state: s0,
                stopped: None,
            },
        }
    }

    #[inline]
    fn record(&mut self, k: u64, s: CylState, singular: bool) {
        let t = &mut self.trace;
        t.step_count = k;
        t.final_state = s;
        if singular {
            t.singular_hits.push(k);
        }
        if s.action < t.action_min {
            t.action_min = s.action;
        }
        if s.action > t.action_max {
            t.action_max = s.action;
        }
        if k % t.decimation == 0 {
            t.states.push(s);
        }
    }

    fn stop(mut self, k: u64, e: MapError) -> OrbitTrace {
        self.trace.stopped = Some(e.at_step(k));
        self.trace
    }
}

fn iterate_with<A: AngleAccumulator>(params: &MapParams, s0: CylState, n_steps: u64, decimation: u64) -> OrbitTrace {
    let c = Coef::of_alpha(&params.alpha);
    let mut b = TraceBuilder::new(params, s0, n_steps, decimation);
    let mut angle = A::from_f64(s0.angle);
    angle.reduce(params.circle_len);
    let mut action = s0.action;
    let pinball = params.is_pinball();
    for k in 1..=n_steps {
        match step_with(params, &c, &mut angle, &mut action) {
            Ok(singular) => {
                let s = CylState::new(angle.angle_f64(params.circle_len), action);
                b.record(k, s, singular);
                if pinball && !(action > 0.0) {
                    return b.stop(k, MapError::domain("pinball action reached zero"));
                }
            }
            Err(e) => return b.stop(k, e),
        }
    }
    b.trace
}

fn iterate_sawtooth(params: &MapParams, s0: CylState, n_steps: u64, decimation: u64) -> OrbitTrace {
    let mut b = TraceBuilder::new(params, s0, n_steps, decimation);
    let mut s = s0;
    for k in 1..=n_steps {
        match sawtooth_raw(params.singular_policy, s) {
            Ok((next, singular)) => {
                s = next;
                b.record(k, s, singular);
            }
            Err(e) => return b.stop(k, e),
        }
    }
    b.trace
}

/// Outcome of following an orbit until its action passes a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClimbOutcome {
    /// Step at which the action first exceeded the target.
    pub reached_at: Option<u64>,
    /// First step that lowered the action.
    pub first_loss: Option<u64>,
}

impl ClimbOutcome {
    /// Every step from the start gained action until the target was passed.
    pub fn monotone(&self) -> bool {
        self.reached_at.is_some() && self.first_loss.is_none()
    }
}

/// Follows an αz orbit until the action exceeds `target` or `max_steps` run
/// out. With `stop_at_loss` the run ends at the first losing step.
pub fn climb(
    params: &MapParams,
    s0: CylState,
    target: f64,
    max_steps: u64,
    stop_at_loss: bool,
) -> Result<ClimbOutcome> {
    params.validate()?;
    let c = Coef::of_alpha(&params.alpha);
    let mut angle = reduce_angle(s0.angle, params.circle_len);
    let mut action = s0.action;
    let mut out = ClimbOutcome {
        reached_at: None,
        first_loss: None,
    };
    for k in 1..=max_steps {
        let before = action;
        step_with(params, &c, &mut angle, &mut action).map_err(|e| e.at_step(k))?;
        if action < before && out.first_loss.is_none() {
            out.first_loss = Some(k);
            if stop_at_loss {
                return Ok(out);
            }
        }
        if action > target {
            out.reached_at = Some(k);
            return Ok(out);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn az_linear_twist_example() {
        let p = MapParams::alpha_z(0.1, 1.0, 1.0);
        let s = step_az(&p, CylState::new(0.25, 2.0)).unwrap();
        assert!(close(s.angle, 0.45));
        assert_eq!(s.action, 1.0);
    }

    #[test]
    fn zero_twist_half_rotation_has_period_two() {
        let p = MapParams::erdos_kesten(0.5);
        let s1 = step_az(&p, CylState::new(0.2, 0.0)).unwrap();
        assert!(close(s1.angle, 0.7));
        assert_eq!(s1.action, 1.0);
        let s2 = step_az(&p, s1).unwrap();
        assert!(close(s2.angle, 0.2));
        assert_eq!(s2.action, 0.0);
    }

    #[test]
    fn exact_landing_on_half_is_singular() {
        let p = MapParams::alpha_z(2.0, 1.0, 1.0);
        let err = step_az(&p, CylState::new(0.5, 0.5)).unwrap_err();
        assert!(matches!(err, MapError::SingularHit { angle, .. } if angle == 0.5));
        let plus = p.with_singular_policy(SingularPolicy::TreatAsPlus);
        assert_eq!(step_az(&plus, CylState::new(0.5, 0.5)).unwrap().action, 1.5);
        let minus = p.with_singular_policy(SingularPolicy::TreatAsMinus);
        assert_eq!(step_az(&minus, CylState::new(0.5, 0.5)).unwrap().action, -0.5);
    }

    #[test]
    fn domain_errors_for_undefined_powers() {
        let frac = MapParams::alpha_z(1.0, 0.5, 1.0);
        assert!(matches!(
            step_az(&frac, CylState::new(0.1, -2.0)),
            Err(MapError::Domain(_))
        ));
        assert!(matches!(
            step_az(&frac, CylState::new(0.1, 0.0)),
            Err(MapError::Domain(_))
        ));
        let neg = MapParams::alpha_z(1.0, -2.0, 1.0);
        assert!(matches!(
            step_az(&neg, CylState::new(0.1, 0.0)),
            Err(MapError::Domain(_))
        ));
        // negative integer exponents accept negative actions
        assert!(step_az(&neg, CylState::new(0.1, -3.0)).is_ok());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(step_az(&MapParams::alpha_z(1.0, 1.0, 3.0), CylState::new(0.1, 1.0)).is_err());
        assert!(step_az(&MapParams::alpha_z(-1.0, 1.0, 1.0), CylState::new(0.1, 1.0)).is_err());
        let not_pinball = MapParams::alpha_z(1.0, -1.0, 1.0);
        assert!(matches!(
            step_pinball(&not_pinball, CylState::new(0.1, 5.0)),
            Err(MapError::InvalidParams(_))
        ));
    }

    #[test]
    fn pinball_examples() {
        let p = MapParams::pinball(1.0);
        let s = step_pinball(&p, CylState::new(0.5, 10.0)).unwrap();
        assert!(close(s.angle, 0.6));
        assert_eq!(s.action, 11.0);

        let s = step_pinball(&p, CylState::new(1.9, 5.0)).unwrap();
        assert!(close(s.angle, 0.1));
        assert_eq!(s.action, 6.0);

        let p2 = MapParams::pinball(2.0);
        assert!(matches!(
            step_pinball(&p2, CylState::new(1.5, 4.0)),
            Err(MapError::SingularHit { angle, .. }) if angle == 0.0
        ));
    }

    #[test]
    fn pinball_landing_on_one_is_singular() {
        let p = MapParams::pinball(2.0);
        assert!(matches!(
            step_pinball(&p, CylState::new(0.5, 4.0)),
            Err(MapError::SingularHit { .. })
        ));
    }

    #[test]
    fn half_circle_variant_reverses_the_halves() {
        let p = MapParams::pinball(1.0).with_sign_variant(SignVariant::AzHalf);
        assert_eq!(step_pinball(&p, CylState::new(0.5, 10.0)).unwrap().action, 9.0);
        assert_eq!(step_pinball(&p, CylState::new(1.0, 10.0)).unwrap().action, 11.0);
    }

    #[test]
    fn pinball_action_must_stay_positive() {
        let p = MapParams::pinball(1.0);
        assert!(matches!(
            step_pinball(&p, CylState::new(0.5, 0.0)),
            Err(MapError::Domain(_))
        ));
        // lands in (1,2) from action 1, losing to 0
        assert!(matches!(
            step_pinball(&p, CylState::new(0.5, 1.0)),
            Err(MapError::Domain(_))
        ));
    }

    #[test]
    fn pinball_inverse_examples() {
        let p = MapParams::pinball(1.0);
        let s = step_pinball_inverse(&p, CylState::new(0.6, 11.0)).unwrap();
        assert!(close(s.angle, 0.5));
        assert_eq!(s.action, 10.0);
        let s = step_pinball_inverse(&p, CylState::new(0.1, 6.0)).unwrap();
        assert!(close(s.angle, 1.9));
        assert_eq!(s.action, 5.0);
        assert!(matches!(
            step_pinball_inverse(&p, CylState::new(1.0, 6.0)),
            Err(MapError::SingularHit { .. })
        ));
    }

    #[test]
    fn sawtooth_examples() {
        let p = MapParams::sawtooth_fermi_ulam();
        let s = step_sawtooth_fu(&p, CylState::new(0.3, 0.5)).unwrap();
        assert!(close(s.angle, 0.8) && close(s.action, 1.3));
        let s = step_sawtooth_fu(&p, CylState::new(0.3, 0.1)).unwrap();
        assert!(close(s.angle, 0.4) && close(s.action, -0.3));
        assert!(matches!(
            step_sawtooth_fu(&p, CylState::new(0.25, 0.25)),
            Err(MapError::SingularHit { .. })
        ));
    }

    #[test]
    fn reduction_is_closed_open() {
        assert_eq!(reduce_angle(2.0, 2.0), 0.0);
        assert_eq!(reduce_angle(-1e-300, 2.0), below(2.0));
        assert_eq!(reduce_angle(-0.5, 1.0), 0.5);
        assert!(reduce_angle(-1e-17, 1.0) < 1.0);
        let mut dd = DoubleDouble::from_pair(2.0, -1e-25);
        dd.reduce(2.0);
        assert!(dd < DoubleDouble::from_f64(2.0) && dd.hi >= 0.0);
        assert!(dd.angle_f64(2.0) < 2.0);
    }

    #[test]
    fn identity_rotation_descends_every_step() {
        let p = MapParams::erdos_kesten(1.0);
        let t = iterate(&p, CylState::new(0.3, 0.0), 100, 1).unwrap();
        assert_eq!(t.states.len(), 100);
        for (k, s) in t.states.iter().enumerate() {
            assert_eq!(s.action, -((k + 1) as f64));
            assert!(close(s.angle, 0.3));
        }
        assert_eq!(t.action_min, -100.0);
        assert_eq!(t.action_max, 0.0);
    }

    #[test]
    fn zero_steps_returns_initial_only() {
        let s0 = CylState::new(0.01, 50.0);
        let t = iterate(&MapParams::pinball(1.0), s0, 0, 1).unwrap();
        assert_eq!(t.initial, s0);
        assert_eq!(t.final_state, s0);
        assert!(t.states.is_empty());
        assert_eq!(t.step_count, 0);
    }

    #[test]
    fn decimation_keeps_every_dth_state() {
        let t = iterate(&MapParams::pinball(1.0), CylState::new(0.01, 50.0), 1000, 100).unwrap();
        assert_eq!(t.states.len(), 10);
        assert_eq!(t.step_count, 1000);
        assert_eq!(*t.states.last().unwrap(), t.final_state);
        assert!(iterate(&MapParams::pinball(1.0), CylState::new(0.01, 50.0), 10, 0).is_err());
    }

    #[test]
    fn iterate_stops_with_partial_trace() {
        let p = MapParams::pinball(2.0);
        let t = iterate(&p, CylState::new(0.5, 6.0), 10, 1).unwrap();
        assert!(t.completed());
        let t = iterate(&p, CylState::new(1.5, 4.0), 10, 1).unwrap();
        assert_eq!(t.step_count, 0);
        assert!(matches!(t.stopped, Some(MapError::SingularHit { step: 1, .. })));
        let t = iterate(
            &p.with_singular_policy(SingularPolicy::TreatAsPlus),
            CylState::new(1.5, 4.0),
            3,
            1,
        )
        .unwrap();
        assert_eq!(t.singular_hits, vec![1]);
        assert_eq!(t.states[0].action, 5.0);
    }

    #[test]
    fn policies_agree_on_short_orbits() {
        let s0 = CylState::new(0.01, 50.0);
        let mut last = Vec::new();
        for pol in [
            NumericPolicy::Double,
            NumericPolicy::CompensatedDouble,
            NumericPolicy::DoubleDouble,
        ] {
            let t = iterate(&MapParams::pinball(1.0).with_policy(pol), s0, 500, 1).unwrap();
            last.push(t.final_state);
        }
        assert_eq!(last[0].action, last[1].action);
        assert_eq!(last[1].action, last[2].action);
        assert!((last[0].angle - last[2].angle).abs() < 1e-12);
    }

    #[test]
    fn fractional_power_matches_sqrt() {
        let p = MapParams::switching_potential(0.3);
        let s = step_az(&p, CylState::new(0.0, 16.0)).unwrap();
        assert!(close(s.angle, 1.2));
        assert_eq!(s.action, 17.0);
    }

    #[test]
    fn climb_reports_monotone_runs() {
        let p = MapParams::alpha_z(1.0, -2.0, 1.0);
        // 0.6 stays in the upper half while 1/I^2 is tiny
        let out = climb(&p, CylState::new(0.6, 10.0), 12.0, 100, true).unwrap();
        assert!(out.monotone());
        let out = climb(&p, CylState::new(0.2, 10.0), 12.0, 100, true).unwrap();
        assert_eq!(out.first_loss, Some(1));
        assert!(!out.monotone());
    }

    proptest! {
        #[test]
        fn pinball_round_trip(angle in 0.0f64..2.0, action in 2u32..10_000, alpha in 0.3f64..3.0) {
            let p = MapParams::pinball(alpha);
            let s = CylState::new(angle, f64::from(action));
            if let Ok(f) = step_pinball(&p, s) {
                if let Ok(b) = step_pinball_inverse(&p, f) {
                    prop_assert_eq!(b.action, s.action);
                    let d = (b.angle - s.angle).abs();
                    prop_assert!(d.min(2.0 - d) <= 16.0 * f64::EPSILON);
                }
            }
        }

        #[test]
        fn action_stays_on_lattice(angle in 0.0f64..2.0, base in 20u32..500, offset in 0u8..4, alpha in 0.3f64..3.0) {
            let action = f64::from(base) + 0.25 * f64::from(offset);
            let p = MapParams::pinball(alpha).with_policy(NumericPolicy::Double);
            let t = iterate(&p, CylState::new(angle, action), 300, 1).unwrap();
            for s in &t.states {
                prop_assert_eq!((s.action - action).fract(), 0.0);
                prop_assert!(s.angle >= 0.0 && s.angle < 2.0);
                prop_assert!(t.action_min <= s.action && s.action <= t.action_max);
            }
        }

        #[test]
        fn wrap_lands_in_fundamental_closure(angle in 1.0f64..2.0, action in 3u32..5000, alpha in 0.3f64..2.0) {
            let p = MapParams::pinball(alpha);
            let i = f64::from(action);
            if angle + alpha / i >= 2.0 {
                if let Ok(s) = step_pinball(&p, CylState::new(angle, i)) {
                    prop_assert!(s.angle >= 0.0 && s.angle < alpha / i + 1e-15);
                }
            }
        }

        #[test]
        fn angle_range_holds_for_every_variant(x in -5.0f64..5.0, y in 1.0f64..50.0, z in -3i32..3, len in 1u8..3) {
            let p = MapParams::alpha_z(0.7, f64::from(z), f64::from(len));
            if let Ok(s) = step_az(&p, CylState::new(x, y)) {
                prop_assert!(s.angle >= 0.0 && s.angle < f64::from(len));
            }
            let saw = MapParams::sawtooth_fermi_ulam();
            if let Ok(s) = step_sawtooth_fu(&saw, CylState::new(x, y)) {
                prop_assert!(s.angle >= 0.0 && s.angle < 1.0);
            }
        }
    }
}
