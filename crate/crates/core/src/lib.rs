//! Discontinuous area-preserving twist maps of αz type: the pinball map, its
//! first-return map to the fundamental domain, the renormalized return map,
//! the escape orbit for α = 1/ln(2m), and the zero-twist discrepancy system.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alpha;
pub mod error;
pub mod escape;
pub mod kesten;
pub mod maps;
pub mod numeric;
pub mod renorm;
pub mod return_map;

pub use alpha::Alpha;
pub use error::{MapError, Result};
pub use maps::{
    iterate, step_az, step_az_inverse, step_pinball, step_pinball_inverse, step_sawtooth_fu, CylState, MapFamily,
    MapParams, NumericPolicy, OrbitTrace, SignVariant, SingularPolicy,
};
pub use return_map::{classify_fiber, first_return, IntervalReport, ReturnClass, ReturnEvent};
