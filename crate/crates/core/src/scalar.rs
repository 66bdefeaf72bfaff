//! Scalar abstraction for the numerical core.
//!
//! Everything numeric in this crate is generic over [`Real`], which gathers the
//! num-traits conversions together with nalgebra's `RealField`. The two stock
//! instantiations are `f32` and `f64`; the crate root exports `f64` aliases for
//! the common types since the model file format is defined over binary64.

use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Scalar type the sheaf machinery is generic over.
pub trait Real:
    Copy + nalgebra::RealField + FloatConst + FromPrimitive + ToPrimitive + std::fmt::LowerExp
{
}

impl<T> Real for T where
    T: Copy + nalgebra::RealField + FloatConst + FromPrimitive + ToPrimitive + std::fmt::LowerExp
{
}

/// Converts an `f64` constant into the working scalar type.
///
/// Panics if the conversion fails, which cannot happen for finite constants
/// and the stock `f32`/`f64` instantiations.
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 constant representable in scalar type")
}

/// Relative singular-value cutoff used for numerical rank decisions.
///
/// Binary64 follows the usual `1e-12` convention; narrower types fall back to
/// a small multiple of the machine epsilon.
pub fn rank_cutoff_factor<T: Real>() -> T {
    let eps_based = T::default_epsilon() * real::<T>(32.0);
    let conventional = real::<T>(1e-12);
    if eps_based > conventional {
        eps_based
    } else {
        conventional
    }
}
