//! Differentiable building blocks with explicit forward/backward pairs.
//!
//! Layout is NHWC throughout. Layers own [`ParamId`]s into a shared
//! [`ParameterStore`]; backward passes accumulate parameter gradients there
//! and return the gradient with respect to their input.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod act;
pub mod conv;
pub mod gradcheck;
pub mod gru;
pub mod params;
pub mod pool;
pub mod residual;
pub mod tensor;

pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGrads};
pub use gradcheck::{grad_check, GradCheckReport};
pub use gru::{ConvGru, GateType, GruCache};
pub use params::{ParamId, ParameterStore};
pub use pool::{downsample2, downsample2_backward, upsample2, upsample2_backward};
pub use residual::ResidualBlock;
pub use tensor::Tensor4;

/// Floating-point element type: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Slope used by the leaky rectifier inside residual blocks and embeddings.
pub const LEAKY_SLOPE: f64 = 0.2;
