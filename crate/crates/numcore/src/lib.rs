//! Dense tensor arithmetic with reverse-mode automatic differentiation.
//!
//! Values live in plain [`Tensor`]s. A forward pass is recorded on a [`Tape`]:
//! parameters enter as leaves (tracked when `requires_grad` is set), every
//! primitive appends a node, and [`Tape::backward`] walks the record in
//! reverse to produce gradients. [`Parameters`] ties a model's tensors to the
//! tape so gradients can be accumulated back, stepped with [`AdamState`], and
//! verified with [`gradcheck`].

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the math in the numeric kernels.
#![allow(clippy::needless_range_loop)]

mod adam;
mod error;
mod gemm;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{NumError, Result};
pub use gradcheck::{gradcheck, GradcheckReport, ParamCheck};
pub use params::{NamedTensors, Parameters};
pub use tape::{Op, Tape, Var};
pub use tensor::Tensor;
