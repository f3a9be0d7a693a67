//! Loss families with exact gradients and Hessian-vector products, the
//! datasets they act on, and the mini-batch schemes that index them.

mod batch;
mod dataset;
mod envelopes;
mod loss;
mod synthetic;

pub use batch::{BatchMode, BatchScheme, DrawnBatch};
pub use dataset::Dataset;
pub use envelopes::{compute_one_layer_c, norm_envelopes, Envelope, EnvelopeOptions};
pub(crate) use envelopes::{require_lt, violation};
pub use loss::{
    sigmoid, smooth_hinge, smooth_hinge_d1, smooth_hinge_d2, softplus, Activation, BatchHessian, OneHiddenLayer, Problem,
    RhoKind,
};
pub use synthetic::{generate_synthetic, SyntheticSpec, TEACHER_HIDDEN, TEACHER_NOISE};
pub(crate) use batch::check_probs;
