//! Stochastic optimizers viewed as iterated function systems.
//!
//! A constant step-size optimizer that picks one of `m_b` mini-batches at
//! random is an IFS `w_k = h_{U_k}(w_{k-1})`. This crate builds those map
//! families ([`optimizers`]) from loss functions with exact derivatives
//! ([`problems`]), samples their invariant measures ([`ifs`]), estimates the
//! box-counting dimension of the samples and evaluates closed-form dimension
//! bounds ([`dimension`]), and computes the mean log Jacobian norm statistic
//! `R` together with the generalization bound evaluators ([`complexity`]).

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complexity;
pub mod dimension;
pub mod error;
pub mod ifs;
pub mod linalg;
pub mod optimizers;
pub mod problems;
pub mod rng;

pub use error::{IfsError, Result};

/// Optimizer state: a dense real parameter vector.
pub type ParamVector = nalgebra::DVector<f64>;

pub use complexity::{
    bound_corollary1, bound_theorem1, dense_jacobian_oracle, estimate_r, estimate_r_for_system,
    generalization_gap, spectral_norm_power_iter, ComplexityEstimate, GeneralizationInputs,
    PowerIterConfig, PowerIterResult,
};
pub use dimension::{
    analytic_bound, box_counting_dimension, rams_ratio, BoundFamily, BoundSpec, BoxCountConfig,
    DimensionEstimate, RamsBound,
};
pub use ifs::{
    contractivity_report, iterate, lyapunov_exponent, sample_invariant, AffineMap,
    ContractivityMethod, ContractivityProbe, ContractivityReport, GradientMap, IfsChain, IfsSystem,
    LyapunovEstimate, MapDescriptor, SampleCloud, Trajectory,
};
pub use optimizers::{
    build_ifs, build_precond_sgd_ifs, build_sgd_ifs, build_stoch_newton_ifs, partition_batches,
    OptimizerConfig, OptimizerKind, PreconditionerSpec,
};
pub use problems::{
    compute_one_layer_c, norm_envelopes, Activation, BatchMode, BatchScheme, Dataset, Envelope,
    EnvelopeOptions, OneHiddenLayer, Problem, RhoKind, SyntheticSpec,
};
