//! Effective-theory toolkit for deep fully connected networks.
//!
//! The crate computes Gaussian expectations of activation observables,
//! the susceptibilities and kernel flows that decide whether a network
//! can be initialized at criticality, and Monte-Carlo estimates of the
//! same quantities from sampled (and trained) network ensembles.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the type
//! aliases at the bottom of this module fix the scalar to `f64`, which is
//! what the command-line tools and the acceptance suite use.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod criticality;
pub mod ensemble;
pub mod error;
pub mod gauss;
pub mod network;
pub mod scalar;
pub mod stats;

pub use activations::{Activation, ActivationKind};
pub use criticality::{
    classify_universality, decompose_two_input_kernel, solve_critical_cw, susceptibility_ratio,
    Classification, FlowLayer, FlowStatus, InitHyperparams, KernelFlowTrace, KernelTheory,
    Route, SusceptibilityKind, SusceptibilityPoint, UniversalityClass,
};
pub use ensemble::{EnsembleLayerStats, EnsembleSpec, TrainingReport};
pub use error::{Error, Result};
pub use gauss::{double_factorial, GaussianMeasure, Quadrature, QuadratureRule};
pub use network::{Architecture, Batch, ForwardTrace, Network, TrainConfig, TrainOutcome};
pub use scalar::Scalar;

/// Double-precision kernel theory, the default for all experiments.
pub type Theory<'q> = KernelTheory<'q, f64>;
/// Double-precision quadrature engine.
pub type Quad = Quadrature<f64>;
/// Double-precision fully connected network.
pub type Net = Network<f64>;
/// Double-precision hyperparameters.
pub type Hyper = InitHyperparams<f64>;
/// Double-precision flow trace.
pub type FlowTrace = KernelFlowTrace<f64>;
/// Single-precision network, used for cross-precision checks.
pub type Net32 = Network<f32>;
