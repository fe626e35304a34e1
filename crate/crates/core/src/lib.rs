//! Joint estimation of a chirp signal and its instantaneous frequency.
//!
//! The chirp is modelled as a damped stochastic harmonic oscillator whose
//! angular rate is driven by a positive transform of a Matérn 3/2 Gaussian
//! process. Inference runs Gaussian filters and smoothers on the resulting
//! four-dimensional state, and the model parameters are fitted by maximising
//! the prediction-error likelihood.
//!
//! Module map:
//!
//! * [`model`]: SDE coefficients, closed-form discretisation and kernels.
//! * [`simulate`]: benchmark signal generation and prior sampling.
//! * [`filters`]: Gaussian filtering/smoothing (discrete and continuous-discrete).
//! * [`mle`]: likelihood fitting with a limited-memory quasi-Newton optimiser.
//! * [`baselines`]: Hilbert, spectrogram and legacy state-space estimators.
//! * [`bounds`]: mean-square error bound evaluation.
//! * [`benchmark`]: Monte-Carlo comparison harness.
//! * [`gw`]: gravitational-wave strain pipeline.

pub mod baselines;
pub mod benchmark;
pub mod bounds;
pub mod error;
pub mod filters;
pub mod gw;
pub mod mle;
pub mod model;
pub mod optim;
pub mod simulate;

pub use error::{Error, Result};
pub use filters::{FilterRun, GaussianBelief, IfEstimate, QuadratureRule, SmootherRun, TimeMode};
pub use model::{Bijection, ChirpModel, ModelParams, PositiveMap, StateVector};
pub use simulate::{AmplitudeMode, SyntheticTruth, TimeSeries};
