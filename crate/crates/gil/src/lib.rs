//! Adversarial Gaussian pairs for Gabor phase retrieval.
//!
//! The pair `f_a^± = u_{−a} ± u_a` of translated Gaussians stays at quotient
//! distance `2^{3/4}` for every `a`, while the spectrogram magnitudes
//! `|V_φf_a^±|` approach each other like `e^{−πa²/2}`. This crate evaluates
//! both sides exactly or by controlled quadrature and turns the resulting
//! estimates into executable checks.
//!
//! * [`signals`]: exact Gaussian-mixture algebra.
//! * [`analytic`]: closed-form transforms, magnitude derivatives and the
//!   pointwise estimates.
//! * [`numeric`]: grid sampling, FFT cross-checks and norm quadrature.
//! * [`lab`]: certificates, rate fits and operator diagnostics.
//! * [`frames`]: STFT and wavelet coefficient penalties.

pub mod analytic;
pub mod error;
pub mod frames;
pub mod lab;
pub mod numeric;
pub mod signals;
pub mod stats;

pub use error::{Error, Result};

/// Version string embedded in every exported artifact.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
