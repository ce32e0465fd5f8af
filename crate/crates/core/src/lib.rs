//! Signature-driven stochastic volatility models.
//!
//! The asset follows `dX_t = ⟨ℓ, Ŵ_{0,t}⟩ dW_t`: volatility is a linear
//! functional of the signature of the time-augmented Brownian driver. The
//! crate simulates such models, prices signature payoffs in closed form
//! through the expected signature of the lead-lag Brownian motion, and
//! calibrates `ℓ` to option prices. Every analytic route has a Monte Carlo
//! cross-check in [`market_lab`].

pub mod calibration;
pub mod error;
pub mod expected_signature;
pub mod market_lab;
pub mod path_signature;
pub mod payoffs;
pub mod rng;
pub mod sig_sde;
pub mod stats;
pub mod tensor_algebra;

pub use error::{Error, Result};
pub use tensor_algebra::{LinearFunctional, MultiIndex};
