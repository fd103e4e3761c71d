//! Identification and distributionally robust LQR synthesis for linear
//! systems with input- and state-multiplicative noise.
//!
//! The dynamics `x⁺ = Σ_c w_c [A_c, B_c] (x, u)` are described by a mode
//! tensor ([`model::ModeTensor`]) and the second moment `W = E[w wᵀ]`.
//! Second moments propagate through completely positive operators
//! ([`cpop`]), expressed in `svec` coordinates ([`symm`]) and assembled with
//! third-order tensor algebra ([`tensor`]). From state transitions,
//! [`identify`] estimates `W` by least squares and attaches a finite-sample
//! radius built from matrix concentration bounds ([`concentration`]);
//! [`synthesis`] turns the resulting interval into a controller that is
//! mean-square stabilizing for every moment in it. [`simulate`] generates
//! synthetic data and [`cli`] runs the experiment sweeps.

pub mod cli;
pub mod concentration;
pub mod cpop;
pub mod error;
pub mod identify;
pub mod linalg;
pub mod model;
pub mod simulate;
pub mod symm;
pub mod synthesis;
pub mod systems;
pub mod tensor;

pub use error::{Error, Result};
