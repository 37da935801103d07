//! Finite-difference micromagnetics with a pluggable demagnetizing-field
//! provider.
//!
//! The engine relaxes spin configurations on a masked cubic-cell lattice
//! under the damping-only LLG equation, integrated with RK4. The
//! demagnetizing field comes from any [`fields::DemagProvider`]: the in-process
//! zero-padded FFT convolution, the O(N²) direct sum, or an external process
//! speaking the NMRQ/NMRS protocol in [`bridge`].

pub mod app;
pub mod bridge;
pub mod channels;
pub mod dataforge;
pub mod demag;
pub mod error;
pub mod fields;
pub mod hysteresis;
pub mod integrator;
pub mod lattice;
pub mod rng;
pub mod vortex;

pub use error::{Error, Result};
