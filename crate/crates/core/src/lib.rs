//! Numerical laboratory for the quantum symmetric simple exclusion process (QSSEP).
//!
//! Microscopic simulation of the coherence matrix, exact steady-state loop
//! cumulants, a variational spectral solver for structured random matrices,
//! entanglement from spectra, classical SSEP oracles and level statistics of the
//! two-replica Lindbladian.

pub mod entanglement;
pub mod error;
pub mod level_stats;
pub mod nc_combinatorics;
pub mod qssep_sim;
pub mod quad;
pub mod spectra;
pub mod ssep_reference;
pub mod steady_state;

pub use error::{Error, Result};
