//! Simulation of noisy two-way entanglement purification with a lab demon
//! that tracks which pairs were hit by which Pauli errors.
//!
//! Modules build on each other from the bottom up: [`bellbits`] is the bit
//! algebra of Bell states under the protocol, [`oracle`] checks it against
//! dense matrices, [`noise`] describes Pauli channels, [`recurrence`] turns
//! both into quadratic maps on ensemble weights, [`dynamics`] studies their
//! long-run behaviour, [`montecarlo`] simulates individual pairs, and
//! [`cli`] wraps everything as batch commands.

// `!(x > 0.0)` is how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bellbits;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod montecarlo;
pub mod noise;
pub mod oracle;
pub mod recurrence;
