//! Allocation-only core of the qfaas platform.
//!
//! Everything here is deterministic and free of I/O: the statevector
//! simulator, the circuit IR, the built-in circuit constructions, backend
//! selection and pricing, and the classical pre/post-processing plugins.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backend;
pub mod builders;
pub mod circuit;
pub mod ir;
pub mod naming;
pub mod plugins;
pub mod shor;
pub mod statevec;

pub use circuit::Circuit;
pub use statevec::{Counts, Gate, GateKind, StateVector};
