//! Pauli-transfer-matrix toolkit for quantum reservoir computing.

pub mod capacity;
pub mod channels;
pub mod mrc;
pub mod pauli;
pub mod ptm;
pub mod reservoir;
pub mod rng;
pub mod sweep;

pub use pauli::{CoherenceState, PauliBasis};
pub use ptm::BlockPtm;
