//! Emulator core for the Sapphire lattice-cryptography processor.

pub mod isa;
pub mod kat;
pub mod keccak;
pub mod machine;
pub mod modmath;
pub mod nttcore;
pub mod polycache;
pub mod protocols;
pub mod sampler;

pub use modmath::{ModError, ModulusProfile, Strategy};
pub use nttcore::{LatticeConfig, NttConstants, NttMode};
pub use polycache::{Bank, PolynomialCache, SlotId};
