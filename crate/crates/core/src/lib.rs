pub mod data;
pub mod error;
pub mod fl;
pub mod harness;
pub mod mcd;
pub mod nn;
pub mod rng;
pub mod stealth;
pub mod vaguegan;

pub use error::{Error, Result};
