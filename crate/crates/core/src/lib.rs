//! Static state-feedback design for synchronizing identical linear agents
//! over directed graphs.
//!
//! The crate is organized bottom-up: [`graph`] and [`linalg`] describe the
//! network and the agent model, [`lmi`] assembles matrix inequalities and
//! decides their feasibility, [`synth`] implements the design methods,
//! [`verify`] certifies rates of a fixed gain, [`sim`] integrates the closed
//! loop and [`bench`] runs the method grid.

extern crate openblas_src;

pub mod bench;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod lmi;
pub mod sim;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
