pub mod ensemble;
pub mod error;
pub mod io;
pub mod rng;
pub mod selfcheck;
pub mod stats;
pub mod sweep;
pub mod walk;

pub use error::{Error, Result};
