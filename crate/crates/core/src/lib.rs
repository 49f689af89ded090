pub mod analysis;
pub mod cli;
pub mod correlation;
pub mod emitter;
pub mod error;
pub mod io;
pub mod model;
pub mod optics;
pub mod oracles;
pub mod scenario;

pub use error::{Error, Result};
pub use model::*;
