pub mod diagnostics;
pub mod error;
pub mod fisher;
pub mod kernels;
pub mod model;
pub mod numerics;
pub mod simstudy;
pub mod trendcycle;
pub mod validation;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
