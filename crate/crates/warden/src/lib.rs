//! File formats, model and index persistence, batch pipeline and command
//! line on top of `anatomy-warden-core`.

pub mod binary;
pub mod cli;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use error::{Error, Result};
