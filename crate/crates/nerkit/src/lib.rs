//! File formats, archives and the command-line front end for `nerkit-core`.

pub mod archive;
pub mod config;
pub mod error;
pub mod io;
pub mod run;
pub mod synth;

pub use archive::Model;
pub use config::{ModelKind, RunConfig};
pub use error::{Error, Result};
