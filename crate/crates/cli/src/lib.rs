//! Pipeline stages, report assembly and the study server behind the `phonosem` binary.

pub mod exit;
pub mod report;
pub mod server;
pub mod stages;

pub use exit::{exit_code, UpstreamMissing};
