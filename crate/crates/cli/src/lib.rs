//! Library face of the `lvsm` command-line harness: file formats and
//! experiment plumbing, shared with the integration tests.

pub mod formats;
pub mod run;
