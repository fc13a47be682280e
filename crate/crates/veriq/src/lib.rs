//! Command-line front end and examiner HTTP service for `veriq-core`.

pub mod cli;
pub mod server;
