//! Command-line driver and multithreaded executor for `smc-core`.

pub mod cli;
pub mod error;
pub mod exec;
pub mod io;
pub mod kernels;
pub mod reproduce;

pub use error::CliError;
pub use exec::Threaded;
