//! Configuration, suite execution and dumps behind the `freefield` binary.

pub mod config;
pub mod dump;
pub mod suites;
