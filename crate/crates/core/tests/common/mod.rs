//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

pub mod fd;
pub mod kkt;
pub mod sparse;
