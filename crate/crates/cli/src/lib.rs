//! Library side of the `lemsim` command: scenario loading, batch runs,
//! report files, comparisons and the environment server.

pub mod compare;
pub mod report;
pub mod runner;
pub mod scenarios;
pub mod serve;
