//! Library side of the `dsheaf` command-line tool: run orchestration,
//! trajectory CSV handling, and the bundled-example reproduction suite.

pub mod csvio;
pub mod reproduce;
pub mod runner;
