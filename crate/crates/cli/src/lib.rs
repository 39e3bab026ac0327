//! Pipeline plumbing behind the `rrforge` command: run configuration,
//! corpus access, window processing, training splits, estimate tables and
//! reports.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod evaluate;
pub mod experiment;
pub mod prepare;
pub mod split;
