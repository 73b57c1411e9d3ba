//! Batch experiments behind the command-line tool.

pub mod ablate;
pub mod bench;
pub mod demo;
pub mod gradcheck;
