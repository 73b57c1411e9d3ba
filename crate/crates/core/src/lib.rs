//! Differentiable mass-displacement voting.
//!
//! A confidence map `c` and a displacement field `o` are combined into a
//! sharper map `m` by letting every pixel vote at `x + o(x)`, dilating the
//! vote with a kernel and accumulating votes additively, by noisy-OR, or by
//! maximum. The operator has an analytic backward pass with respect to both
//! `c` and `o`, so it can be trained end to end.
//!
//! Modules:
//! - [`field`]: dense fields and MDNF/PGM file I/O
//! - [`kernel`]: Gaussian and bilinear vote kernels
//! - [`vote`]: the voting operator, forward and backward
//! - [`verify`]: finite-difference and brute-force oracles

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod field;
pub mod interop;
pub mod kernel;
pub mod supervision;
pub mod synth;
pub mod toynet;
pub mod verify;
pub mod vote;

pub use error::{MdnError, Result};
pub use field::{DisplacementField, GradSignal, ScalarField, Shape};
pub use kernel::{KernelFamily, KernelSpec};
pub use vote::{
    vote_backward, vote_forward, Edge, VoteContext, VoteGrads, VoteGraph, VoteMode, Voting,
};
