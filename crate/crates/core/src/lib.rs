//! Explain-then-predict commonsense question answering.
//!
//! The crate covers the whole flow: loading multiple-choice examples and
//! their human explanations ([`corpus`]), gating explanation quality
//! ([`quality`]), a word-level [`tokenizer`], a from-scratch transformer core
//! ([`neural`]), the two-phase explanation pipeline ([`cage`]) and its
//! evaluation [`metrics`].
//!
//! Runnable walkthroughs live in `examples/`.

pub mod error;
pub mod text;
pub mod corpus;
pub mod quality;
pub mod tokenizer;
pub mod neural;
pub mod cage;
pub mod metrics;
pub mod synthetic;

pub use error::{Error, Result};
