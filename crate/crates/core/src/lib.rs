//! Neural named-entity recognition without any standard library.
//!
//! Two sequence labelers share one word representation:
//!
//! - [`crf`]: a bidirectional LSTM feeding a linear-chain CRF, trained on
//!   the sentence log-likelihood and decoded with Viterbi.
//! - [`chunker`]: a shift-reduce chunker whose output, stack and buffer are
//!   summarized by Stack-LSTMs and which decodes greedily.
//!
//! Everything differentiable goes through the tape in [`mathcore`]. The crate
//! needs only `alloc`; file IO, the archive format and the command line live
//! in the `nerkit` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod chunker;
pub mod corpus;
pub mod crf;
mod error;
pub mod eval;
pub mod mathcore;
pub mod rnn;
pub mod training;
pub mod wordrep;

pub use error::{Error, Result};

/// The seeded generator used throughout: initialization, shuffling, dropout.
pub type Rng = rand_chacha::ChaCha8Rng;
