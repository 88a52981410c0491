//! Meta-active-learning kernel.
//!
//! Everything needed to learn a single-shot, pool-based label-acquisition
//! strategy over a stream of small classification problems:
//!
//! - [`graph`]: a minimal reverse-mode differentiation tape over vector ops
//! - [`nn`]: the parametric building blocks (linear maps, LSTM cell,
//!   bidirectional scan, MLP embedder) built on that tape
//! - [`data`]: base-dataset ingestion and episodic problem sampling with
//!   disjoint class universes for train/validation/test
//! - [`predictor`]: the non-parametric similarity-softmax label vote
//! - [`selector`]: acquisition strategies (random, k-medoids, learned
//!   stochastic policy over a bidirectional recurrent scorer)
//! - [`trainer`]: the episode loss, the score-function gradient estimator
//!   with Monte-Carlo approximation, and the training/evaluation loops
//!
//! The crate is `no_std`-compatible (with `alloc`); all file formats, CLI
//! plumbing and IO live in the companion `metal-cli` crate. Every random
//! choice flows from explicitly derived seeds, so identical inputs give
//! bit-identical outputs.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod math;
pub mod nn;
pub mod predictor;
pub mod rng;
pub mod selector;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{ParamStore, Tensor};
