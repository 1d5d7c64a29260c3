//! A small, dependency-light MLP framework built around stochastic
//! activations of the interval-wise dropout family (AID), together with the
//! machinery needed to study plasticity loss on non-stationary task streams:
//!
//! - [`numkit`]: dense `f64` matrices, a seeded RNG, and a Jacobi
//!   eigensolver for singular values;
//! - [`activations`]: AID (general and simplified), ReLU variants, Dropout,
//!   DropReLU, RReLU, CReLU and Fourier features, each with train/eval
//!   forward and exact backward through the sampled mask;
//! - [`nn`]: linear layers, He initialization, forward/backward passes,
//!   losses, and lossless network checkpoints;
//! - [`optim`]: SGD/Adam, L2 and L2-Init regularization, Shrink & Perturb
//!   and dormant-neuron recycling;
//! - [`tasks`]: IDX dataset loading, a synthetic blob generator, and the
//!   permuted-input / random-label / chunked task streams;
//! - [`metrics`]: dormant-neuron ratio, average unit sign entropy, and
//!   effective feature rank;
//! - [`theory`]: exact-enumeration and Monte Carlo certification of the
//!   regularization bound satisfied by AID and its related identities;
//! - [`runner`]: experiment configs, the training loop, CSV telemetry, and
//!   the `aid-lab` command line.
//!
//! Everything is deterministic given a master seed: two runs of the same
//! config produce byte-identical CSV output.

pub mod activations;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod numkit;
pub mod optim;
pub mod runner;
pub mod tasks;
pub mod theory;

pub use error::{Error, Result};
