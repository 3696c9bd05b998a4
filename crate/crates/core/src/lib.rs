//! Adversarial perturbations against graph-convolutional node classifiers.
//!
//! The crate attacks a linearized two-layer GCN surrogate (`softmax(Â²XW)`)
//! by greedily flipping edges and binary features around a target node,
//! keeping the degree distribution and feature co-occurrences statistically
//! close to the clean graph, and then measures how the damage transfers to a
//! regular two-layer GCN under evasion and poisoning.
//!
//! Module map:
//!
//! * [`graph`]: sparse attributed graph with edge/feature flips.
//! * [`dataset`]: bundle IO, largest connected component, splits, synthetic data.
//! * [`normalized`] and [`surrogate`]: `Â`, `Â²` with incremental updates and
//!   the surrogate model.
//! * [`unnoticeability`]: degree-distribution likelihood-ratio test and the
//!   feature co-occurrence test.
//! * [`attack`]: candidate sets, scoring, the greedy attack and baselines.
//! * [`victim`]: two-layer GCN with hand-written backpropagation.
//! * [`harness`]: target selection, limited-knowledge runs, experiments and
//!   reports.

pub mod attack;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod harness;
pub mod normalized;
pub mod surrogate;
pub mod unnoticeability;
pub mod victim;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use graph::{AttributedGraph, Direction, Flip, Perturbation};
