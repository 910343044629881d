//! Dual-stage classification of grasping gestures from two-channel surface EMG.
//!
//! The crate covers the whole offline pipeline: time-domain feature
//! extraction ([`features`]), z-scored PCA ([`pca`]), SMO-trained kernel SVMs
//! ([`svm`]), the single-stage and power/precision dual-stage classifiers
//! ([`pipeline`]), and the class-separation dendrogram used to check the
//! grouping ([`grouping`]). [`data`] holds the corpus types and the seeded
//! synthetic generator; [`cli`] backs the `emgds` binary.

pub mod data;
pub mod features;
pub mod linalg;
pub mod pca;
pub mod svm;
pub mod pipeline;
pub mod grouping;
pub mod cli;
