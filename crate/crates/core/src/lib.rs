//! Parkinsonian gait severity estimation from skeleton motion sequences.
//!
//! Two pipelines share one evaluation harness:
//!
//! * feature-based: gait events (candidate extrema, quadrature phase,
//!   EKF/RTS smoothing) feed spatiotemporal gait features into a
//!   class-weighted random forest;
//! * embedding-based: fixed-length clips are embedded by a pluggable encoder
//!   and classified by a linear softmax head, with one vote per clip.
//!
//! Both are evaluated with leave-one-subject-out cross-validation, weighted
//! classification metrics and a Wilcoxon signed-rank ON/OFF comparison.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod gaitevents;
pub mod models;
pub mod preprocess;
pub mod seeding;
pub mod skeleton;

pub use error::{Error, Result};
