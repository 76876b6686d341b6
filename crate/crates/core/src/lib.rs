//! Facial action unit intensity modelling with Takagi-Sugeno neuro-fuzzy systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`reduce`] scatter matrices, PCA/2DPCA and biased discriminant analysis,
//! * [`gabor`] Gabor wavelet banks and appearance feature matrices,
//! * [`tracker`] pyramidal Lucas-Kanade grid tracking and displacement features,
//! * [`anfis`] Takagi-Sugeno inference with hybrid least-squares/gradient learning,
//! * [`structure`] greedy grid-partition structure identification,
//! * [`pipeline`] per-AU training, fused detection and evaluation,
//! * [`expression`] gain-ratio decision trees from AU intensities to expressions,
//! * [`persist`] the versioned plain-text model container.
//!
//! [`image`] and [`synth`] provide grayscale images and a synthetic face
//! sequence generator used by tests, the CLI demo and the browser demo.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anfis;
pub mod error;
pub mod expression;
pub mod gabor;
pub mod image;
pub mod linalg;
pub mod persist;
pub mod pipeline;
pub mod reduce;
pub mod structure;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
