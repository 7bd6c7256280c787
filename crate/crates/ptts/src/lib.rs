//! Parametric text-to-speech with explicit prosody control.
//!
//! The pipeline turns an IPA phoneme sequence into a waveform through five
//! jointly trained subtasks: a convolutional text encoder, a phoneme duration
//! estimator, an f0/band-aperiodicity estimator operating on duration-upsampled
//! representations, an f0-conditioned mel-spectrogram decoder, and a
//! non-autoregressive excitation-driven vocoder. Because durations and f0 are
//! explicit intermediate quantities, both can be scaled or replaced before the
//! waveform is generated.
//!
//! Crate layout:
//!
//! - [`dsp`] — deterministic signal front-end: WAV I/O, mel spectrograms,
//!   f0/aperiodicity extraction, excitation synthesis, feature cache files.
//! - [`nn`] — minimal reverse-mode autodiff substrate: tensors, conv1d,
//!   bidirectional GRU, Adam, checkpoints.
//! - [`corpus`] — dataset ingestion: phoneme inventories, alignment labels,
//!   training-cache construction, train/test splits.
//! - [`model`] — the text-to-acoustics network and its losses.
//! - [`vocoder`] — excitation-conditioned convolutional vocoder and its losses.
//! - [`train`] — end-to-end multi-task training loop and the encoder context
//!   study.
//! - [`prosody`] — duration/f0 modification and reference-prosody
//!   incorporation.
//! - [`metrics`] — GPE/VDE/FFE, duration RMSE/MAE/PCC, real-time-factor
//!   benchmarks.
//! - [`synth`] — the frozen-model synthesis pipeline shared by the CLI and
//!   examples.
//! - [`toy`] — synthetic corpus generation for demos and tests.
//!
//! See the crate `examples/` directory for one runnable program per major
//! capability, and the `ptts` binary for the operational CLI
//! (`prepare | train | synth | eval | bench-rtf | context-study`).

pub mod config;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod prosody;
pub mod synth;
pub mod toy;
pub mod train;
pub mod vocoder;

pub use error::{Error, Result};
