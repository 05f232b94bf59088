//! Sequence transformer classifier for protein primary structures and the
//! gradient-weighted residue importance ("sequence score") explainer.
//!
//! The crate is organised bottom-up:
//!
//! * [`seqdata`]: amino-acid alphabet, encodings, dataset I/O, perturbations
//!   and the planted-motif synthetic benchmark.
//! * [`numcore`]: dense arrays, a reverse-mode tape and a finite-difference
//!   gradient checker.
//! * [`sptmodel`]: the transformer classifier, presets and checkpoints.
//! * [`trainer`]: AdamW, warmup + cosine schedule, layer-wise LR decay,
//!   label smoothing, drop path and the training loop.
//! * [`seqscore`]: per-residue importance scores.
//! * [`xaieval`]: deletion/mutation faithfulness, stability and timing.
//! * [`cli`]: the `spt` command-line front end.

pub mod cli;
pub mod error;
pub mod numcore;
pub mod seqdata;
pub mod seqscore;
pub mod sptmodel;
pub mod trainer;
pub mod xaieval;

pub use error::{Error, Result};
