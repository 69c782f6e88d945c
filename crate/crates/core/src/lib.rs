//! Detection of VR familiarity from dominant-hand keypad-entry trajectories.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors (`f32` for models, `f64` for gradient checks) with define-by-run reverse-mode differentiation.
//! - [`models`]: the MLP, FCN and simplified point-cloud-transformer classifiers, plus checkpoints.
//! - [`data`]: session records, channel extraction, sliding windows, user-disjoint splits.
//! - [`synth`]: a synthetic keypad-entry generator with a tunable familiarity gap.
//! - [`train`]: softmax/BCE loss, Adam, and the per-cell and grid training loops.
//! - [`eval`]: accuracy, ROC/AUC, grid reports and SVG ROC plots.
//! - [`cli`]: the `vrfam` command line (synth, train, eval, report, gradcheck).
//!
//! Runnable walkthroughs of each capability live in `examples/`.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod seed;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
