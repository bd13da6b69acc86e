//! Real vs. virtual attention classification from windowed EEG and eye
//! tracking: preprocessing, FBCSP and gaze features, LDA with late fusion,
//! evaluation protocols, a session simulator and a streaming replay.

pub mod classify;
pub mod data_model;
pub mod eeg_features;
pub mod epoching;
pub mod error;
pub mod eval;
pub mod gaze_features;
pub mod signal;
pub mod simulate;
pub mod stream;

pub use error::{Error, Result};
