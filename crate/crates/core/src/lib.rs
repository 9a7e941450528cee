//! Phase-aware spectrogram inpainting.
//!
//! Missing STFT columns are recovered by a primal-dual solver with an
//! instantaneous-frequency-corrected time-variation penalty.

pub mod error;
pub mod eval;
pub mod matrix;
pub mod phase_prior;
pub mod pipeline;
pub mod prox;
pub mod solver;
pub mod stft;

pub use num_complex::Complex64;

pub use error::{Error, Result};
pub use eval::{snr, EvalRecord, Experiment, SignalKind, TestSignal};
pub use matrix::CMatrix;
pub use phase_prior::{IfEstimator, IfMatrix, IpctvOperator, PhaseCorrection};
pub use pipeline::{
    find_gaps, make_mask, ColumnMask, GapRange, Inpainter, MaskPlacement, MaskSpec, Method,
};
pub use prox::{ThresholdKind, Thresholder};
pub use solver::{SolverConfig, TraceEvent};
pub use stft::{Spectrogram, Stft, StftConfig, Window};
