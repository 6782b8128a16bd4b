//! Environment-adaptive bilateral speech enhancement on a single processor.
//!
//! One suppression gain table is applied to the reference microphone and the
//! other ear is rebuilt from the enhanced reference through a small trained
//! HRTF gain (indexed either by quantized time delay or by quantized
//! interaural phase per bark band). A detection path (VAD with quiet
//! detection, MFCC + GMM noise/music classification) decides when and with
//! which trained model suppression runs.
//!
//! Module map:
//! - [`audio_io`]: WAV I/O, framing, overlap-add, HRIR scene simulation
//! - [`spectral`]: FFT analysis/synthesis, bark bands, IPD, two-band wavelet split
//! - [`snr`]: noise tracking and decision-directed SNR estimation
//! - [`gain`]: model-based gains, gain tables, reconstruction, model files
//! - [`tdoa`]: GCC delay estimation and median tracking
//! - [`training`]: accumulation, closed-form and gradient training
//! - [`environment`]: VAD, MFCC features, GMMs, background decisions
//! - [`eval`]: objective measures
//! - [`pipeline`]: frame-synchronous orchestration and benchmarking
//! - [`signals`]: deterministic synthetic test material

pub mod audio_io;
pub mod environment;
pub mod error;
pub mod eval;
pub mod gain;
pub mod pipeline;
pub mod signals;
pub mod snr;
pub mod spectral;
pub mod tdoa;
pub mod training;

pub use error::{Error, Result};
