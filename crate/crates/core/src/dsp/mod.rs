//! Time-frequency analysis and synthesis.

pub mod fft;
mod stft;
mod window;

pub use stft::{istft, reconstruct_with_phase, stft, Spectrogram, StftConfig, Waveform};
pub use window::Window;
