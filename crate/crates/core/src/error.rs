use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(&'static str),
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("kernel width must be odd (got {0})")]
    EvenKernelWidth(usize),
    #[error("kernel height {kernel} exceeds input height {input}")]
    KernelTooTall { kernel: usize, input: usize },
    #[error("dimension chain mismatch: {0}")]
    DimensionChain(String),
    #[error("numeric overflow in cell")]
    NumericOverflow,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate source: {0} has zero power")]
    DegenerateSource(&'static str),
    #[error("room impulse response is empty")]
    EmptyRir,
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("reference signal has zero power")]
    ZeroReference,
    #[error("length mismatch: {reference} vs {estimate} samples (tolerance {tolerance})")]
    LengthMismatch {
        reference: usize,
        estimate: usize,
        tolerance: usize,
    },
    #[error("dataset is empty: {0}")]
    EmptyDataset(&'static str),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
}
