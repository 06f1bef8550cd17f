//! Crate-wide error type.

use alloc::string::String;
use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two tensors (or a tensor and an expected geometry) disagree on an axis.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A kernel or pooling window is larger than the spatial extent it slides over.
    #[error("{what} {window} exceeds input {axis} {input}")]
    WindowTooLarge {
        what: &'static str,
        axis: &'static str,
        window: usize,
        input: usize,
    },

    /// A shape, kernel, or count that must be positive is zero (or a shape is empty).
    #[error("invalid dimension: {0}")]
    InvalidDimension(&'static str),

    /// Flat data length does not match the product of the shape.
    #[error("data length {actual} does not match shape volume {expected}")]
    DataLength { expected: usize, actual: usize },

    /// Architecture geometry broke down at a specific layer kind.
    #[error("invalid {layer} geometry: {reason}")]
    InvalidGeometry { layer: &'static str, reason: String },

    /// An architecture cannot be turned into a trainable classifier.
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    /// Class label outside 0..=9.
    #[error("label {value} out of range 0..=9")]
    LabelOutOfRange { value: usize },

    /// A label byte in an IDX stream is outside 0..=9.
    #[error("label {value} out of range 0..=9 at sample {index}")]
    LabelOutOfRangeAt { index: usize, value: u8 },

    /// IDX container starts with the wrong type code.
    #[error("bad IDX magic at offset 0: found 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { found: u32, expected: u32 },

    /// IDX payload shorter or longer than the header promises.
    #[error("IDX payload length mismatch: expected {expected} bytes, got {actual}")]
    PayloadLength { expected: usize, actual: usize },

    /// Image and label streams disagree on sample count.
    #[error("dataset count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// Fewer samples available than requested.
    #[error("requested {requested} {which} samples, only {available} available")]
    InsufficientSamples {
        which: &'static str,
        requested: usize,
        available: usize,
    },

    /// Pixel statistics collapsed (constant input corpus).
    #[error("degenerate data: pixel standard deviation is zero")]
    DegenerateData,

    /// A hyperparameter or run setting violates its contract.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Backward tape does not belong to the model it is replayed against.
    #[error("tape mismatch: {0}")]
    TapeMismatch(String),

    /// An error raised while processing one training sample.
    #[error("training aborted at sample {index}: {source}")]
    AtSample {
        index: usize,
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the index of the training sample that produced it.
    pub fn at_sample(self, index: usize) -> Error {
        Error::AtSample {
            index,
            source: alloc::boxed::Box::new(self),
        }
    }
}
