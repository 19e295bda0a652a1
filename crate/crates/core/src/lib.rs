//! Sum-of-Sincs sampling kernels and finite-rate-of-innovation recovery of
//! periodic, finite and bursty pulse streams.

pub mod burst;
pub mod error;
pub mod experiment;
pub mod index;
pub mod kernel;
pub mod recovery;
pub mod sampling;
pub mod signal;
pub mod ultrasound;

pub use error::{Error, Result};
pub use index::IndexSet;
pub use kernel::{PeriodicExtensionKernel, SamplingKernel, SosKernel};
pub use signal::{PulseShape, PulseStream, StreamKind};
