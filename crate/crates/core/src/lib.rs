//! Simulation and training of multi-frequency diffractive deep neural networks.
//!
//! A diffractive network is a stack of thin modulation layers separated by free
//! space. Each layer multiplies the incoming complex field by a learnable
//! transmittance `a·exp(jφ)`; between layers the field is carried by the
//! Rayleigh–Sommerfeld impulse response. Running several wavelengths through the
//! same stack yields one output "frequency-channel" per wavelength. The moduli of
//! those channels are merged with learnable weights and read out by detector
//! regions, one per class.
//!
//! Module map:
//!
//! - [`field`]: complex grids, FFTs, elementwise arithmetic
//! - [`propagation`]: free-space kernels, their adjoints and a direct-sum oracle
//! - [`layers`]: the modulation transform and its reverse pass
//! - [`network`]: the multi-channel network, loss and full backward pass
//! - [`training`]: optimizers, epoch loop, evaluation, gradient checking
//! - [`data`]: IDX ingestion, input encoding, batching
//! - [`checkpoint`], [`config`], [`pgm`]: persistence and file formats
//! - [`cli`]: the command-line front end used by the `diffractnet` binary

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
mod error;
pub mod field;
pub mod layers;
pub mod network;
pub mod pgm;
pub mod propagation;
pub mod training;

pub use error::{Error, Result};
pub use field::{ComplexField, GridGeometry, RealMap};
pub use layers::{ModulationParams, ParamGrad};
pub use network::{
    DetectorLayout, ForwardTrace, LossKind, MfdNet, MfdNetConfig, NetGradients, Readout,
};
pub use propagation::{Method, PropagationKernel};
pub use training::{EpochMetrics, OptimizerKind, OptimizerState, TrainConfig};
