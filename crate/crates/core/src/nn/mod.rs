//! A small convolutional network written from scratch: tensors, layers,
//! sigmoid/binary cross-entropy loss, Adam, the training loop, prediction,
//! finite-difference gradient checking and a binary checkpoint format.
//!
//! The default architecture is the eight-layer word-image classifier:
//!
//! ```text
//! input 1x50x100
//! conv 32x(3x3) relu, maxpool(3, stride 2)
//! conv 32x(3x3) relu, maxpool(2, stride 2)
//! conv 24x(3x3) relu, maxpool(1, stride 1)
//! flatten, dense 150 relu, dense n_classes sigmoid
//! ```

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod model;
mod rows;
mod tensor;
mod train;

use std::fmt::Debug;
use std::io;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::path::PathBuf;

use num_traits::Float;
use thiserror::Error;

use crate::linalg::Gemm;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gradcheck::{grad_check, grad_check_with_fault, GradCheckReport, GradFault};
pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool_backward, maxpool_forward,
    pool_extent, relu_backward, relu_forward, sigmoid_backward, sigmoid_forward, ConvGradients,
    DenseGradients,
};
pub use loss::{bce_loss, bce_loss_batch, BCE_CLAMP};
pub use model::{build_model, Activation, CnnArchitecture, CnnModel, LayerSpec, Padding, Shape3};
pub use rows::{ByteRows, InputRows};
pub use tensor::Tensor;
pub use train::{
    accuracy, predict, predict_batch, train, EpochMetrics, LabelIndex, Precision, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("kernel {kernel}x{kernel} does not fit input {h}x{w}")]
    KernelTooLarge { kernel: usize, h: usize, w: usize },
    #[error("pooling window {window} exceeds input extent {extent}")]
    WindowTooLarge { window: usize, extent: usize },
    #[error("target is not one-hot")]
    NotOneHot,
    #[error("class {0:?} is not in the label index")]
    UnknownLabel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Floating-point element type of a network (`f32` or `f64`).
pub trait Scalar:
    Float + Gemm + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}
