//! Deterministic tensor engine with exactly the layer set the denoiser
//! needs: 3x3 same-padding convolution, batch normalization, ReLU/linear and
//! quantized activations, MSE loss and Adam — forward and reverse-mode
//! backward for all of it.

pub mod adam;
pub mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod model;
pub mod tensor;
pub mod train;

pub use adam::{adam_step_scalar, AdamConfig, AdamState};
pub use batchnorm::BatchNorm;
pub use conv::{conv2d_backward, conv2d_forward, Conv2d};
pub use model::{mse_grad, mse_loss, Activation, ConvBlock, DenoiserModel, InputQuant, Mode};
pub use tensor::{Scalar, Tensor};
pub use train::{evaluate_mse, fit, PatchSet, TrainConfig, TrainOutcome};
