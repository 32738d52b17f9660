//! Small segmentation network trained from scratch.
//!
//! The encoder stacks residual blocks (conv-ReLU-conv plus identity, then
//! ReLU), halving resolution with 2x2 average pooling and doubling the
//! channel count at every level. The decoder upsamples with nearest
//! neighbour, concatenates the matching encoder output and applies two
//! 3x3 conv-ReLU layers. A 1x1 head produces logits for background plus
//! the four defect/frame classes.
//!
//! Everything runs in `f64`, which doubles as the high-precision mode the
//! finite-difference gradient check needs.

pub mod checkpoint;
mod gradcheck;
mod loss;
mod model;
pub mod ops;
mod tensor;
mod train;

pub use gradcheck::{gradient_check, probe_gradients, GradCheck, GradCheckOptions, Probe};
pub use loss::{loss_ce, softmax};
pub use model::{build_model, layer_shapes, masks_from_logits, LayerSpec, SegConfig, SegModel, NUM_CLASSES};
pub use tensor::Tensor;
pub use train::{evaluate, predict_samples, train, Sample, TrainConfig, TrainHistory};
