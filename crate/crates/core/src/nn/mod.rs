//! Convolutional salience networks over HCQT features, and their training.

mod adam;
mod batchnorm;
mod checkpoint;
mod conv;
pub mod kernels;
mod loss;
mod model;
mod patches;
mod tensor;
mod train;

pub use adam::Adam;
pub use batchnorm::{BatchNorm, BnStats};
pub use checkpoint::{load_checkpoint, save_checkpoint, weights_fingerprint, CHECKPOINT_VERSION};
pub use conv::Conv2d;
pub use loss::{bce_grad_slice, bce_loss, bce_loss_slice, BCE_EPS};
pub use model::{
    build_model, Activation, Architecture, Block, Branch, LayerSpec, ModelGrads, ModelInput, PhaseNorm, SalienceModel,
    Trace,
};
pub use patches::{assemble_batch, patch_offsets, sample_patches, PatchRef, TrainExample};
pub use tensor::Tensor;
pub use train::{fit_phase_norm, train, train_with, EarlyStopping, EpochRecord, TrainConfig, TrainHistory};
