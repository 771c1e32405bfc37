//! A small CPU convolutional network: forward, exact backward, minibatch SGD,
//! model files, and the reference parameter arithmetic.

mod file;
mod model;
mod ops;
mod params;
mod tensor;
mod train;

use thiserror::Error;

pub use file::{decode_model, encode_model, load_model, save_model};
pub use model::{
    build_network, network_specs, patch_tensor, Backward, Gradients, Layer, LayerKind, LayerSpec,
    Model, NetworkConfig,
};
pub use ops::{conv_forward, cross_entropy, fc_forward, maxpool_backward, maxpool_forward, relu, softmax};
pub use params::{architecture_param_table, fc_param_count, layer_param_count, ParamRow};
pub use tensor::Tensor;
pub use train::{accuracy, predict_many, train, TrainConfig, TrainHistory};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("shape underflow: {0}")]
    ShapeUnderflow(String),
    #[error("max pooling needs even spatial dims, got {0}x{1}")]
    OddSpatialDim(usize, usize),
    #[error("non-finite tensor value")]
    NonFinite,
    #[error("patch {0} has no label")]
    UnlabeledPatch(usize),
    #[error("training set must contain at least two classes")]
    SingleClassDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
