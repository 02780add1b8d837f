//! Tensors, layers with hand-written gradients, and the dense-block defect
//! classifier with its training loop.

mod layers;
mod model;
mod ops;
mod optim;
mod tensor;
mod train;
mod weights;

pub use layers::{BatchNorm2d, BnRelu, Conv2d, DenseBlock, DenseLayer, Linear, Mode, Module, Parameter, Transition};
pub use model::{DenseNet, LayerSpec, ModelSpec};
pub use ops::{
    avgpool_backward, avgpool_forward, batchnorm_backward, batchnorm_eval, batchnorm_train, conv2d_backward,
    conv2d_forward, global_avgpool_backward, global_avgpool_forward, linear_backward, linear_forward, maxpool_backward,
    maxpool_forward, relu, relu_backward, softmax, softmax_cross_entropy, BatchNormCache,
};
pub use optim::{lr_schedule, sgd_step, TrainConfig};
pub use tensor::{Scalar, Tensor};
pub use train::{
    accuracy, images_to_tensor, predict, predict_batch, train, train_step, train_with, EpochLog, LabeledCrop,
    Prediction, TrainingLog,
};
pub use weights::{decode_weights_into, encode_weights, load_weights, save_weights};
