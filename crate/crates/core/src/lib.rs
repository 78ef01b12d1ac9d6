//! Learned separable 2D transform networks for MNIST, plus a bit-exact
//! Q5.7 fixed-point inference path suitable for hardware ROM generation.

pub mod error;
pub mod fixed;
pub mod io;
pub mod matrix;
pub mod mnist;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use fixed::{
    dequantize, evaluate_quantized, export_roms, infer_staged, mac_dot, quantize, quantize_model,
    tanh_approx_fixed, tanh_approx_float, write_test_vectors, FixedWord, InferStats, InferTrace,
    QuantStats, QuantizedModel, RamImage, WordMatrix,
};
pub use io::{load_model, save_model};
pub use matrix::{dot, Matrix, Real};
pub use model::layers::{
    fc_forward, flatten, lst_forward, lst_forward_matrix, res_lst_forward, softmax, Activation,
    FcLayer, LstBlock,
};
pub use model::{
    argmax, ffnn_forward, model_forward, ModelParams, ModelSpec, StageParams, StageSpec,
    StageValue, IMAGE_SIDE, NUM_CLASSES,
};
pub use rng::SplitMix64;
pub use train::{
    adam_step, backward, cross_entropy, evaluate, glorot_fc, gradient_check, init_params, train,
    AdamState, EpochStats, GradCheckReport, Gradients, TrainConfig,
};
