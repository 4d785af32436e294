//! Layer graph over the five parameterizations, with exact backpropagation.

pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod ops;

pub use gradcheck::{check_gradients, GradCheckReport};
pub use layers::{AffineKind, AffineLayer, LayerSpec, NormMode, Weights};
pub use model::{build_model, ForwardCache, Gradients, Layer, Model, INIT_STD};
pub use ops::{
    argmax_rows, gaussian_noise_layer, leaky_relu, leaky_relu_backward, relu, softmax_xent, Activation,
};
