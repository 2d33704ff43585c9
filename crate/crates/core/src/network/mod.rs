//! Dense and convolutional feed-forward networks with backpropagation and
//! direct feedback alignment backends, MSE loss and RMSprop.

mod conv;
mod net;
mod optim;
mod pool;
mod tensor;

pub use conv::{conv_backward, conv_forward, conv_output_dim, ConvCache, ConvGrads, ConvLayer};
pub use net::{
    clone_params, mse_loss, Architecture, Backend, DenseLayer, ForwardCache, Gradients, InputShape, Layer,
    LayerCache, LayerSpec, Network, ParamGrad,
};
pub use optim::{rmsprop_step, OptState};
pub use pool::{pool_backward, pool_forward, PoolCache, PoolKind, PoolLayer};
pub use tensor::{ImageBatch, ImageShape, Tensor};
