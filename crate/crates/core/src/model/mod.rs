//! Forward pass: strided convolution with ReLU, feature-map stacking,
//! deep bidirectional peephole LSTM and a truncated linear output layer.

mod conv;
mod forward;
mod lstm;
mod output;
mod params;

pub use conv::{conv_forward, pad_time, stack_features, FeatureTensor};
pub use forward::{forward, forward_train, DirectionCache, ForwardCache, LayerCache};
pub use lstm::{bilstm_forward, lstm_cell_step, CELL_CLIP};
pub use output::output_forward;
pub use params::{
    Architecture, ConvParams, LstmDirection, LstmLayerParams, ModelParams, OutputParams, Tensor,
    TensorMut,
};

pub(crate) use conv::{conv_backward, unstack_gradient};
pub(crate) use lstm::direction_backward;
