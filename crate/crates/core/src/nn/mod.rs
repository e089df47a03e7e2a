//! Layers, the graph executor, and gradient checking.

pub mod gradcheck;
pub mod graph;
pub mod layers;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use graph::{ConvLayer, DenseLayer, Graph, GraphBuilder, LossGrads, Mode, Node, NodeId, Op, Params, Trace};
pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout_forward, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward, same_padding, softmax_cross_entropy, ConvParams,
    DenseParams, DropoutMask, Padding, PoolIndex,
};
