//! Differentiable operations over graph nodes.

pub mod act;
pub mod conv2;
pub mod conv3;
pub mod dense;
pub(crate) mod gemm;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod shape;
pub mod temporal;

pub use act::{elu, relu, Activation};
pub use conv2::conv2d;
pub use conv3::conv3d;
pub use dense::linear;
pub use loss::{cross_entropy, softmax_cross_entropy, softmax_rows};
pub use norm::{batchnorm_eval, batchnorm_train};
pub use pool::{maxpool2d, maxpool3d};
pub use shape::{add, concat_channels, fold_frames, frame_mean, global_avg_pool, probe_sum, reshape, subsample_temporal};
pub use temporal::frame_diff;
