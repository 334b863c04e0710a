//! A self-contained micro deep-learning library for video action
//! recognition, built around four mechanisms: the temporal channel shift, a
//! two-pathway slow/fast 3D network with lateral fusion, factored (2+1)D
//! convolution, and residual-frame inputs. Everything runs on f64 with a
//! finite-difference gradient checker as the correctness oracle, plus a
//! synthetic motion dataset, a staged training loop, ten-clip evaluation with
//! test-time augmentation, and pre-softmax logit ensembling.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod models;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod video;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use layers::Mode;
pub use models::{build_model, InputMode, Model, ModelConfig, ModelKind};
pub use optim::{OptimConfig, ParamStore};
pub use tensor::Tensor;
pub use video::{Frac, ShiftSpec};
