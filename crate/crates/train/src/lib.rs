//! Fully connected networks trained with gradient descent under MSE, with the
//! top Hessian eigenvalue (sharpness) tracked along the way.
//!
//! Networks are bias-free, linear or ReLU, in standard or interpolating
//! parameterization. Gradients are exact; Hessian-vector products are central
//! differences of the gradient and feed a power iteration. Everything is
//! `f64`.

pub mod curvature;
pub mod datasets;
pub mod error;
pub mod network;
pub mod trainer;

pub use curvature::{hvp, sharpness, PowerIteration, SharpnessEstimate};
pub use datasets::Dataset;
pub use error::{Error, Result};
pub use network::{Activation, NetworkConfig, Parameterization, Params};
pub use trainer::{train, LearningRate, TrainLog, TrainOptions};
