pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod kernel_extension;
pub mod linalg;
pub mod mds;
pub mod network;
pub mod persistence;
pub mod pipeline;
pub mod prototypes;
pub mod rng;
pub mod scalar;
pub mod target;

pub use error::{RfaeError, Result};
pub use scalar::Scalar;

pub type RfAe32 = pipeline::RfAe<f32>;
pub type RfAe64 = pipeline::RfAe<f64>;
pub type Mlp32 = network::NetworkWeights<f32>;
pub type Mlp64 = network::NetworkWeights<f64>;
