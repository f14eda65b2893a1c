//! Federated-learning simulation with trajectory-matched data synthesis.
//!
//! The crate simulates FedAvg/FedProx style training over non-IID client
//! partitions, distills the global model's early trajectory into a small
//! learnable dataset by differentiating through unrolled training, and uses
//! that dataset to finetune the aggregated model each round. A small theory
//! harness checks the expected convergence rate on strongly convex tasks.

pub mod blobs;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod fdiff;
pub mod federation;
pub mod idx;
pub mod mlp;
pub mod optim;
pub mod orchestration;
pub mod rng;
pub mod synthesis;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use expr::{evaluate, evaluate_many, grad, Bindings, Evaluator, Expr};
pub use fdiff::{finite_difference, max_relative_error};
pub use mlp::{DistanceKind, DistanceMetric, MlpSpec, ParamVector};
pub use rng::Rng;
pub use synthesis::{SynthConfig, SyntheticDataset, Trajectory};
pub use tensor::Tensor;
