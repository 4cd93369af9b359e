//! Decentralized model training over Markovian-switching communication graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: weight vectors, the strongly convex quadratic task, a small
//!   tanh MLP with hand-written backpropagation, losses and gradient noise.
//! * [`topology`]: undirected graphs, Laplacians, row-stochastic mixing
//!   matrices and the Markov switching schedule.
//! * [`secagg`]: Shamir sharing over a prime field, the fixed-point codec and
//!   a simulated multi-party secure summation with a message transcript.
//! * [`consensus`]: the round engines (learn-then-consensus, the swapped
//!   consensus-then-learn twin, FedAvg, centralized) and the convergence
//!   monitor.
//! * [`threats`]: weight poisoning, line interception and gradient-leakage
//!   reconstruction.
//! * [`harness`]: configuration, synthetic smart-meter data, k-means,
//!   experiment orchestration and report files.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root pin the `f64` instantiation used by the harness.

pub mod consensus;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod scalar;
pub mod secagg;
pub mod strategy;
pub mod streams;
pub mod threats;
pub mod topology;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use strategy::Strategy;

pub type WeightVector = numerics::WeightVector<f64>;
pub type QuadraticTask = numerics::QuadraticTask<f64>;
pub type MlpModel = numerics::MlpModel<f64>;
pub type Dataset = numerics::Dataset<f64>;
pub type NoiseModel = numerics::NoiseModel<f64>;
pub type Graph = topology::Graph<f64>;
pub type MixingMatrix = topology::MixingMatrix<f64>;
pub type MarkovSchedule = topology::MarkovSchedule<f64>;
pub type AgentState = consensus::AgentState<f64>;

pub type WeightVector32 = numerics::WeightVector<f32>;
pub type MlpModel32 = numerics::MlpModel<f32>;
