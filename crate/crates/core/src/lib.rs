//! Mobile edge computing simulator with digital-twin (DT) estimates and an
//! advantage actor-critic offloading agent.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix `f64`.

pub mod a2c;
pub mod baseline;
pub mod channel;
pub mod config;
pub mod cost;
pub mod env;
pub mod error;
pub mod model;
pub mod nn;
pub mod scalar;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Scenario = model::Scenario<f64>;
pub type EdgeServer = model::EdgeServer<f64>;
pub type MobileUser = model::MobileUser<f64>;
pub type Task = model::Task<f64>;
pub type Point = model::Point<f64>;
pub type CostBreakdown = cost::CostBreakdown<f64>;
pub type Network = nn::Network<f64>;
pub type MecEnv = env::MecEnv<f64>;
pub type Benchmark = baseline::Benchmark<f64>;
pub type MdpState = env::MdpState<f64>;
pub type StepOutcome = env::StepOutcome<f64>;
pub type TrainReport = a2c::TrainReport<f64>;
