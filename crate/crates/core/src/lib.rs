//! Energy-minimal computation offloading for multi-antenna NOMA uplinks.

pub mod benchmarks;
pub mod binary;
pub mod channel;
pub mod convex;
pub mod error;
pub mod linalg;
pub mod model;
pub mod partial;
pub mod rate_region;
pub mod scalar;
pub mod scenario;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ChannelVector = channel::ChannelVector<f64>;
pub type SystemConfig = model::SystemConfig<f64>;
pub type UserProfile = model::UserProfile<f64>;
pub type PowerVector = rate_region::PowerVector<f64>;
pub type RateVector = rate_region::RateVector<f64>;
pub type RateSchedule = rate_region::RateSchedule<f64>;
pub type DualVector = partial::DualVector<f64>;
pub type OffloadPartition = partial::OffloadPartition<f64>;
pub type P1Settings = partial::P1Settings<f64>;
pub type OffloadSolution = partial::OffloadSolution<f64>;
pub type BinarySettings = binary::BinarySettings<f64>;
pub type BinarySolution = binary::BinarySolution<f64>;
pub type OmaSolution = benchmarks::OmaSolution<f64>;
