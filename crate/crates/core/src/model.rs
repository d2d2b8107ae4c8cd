//! System-wide constants and per-user computation profiles.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelVector;
use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Block timing, bandwidth and receiver size shared by all users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SystemConfig<T> {
    /// Latency budget `T` for finishing every task (s).
    pub block_length: T,
    /// Uplink window `T̃ ≤ T` available for offloading (s).
    pub offload_window: T,
    /// Offloading bandwidth `B` (Hz).
    pub bandwidth: T,
    /// Base-station antenna count `N`.
    pub antenna_count: usize,
}

impl<T: Scalar> SystemConfig<T> {
    pub fn new(
        block_length: T,
        offload_window: T,
        bandwidth: T,
        antenna_count: usize,
    ) -> Result<Self> {
        if !(offload_window > T::zero() && offload_window <= block_length) {
            return Err(domain("offload window must satisfy 0 < T̃ ≤ T"));
        }
        if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
            return Err(domain("bandwidth must be positive"));
        }
        if antenna_count == 0 {
            return Err(domain("antenna count must be at least one"));
        }
        Ok(Self {
            block_length,
            offload_window,
            bandwidth,
            antenna_count,
        })
    }

    /// `T̃ = ratio · T`.
    pub fn with_window_ratio(
        block_length: T,
        ratio: T,
        bandwidth: T,
        antenna_count: usize,
    ) -> Result<Self> {
        Self::new(block_length, block_length * ratio, bandwidth, antenna_count)
    }
}

/// One user's task and hardware description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct UserProfile<T> {
    /// Task size `L_k` (bits).
    pub task_bits: T,
    /// CPU cycles per bit `C_k`.
    pub cycles_per_bit: T,
    /// Effective switched capacitance `ζ_k`.
    pub capacitance: T,
    /// Energy weight `α_k ≥ 0`.
    pub weight: T,
    pub channel: ChannelVector<T>,
}

impl<T: Scalar> UserProfile<T> {
    pub fn new(
        task_bits: T,
        cycles_per_bit: T,
        capacitance: T,
        weight: T,
        channel: ChannelVector<T>,
    ) -> Result<Self> {
        if !(task_bits >= T::zero()) || !task_bits.is_finite() {
            return Err(domain("task size must be non-negative"));
        }
        if !(cycles_per_bit > T::zero()) {
            return Err(domain("cycles per bit must be positive"));
        }
        if !(capacitance > T::zero()) {
            return Err(domain("capacitance coefficient must be positive"));
        }
        if !(weight >= T::zero()) || !weight.is_finite() {
            return Err(domain("energy weight must be non-negative"));
        }
        Ok(Self {
            task_bits,
            cycles_per_bit,
            capacitance,
            weight,
            channel,
        })
    }

    /// `ζ C³`, the cubic local-energy coefficient per bit³·s².
    pub fn cubic_coefficient(&self) -> T {
        self.capacitance * self.cycles_per_bit.powi(3)
    }
}

/// Checks that every channel matches the configured antenna count.
pub(crate) fn check_profiles<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
) -> Result<()> {
    for (k, u) in profiles.iter().enumerate() {
        if u.channel.dim() != config.antenna_count {
            return Err(domain(format!(
                "user {k}: channel has {} entries but the base station has {} antennas",
                u.channel.dim(),
                config.antenna_count
            )));
        }
    }
    Ok(())
}
