//! Random instances with the default simulation parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, trial_rng, PathLossModel};
use crate::error::Result;
use crate::model::{SystemConfig, UserProfile};
use crate::scalar::Scalar;

/// Parameters shared by every user of a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub users: usize,
    pub antennas: usize,
    pub task_bits: f64,
    pub block_length: f64,
    /// `T̃ / T`.
    pub window_ratio: f64,
    pub bandwidth: f64,
    pub noise_psd_dbm: f64,
    pub reference_gain_db: f64,
    pub reference_distance: f64,
    pub path_loss_exponent: f64,
    pub cycles_per_bit: f64,
    pub capacitance: f64,
    pub weight: f64,
    pub min_distance: f64,
    pub max_distance: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            users: 4,
            antennas: 4,
            task_bits: 6e5,
            block_length: 0.3,
            window_ratio: 0.9,
            bandwidth: 2e6,
            noise_psd_dbm: -174.0,
            reference_gain_db: -40.0,
            reference_distance: 1.0,
            path_loss_exponent: 3.5,
            cycles_per_bit: 4e3,
            capacitance: 1e-28,
            weight: 1.0,
            min_distance: 100.0,
            max_distance: 400.0,
        }
    }
}

impl Scenario {
    pub fn path_loss(&self) -> Result<PathLossModel> {
        PathLossModel::new(
            self.reference_gain_db,
            self.reference_distance,
            self.path_loss_exponent,
            self.noise_psd_dbm,
            self.bandwidth,
        )
    }

    pub fn config<T: Scalar>(&self) -> Result<SystemConfig<T>> {
        SystemConfig::with_window_ratio(
            T::lit(self.block_length),
            T::lit(self.window_ratio),
            T::lit(self.bandwidth),
            self.antennas,
        )
    }

    /// Distances and channels for trial `stream` of the experiment `seed`.
    pub fn draw<T: Scalar>(&self, seed: u64, stream: u64) -> Result<Vec<UserProfile<T>>> {
        let model = self.path_loss()?;
        let mut rng = trial_rng(seed, stream);
        (0..self.users)
            .map(|_| {
                let d = if self.max_distance > self.min_distance {
                    rng.random_range(self.min_distance..self.max_distance)
                } else {
                    self.min_distance
                };
                let h = draw_channel(&model, d, self.antennas, &mut rng)?;
                UserProfile::new(
                    T::lit(self.task_bits),
                    T::lit(self.cycles_per_bit),
                    T::lit(self.capacitance),
                    T::lit(self.weight),
                    h,
                )
            })
            .collect()
    }

    /// Profiles and configuration in one call.
    pub fn instance<T: Scalar>(
        &self,
        seed: u64,
        stream: u64,
    ) -> Result<(Vec<UserProfile<T>>, SystemConfig<T>)> {
        Ok((self.draw(seed, stream)?, self.config()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_reproducible_and_streams_differ() {
        let s = Scenario::default();
        let a: Vec<UserProfile<f64>> = s.draw(7, 3).unwrap();
        let b: Vec<UserProfile<f64>> = s.draw(7, 3).unwrap();
        let c: Vec<UserProfile<f64>> = s.draw(7, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|u| u.channel.dim() == 4));
    }

    #[test]
    fn fixed_distance_when_range_collapses() {
        let s = Scenario {
            min_distance: 250.0,
            max_distance: 250.0,
            antennas: 1,
            users: 1,
            ..Scenario::default()
        };
        let u: Vec<UserProfile<f64>> = s.draw(0, 0).unwrap();
        assert!(u[0].channel.gain() > 0.0);
    }
}
