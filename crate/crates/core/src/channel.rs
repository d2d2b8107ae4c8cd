//! Rayleigh-fading uplink channels with distance path loss, normalized so the
//! receiver noise has unit power.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`). A Monte Carlo run derives
//! one independent substream per trial with [`trial_rng`], so any single trial
//! can be regenerated from `(seed, stream)` alone.

use std::fmt::Write as _;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

/// Channel from one single-antenna user to the `N`-antenna base station, in
/// noise-normalized units (`z ~ CN(0, I)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ChannelVector<T> {
    entries: Vec<Complex<T>>,
}

impl<T: Scalar> ChannelVector<T> {
    pub fn new(entries: Vec<Complex<T>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(domain("channel vector must have at least one antenna"));
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(domain("channel entries must be finite"));
        }
        Ok(Self { entries })
    }

    /// Real-valued channel, convenient for tests and single-antenna setups.
    pub fn from_real(values: &[T]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Complex::new(x, T::zero())).collect())
    }

    pub fn entries(&self) -> &[Complex<T>] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    /// `‖h‖²`, the full receive-array gain.
    pub fn gain(&self) -> T {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            entries: self.entries.iter().map(|z| *z * factor).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ChannelVector<U> {
        ChannelVector {
            entries: self
                .entries
                .iter()
                .map(|z| Complex::new(U::lit(z.re.as_f64()), U::lit(z.im.as_f64())))
                .collect(),
        }
    }
}

/// Distance path loss plus receiver noise, stored in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    reference_gain: f64,
    reference_distance: f64,
    exponent: f64,
    noise_power_w: f64,
}

impl PathLossModel {
    /// Builds the model from the usual link-budget quantities. This is the
    /// only place where dB/dBm values are converted.
    pub fn new(
        reference_gain_db: f64,
        reference_distance: f64,
        exponent: f64,
        noise_psd_dbm_per_hz: f64,
        bandwidth_hz: f64,
    ) -> Result<Self> {
        if !(exponent > 0.0) {
            return Err(domain("path-loss exponent must be positive"));
        }
        if !(bandwidth_hz > 0.0) {
            return Err(domain("bandwidth must be positive"));
        }
        if !(reference_distance > 0.0) {
            return Err(domain("reference distance must be positive"));
        }
        let noise_psd_w = 10f64.powf(noise_psd_dbm_per_hz / 10.0) * 1e-3;
        Ok(Self {
            reference_gain: 10f64.powf(reference_gain_db / 10.0),
            reference_distance,
            exponent,
            noise_power_w: noise_psd_w * bandwidth_hz,
        })
    }

    /// Linear-unit constructor, mostly for tests.
    pub fn from_linear(
        reference_gain: f64,
        reference_distance: f64,
        exponent: f64,
        noise_power_w: f64,
    ) -> Result<Self> {
        if !(exponent > 0.0 && reference_distance > 0.0 && noise_power_w > 0.0) {
            return Err(domain("path-loss parameters must be positive"));
        }
        Ok(Self {
            reference_gain,
            reference_distance,
            exponent,
            noise_power_w,
        })
    }

    pub fn noise_power_w(&self) -> f64 {
        self.noise_power_w
    }

    /// Mean per-antenna gain `G0 (d/d0)^-θ / (N0 B)` after noise normalization.
    pub fn mean_gain(&self, distance: f64) -> f64 {
        self.reference_gain * (distance / self.reference_distance).powf(-self.exponent)
            / self.noise_power_w
    }
}

/// Independent ChaCha20 substream `stream` of the experiment seeded by `seed`.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `sqrt(G0 (d/d0)^-θ / (N0 B)) · h̄` with `h̄ ~ CN(0, I_N)`.
pub fn draw_channel<T: Scalar, R: Rng + ?Sized>(
    model: &PathLossModel,
    distance: f64,
    n_antennas: usize,
    rng: &mut R,
) -> Result<ChannelVector<T>> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(domain(format!("distance must be positive, got {distance}")));
    }
    if n_antennas == 0 {
        return Err(domain("antenna count must be at least one"));
    }
    let amp = model.mean_gain(distance).sqrt();
    // CN(0,1): independent real and imaginary parts with variance 1/2 each.
    let part = std::f64::consts::FRAC_1_SQRT_2 * amp;
    let entries = (0..n_antennas)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(T::lit(re * part), T::lit(im * part))
        })
        .collect();
    ChannelVector::new(entries)
}

/// Seeded convenience wrapper around [`draw_channel`].
pub fn draw_channel_seeded<T: Scalar>(
    model: &PathLossModel,
    distance: f64,
    n_antennas: usize,
    seed: u64,
) -> Result<ChannelVector<T>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    draw_channel(model, distance, n_antennas, &mut rng)
}

/// Writes channels as a text matrix: one user per row, `2N` columns holding
/// interleaved real and imaginary parts. Values use the shortest decimal form
/// that round-trips exactly.
pub fn write_channels<T: Scalar>(channels: &[ChannelVector<T>]) -> String {
    let mut out = String::new();
    let n = channels.first().map_or(0, |h| h.dim());
    let _ = writeln!(
        out,
        "# users={} antennas={} format=re,im interleaved",
        channels.len(),
        n
    );
    for h in channels {
        let row: Vec<String> = h
            .entries()
            .iter()
            .flat_map(|z| {
                [
                    format!("{:?}", z.re.as_f64()),
                    format!("{:?}", z.im.as_f64()),
                ]
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parses the format produced by [`write_channels`]. Blank lines and lines
/// starting with `#` are ignored; commas are accepted as separators.
pub fn read_channels<T: Scalar>(text: &str) -> Result<Vec<ChannelVector<T>>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("bad number {s:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.is_empty() || values.len() % 2 != 0 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected an even number of columns, found {}", values.len()),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("row has {} columns, previous rows {}", values.len(), w),
                })
            }
            _ => {}
        }
        let entries = values
            .chunks(2)
            .map(|p| Complex::new(T::lit(p[0]), T::lit(p[1])))
            .collect();
        rows.push(ChannelVector::new(entries).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}
