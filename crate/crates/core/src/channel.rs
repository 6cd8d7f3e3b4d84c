//! MIMO channel generation, mobility, and noisy forward/backward transmission.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clinalg::{random_complex_gaussian, Complex, ComplexMatrix};
use crate::error::{invalid, Error, Result};

/// EMA decay of the received-signal power tracker.
pub const POWER_EMA_DECAY: f64 = 0.9;

/// Multipath geometry: number of paths and the range of path gain magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub n_paths: usize,
    pub gain_low: f64,
    pub gain_high: f64,
}

impl Default for PathParams {
    fn default() -> Self {
        Self {
            n_paths: 8,
            gain_low: 0.5,
            gain_high: 1.5,
        }
    }
}

/// One drawn propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex,
    pub arrival: f64,
    pub departure: f64,
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(invalid("n_paths must be >= 1"));
        }
        if !(self.gain_low >= 0.0 && self.gain_low <= self.gain_high && self.gain_high.is_finite()) {
            return Err(invalid(format!(
                "gain range ({}, {}) is not an ordered non-negative interval",
                self.gain_low, self.gain_high
            )));
        }
        Ok(())
    }

    /// Magnitude, gain phase, arrival and departure angles are independent uniforms.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Path> {
        (0..self.n_paths)
            .map(|_| {
                let mag = if self.gain_high > self.gain_low {
                    rng.random_range(self.gain_low..=self.gain_high)
                } else {
                    self.gain_low
                };
                let phase = rng.random_range(-PI..=PI);
                let arrival = rng.random_range(-PI..=PI);
                let departure = rng.random_range(-PI..=PI);
                Path {
                    gain: Complex::from_polar(mag, phase),
                    arrival,
                    departure,
                }
            })
            .collect()
    }
}

/// Uniform linear array response: entry `m` is `e^{j·m·angle}`.
pub fn steering(n_antennas: usize, angle: f64) -> Result<ComplexMatrix> {
    if n_antennas == 0 {
        return Err(invalid("steering vector needs at least one antenna"));
    }
    Ok(ComplexMatrix::column(
        (0..n_antennas)
            .map(|m| Complex::from_polar(1.0, m as f64 * angle))
            .collect(),
    ))
}

/// `H = Σ a · conj(a_r(θ)) · a_t(φ)ᵀ` over the given paths.
pub fn channel_from_paths(paths: &[Path], n_t: usize, n_r: usize) -> Result<ComplexMatrix> {
    let mut h = ComplexMatrix::zeros(n_r, n_t);
    for path in paths {
        let rx = steering(n_r, path.arrival)?;
        let tx = steering(n_t, path.departure)?;
        for i in 0..n_r {
            let left = path.gain * rx[(i, 0)].conj();
            for j in 0..n_t {
                h[(i, j)] += left * tx[(j, 0)];
            }
        }
    }
    Ok(h)
}

/// Block-fading mobility: `H ← (1−ρ)H + ρH̃` every `update_interval` batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub rho: f64,
    pub update_interval: usize,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            rho: 0.0,
            update_interval: 50,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(invalid(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if self.update_interval == 0 {
            return Err(invalid("update_interval must be >= 1"));
        }
        Ok(())
    }
}

/// Received energy split into signal and noise, for measuring the realized SNR.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkStats {
    pub signal_energy: f64,
    pub noise_energy: f64,
}

impl LinkStats {
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.signal_energy / self.noise_energy).log10()
    }

    pub fn merge(&mut self, other: &LinkStats) {
        self.signal_energy += other.signal_energy;
        self.noise_energy += other.noise_energy;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelState {
    pub h: ComplexMatrix,
    pub nominal_rank: usize,
    pub noise_variance: f64,
    /// Running estimate of per-antenna received signal power; `None` until seeded.
    pub signal_power_ema: Option<f64>,
    /// When set, `noise_variance` tracks the EMA so the received SNR stays at this value.
    pub target_snr_db: Option<f64>,
    #[serde(skip)]
    stats: LinkStats,
}

impl ChannelState {
    pub fn new(h: ComplexMatrix, nominal_rank: usize) -> Self {
        Self {
            h,
            nominal_rank,
            noise_variance: 0.0,
            signal_power_ema: None,
            target_snr_db: None,
            stats: LinkStats::default(),
        }
    }

    pub fn n_t(&self) -> usize {
        self.h.cols()
    }

    pub fn n_r(&self) -> usize {
        self.h.rows()
    }

    pub fn with_noise_variance(mut self, noise_variance: f64) -> Self {
        self.noise_variance = noise_variance;
        self
    }

    pub fn with_target_snr(mut self, snr_db: Option<f64>) -> Self {
        self.target_snr_db = snr_db;
        self
    }

    /// Sets `σ² = ema / 10^(snr/10)`.
    pub fn calibrate_noise(&mut self, snr_db: f64) -> Result<()> {
        match self.signal_power_ema {
            Some(p) if p > 0.0 && p.is_finite() => {
                self.noise_variance = p / 10f64.powf(snr_db / 10.0);
                Ok(())
            }
            other => Err(invalid(format!(
                "cannot calibrate noise from signal power estimate {other:?}"
            ))),
        }
    }

    fn observe_power(&mut self, per_antenna_power: f64) {
        self.signal_power_ema = Some(match self.signal_power_ema {
            None => per_antenna_power,
            Some(ema) => POWER_EMA_DECAY * ema + (1.0 - POWER_EMA_DECAY) * per_antenna_power,
        });
    }

    /// Forward use of the link: `H·x + n` for every column of `x`.
    ///
    /// The whole block counts as one transmission for the power EMA; the
    /// observed power is the mean per-antenna power over its columns.
    pub fn transmit_forward<R: Rng + ?Sized>(
        &mut self,
        x: &ComplexMatrix,
        rng: &mut R,
    ) -> Result<ComplexMatrix> {
        if x.rows() != self.n_t() {
            return Err(Error::Shape {
                op: "transmit_forward",
                left: self.h.shape(),
                right: x.shape(),
            });
        }
        let mut y = self.h.matmul(x)?;
        let signal = y.norm_sqr();
        if x.cols() > 0 {
            self.observe_power(signal / (self.n_r() * x.cols()) as f64);
        }
        if let Some(snr) = self.target_snr_db {
            if self.signal_power_ema.is_some_and(|p| p > 0.0) {
                self.calibrate_noise(snr)?;
            }
        }
        let noise = self.add_noise(&mut y, rng)?;
        self.stats.signal_energy += signal;
        self.stats.noise_energy += noise;
        Ok(y)
    }

    /// Reverse use of the link: `Hᵀ·s + ñ` for every column of `s`, with the
    /// forward noise variance.
    pub fn transmit_backward<R: Rng + ?Sized>(
        &self,
        s: &ComplexMatrix,
        rng: &mut R,
    ) -> Result<ComplexMatrix> {
        if s.rows() != self.n_r() {
            return Err(Error::Shape {
                op: "transmit_backward",
                left: (self.n_t(), self.n_r()),
                right: s.shape(),
            });
        }
        let mut out = self.h.transpose().matmul(s)?;
        self.add_noise(&mut out, rng)?;
        Ok(out)
    }

    fn add_noise<R: Rng + ?Sized>(&self, y: &mut ComplexMatrix, rng: &mut R) -> Result<f64> {
        if self.noise_variance == 0.0 {
            return Ok(0.0);
        }
        let n = random_complex_gaussian(y.rows(), y.cols(), self.noise_variance, rng)?;
        y.add_assign(&n)?;
        Ok(n.norm_sqr())
    }

    /// Returns and clears the energy counters accumulated by forward transmissions.
    pub fn take_stats(&mut self) -> LinkStats {
        std::mem::take(&mut self.stats)
    }

    /// One mobility step with a fresh channel draw.
    pub fn evolved<R: Rng + ?Sized>(
        &self,
        config: &MobilityConfig,
        params: &PathParams,
        rng: &mut R,
    ) -> Result<ChannelState> {
        let fresh = gen_channel(params, self.n_t(), self.n_r(), rng)?;
        Ok(self.mixed_with(&fresh.h, config.rho))
    }

    /// `(1−ρ)·H + ρ·H̃`, keeping every other field.
    pub fn mixed_with(&self, fresh: &ComplexMatrix, rho: f64) -> ChannelState {
        let mut next = self.clone();
        if rho == 0.0 {
            return next;
        }
        if rho == 1.0 {
            next.h = fresh.clone();
            return next;
        }
        for (h, f) in next.h.as_mut_slice().iter_mut().zip(fresh.as_slice()) {
            *h = *h * (1.0 - rho) + f * rho;
        }
        next
    }
}

/// Draws a multipath channel; the nominal rank defaults to the path count.
pub fn gen_channel<R: Rng + ?Sized>(
    params: &PathParams,
    n_t: usize,
    n_r: usize,
    rng: &mut R,
) -> Result<ChannelState> {
    params.validate()?;
    if n_t == 0 || n_r == 0 {
        return Err(invalid("antenna counts must be >= 1"));
    }
    let paths = params.draw(rng);
    let h = channel_from_paths(&paths, n_t, n_r)?;
    Ok(ChannelState::new(h, params.n_paths))
}
