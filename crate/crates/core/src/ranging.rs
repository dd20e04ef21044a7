//! Multiplicative log-normal range model induced by RSSI shadowing.
//!
//! A shadowing term `Psi ~ N(0, sigma_psi^2)` dB turns the true distance `d`
//! into a measured range `r = d * 10^(-Psi / (10 eta))`, so `ln r` is normal
//! with mean `ln d` and standard deviation `sigma_psi / (xi * eta)` where
//! `xi = 10 log10(e)`. RSSI values themselves are never materialized.

use std::f64::consts::{LOG10_E, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `10 * log10(e)`: converts natural-log units to decibels.
pub const XI: f64 = 10.0 * LOG10_E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangingParams {
    /// Path-loss exponent.
    pub eta: f64,
    /// Shadowing standard deviation in dB.
    pub sigma_psi: f64,
}

/// One range measurement taken by UAV `uav` of person `person` in slot `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSample {
    pub slot: u64,
    pub uav: usize,
    pub person: usize,
    pub value: f64,
}

impl RangingParams {
    pub fn new(eta: f64, sigma_psi: f64) -> Result<Self> {
        if !(eta > 0.0) || !(sigma_psi >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ranging parameters need eta > 0 and sigma_psi >= 0, got {eta}, {sigma_psi}"
            )));
        }
        Ok(Self { eta, sigma_psi })
    }

    /// Shadowing deviation in natural-log units, `sigma_psi / xi`.
    pub fn sigma(&self) -> f64 {
        self.sigma_psi / XI
    }

    /// Standard deviation of `ln(r / d)`.
    pub fn log_std(&self) -> f64 {
        self.sigma() / self.eta
    }

    /// Draws one range for true distance `d`.
    pub fn sample_range<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "true distance must be positive, got {d}"
            )));
        }
        let z: f64 = rng.sample(StandardNormal);
        Ok(d * (self.log_std() * z).exp())
    }

    /// Density of a measured range `r` given true distance `d`.
    pub fn range_pdf(&self, r: f64, d: f64) -> f64 {
        let s = self.log_std();
        if r <= 0.0 || d <= 0.0 {
            return 0.0;
        }
        let z = (r / d).ln();
        (-(z * z) / (2.0 * s * s)).exp() / (r * (2.0 * PI).sqrt() * s)
    }

    /// Magnitude of the mean ranging bias at distance `d`,
    /// `d * (exp(log_std^2 / 2) - 1)`.
    pub fn mean_range_error(&self, d: f64) -> f64 {
        let s = self.log_std();
        d * (0.5 * s * s).exp_m1()
    }

    /// The same quantity with the sign convention `d * (1 - exp(log_std^2 / 2))`,
    /// which is never positive. Kept for traces.
    pub fn signed_mean_range_error(&self, d: f64) -> f64 {
        -self.mean_range_error(d)
    }
}
