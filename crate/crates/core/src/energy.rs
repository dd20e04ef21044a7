//! Rotary-wing propulsion power and mission energy accounting.
//!
//! Default coefficients are those of the standard rotary-wing reference model
//! (blade profile 79.8563 W, induced 88.6279 W, tip speed 120 m/s, mean rotor
//! induced velocity 4.03 m/s, lumped parasite coefficient 0.018485 kg/m). They
//! are reference-derived, not tuned here, and can be overridden in the
//! scenario file.
//!
//! The induced-power radical is evaluated with `v_r^4` under `V^4`, which is the
//! dimensionally consistent form of the reference model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    /// Blade profile power in hover (W).
    pub p0: f64,
    /// Induced power in hover (W).
    pub p1: f64,
    /// Rotor blade tip speed (m/s).
    pub tip_speed: f64,
    /// Mean rotor induced velocity in hover (m/s).
    pub induced_velocity: f64,
    /// Lumped parasite coefficient multiplying `V^3 / 2` (kg/m).
    pub parasite: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            p0: 79.8563,
            p1: 88.6279,
            tip_speed: 120.0,
            induced_velocity: 4.03,
            parasite: 0.018485,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("power.p0", self.p0),
            ("power.p1", self.p1),
            ("power.tip_speed", self.tip_speed),
            ("power.induced_velocity", self.induced_velocity),
            ("power.parasite", self.parasite),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::scenario(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn blade_profile(&self, v: f64) -> f64 {
        self.p0 * (1.0 + 3.0 * v * v / (self.tip_speed * self.tip_speed))
    }

    pub fn induced(&self, v: f64) -> f64 {
        let vr2 = self.induced_velocity * self.induced_velocity;
        let v2 = v * v;
        let inner = (1.0 + v2 * v2 / (4.0 * vr2 * vr2)).sqrt() - v2 / (2.0 * vr2);
        self.p1 * inner.max(0.0).sqrt()
    }

    pub fn parasite_power(&self, v: f64) -> f64 {
        0.5 * self.parasite * v * v * v
    }

    /// Propulsion power (W) at forward speed `v`.
    pub fn propulsion_power(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "speed must be non-negative, got {v}"
            )));
        }
        Ok(self.blade_profile(v) + self.induced(v) + self.parasite_power(v))
    }
}

/// Energy (J) of flying the per-slot speed profile.
pub fn mission_energy(speeds: &[f64], params: &PowerParams, slot_duration: f64) -> Result<f64> {
    speeds.iter().try_fold(0.0, |acc, &v| {
        Ok(acc + params.propulsion_power(v)? * slot_duration)
    })
}

/// Whether `energy` fits the budget, with the remaining joules (negative when
/// over budget).
pub fn check_budget(energy: f64, budget: f64) -> (bool, f64) {
    (energy <= budget, budget - energy)
}
