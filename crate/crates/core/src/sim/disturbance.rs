//! Horizontal force-pulse disturbance, the stand-in for a motor dragging
//! the string: periodic pulses of configurable strength with a fresh random
//! horizontal direction per pulse.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::rng::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSchedule {
    /// Strength as a percentage of `max_force`, 0..=100.
    pub level: u32,
    pub pulse_period: f64,
    pub pulse_duration: f64,
    pub direction_seed: u64,
    pub max_force: f64,
}

impl DisturbanceSchedule {
    pub fn off() -> Self {
        DisturbanceSchedule {
            level: 0,
            pulse_period: 2.0,
            pulse_duration: 0.2,
            direction_seed: 0,
            max_force: 0.5,
        }
    }

    pub fn level(level: u32, seed: u64) -> Self {
        assert!(level <= 100, "disturbance level must be in 0..=100");
        DisturbanceSchedule { level, direction_seed: seed, ..Self::off() }
    }
}

/// Force at time `t`: `(level/100) * max_force` in a per-pulse random
/// horizontal direction inside each pulse window, zero between pulses.
/// A pure function of (schedule, t).
pub fn disturbance_force(schedule: &DisturbanceSchedule, t: f64) -> Vector3<f64> {
    if schedule.level == 0 || t < 0.0 {
        return Vector3::zeros();
    }
    let k = (t / schedule.pulse_period).floor();
    let phase = t - k * schedule.pulse_period;
    if phase >= schedule.pulse_duration {
        return Vector3::zeros();
    }
    let mut rng = ChaCha12Rng::seed_from_u64(
        schedule
            .direction_seed
            .wrapping_add((k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
    );
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mag = schedule.level as f64 / 100.0 * schedule.max_force;
    Vector3::new(angle.cos() * mag, angle.sin() * mag, 0.0)
}
