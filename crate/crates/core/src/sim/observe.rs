//! Observation channel: proprioceptive flange pose and chopstick aperture
//! plus the tracked ball position, optionally delayed and noise-corrupted.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::world::WorldState;
use crate::kinematics::KinematicModel;
use crate::rng::ChaCha12Rng;

/// What the policy sees: 3 + 4 + 3 + 1 = 11 numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub ee_pos: Vector3<f64>,
    pub ee_quat: UnitQuaternion<f64>,
    pub obj_com: Vector3<f64>,
    pub aperture: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; 11] {
        let q = self.ee_quat.quaternion();
        [
            self.ee_pos.x,
            self.ee_pos.y,
            self.ee_pos.z,
            q.w,
            q.i,
            q.j,
            q.k,
            self.obj_com.x,
            self.obj_com.y,
            self.obj_com.z,
            self.aperture,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    /// Per-axis Gaussian noise on the tracked object position (m).
    pub noise_sigma: f64,
    /// Constant offset on the tracked object position (m).
    pub noise_bias: Vector3<f64>,
    /// Delay in low-level ticks.
    pub latency_steps: usize,
}

impl ObservationModel {
    /// Noiseless, unbiased, zero-latency: observation equals ground truth.
    pub fn exact() -> Self {
        ObservationModel {
            noise_sigma: 0.0,
            noise_bias: Vector3::zeros(),
            latency_steps: 0,
        }
    }

    pub fn noise(sigma: f64) -> Self {
        ObservationModel { noise_sigma: sigma, ..Self::exact() }
    }

    pub fn latency(ticks: usize) -> Self {
        ObservationModel { latency_steps: ticks, ..Self::exact() }
    }
}

/// Ring of past ground-truth observations, one per low-level tick.
#[derive(Debug, Clone)]
pub struct ObsRing {
    buf: VecDeque<Observation>,
    cap: usize,
    /// Times an observation was requested further back than the history held.
    pub underruns: u64,
}

impl ObsRing {
    pub fn new(cap: usize) -> Self {
        ObsRing { buf: VecDeque::with_capacity(cap + 1), cap: cap.max(1), underruns: 0 }
    }

    pub fn push(&mut self, obs: Observation) {
        self.buf.push_back(obs);
        while self.buf.len() > self.cap {
            self.buf.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

/// The true observation of the current state.
pub fn ground_truth(world: &WorldState, model: &KinematicModel) -> Observation {
    let flange = model.forward_kinematics(&world.joint_pos);
    Observation {
        ee_pos: flange.translation.vector,
        ee_quat: flange.rotation,
        obj_com: world.ball_pos,
        aperture: world.aperture,
    }
}

/// Reads the observation `latency_steps` ticks back and corrupts the object
/// channel with bias plus per-axis Gaussian noise. Proprioceptive fields
/// pass through untouched. If the ring is too short the oldest entry is
/// returned and the underrun counter bumped.
pub fn observe(
    ring: &mut ObsRing,
    obs_model: &ObservationModel,
    rng: &mut ChaCha12Rng,
) -> Observation {
    assert!(!ring.is_empty(), "observe before any ground-truth push");
    let want = obs_model.latency_steps;
    let idx = if want + 1 > ring.buf.len() {
        ring.underruns += 1;
        0
    } else {
        ring.buf.len() - 1 - want
    };
    let mut obs = ring.buf[idx];
    obs.obj_com += obs_model.noise_bias;
    if obs_model.noise_sigma > 0.0 {
        for i in 0..3 {
            obs.obj_com[i] += gaussian(rng) * obs_model.noise_sigma;
        }
    }
    obs
}

/// Standard normal via Box-Muller; two uniforms per draw keeps the stream
/// layout independent of rejection behavior.
fn gaussian(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
