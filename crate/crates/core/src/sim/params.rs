//! Physical parameters, domain randomization, and the hidden-parameter
//! "real twin" that stands in for hardware during fine-tuning.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::observe::ObservationModel;
use crate::rng::ChaCha12Rng;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("{field} must be strictly positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("ball radius {radius} exceeds string_length/4 = {limit}")]
    BallTooLarge { radius: f64, limit: f64 },
    #[error("randomization interval for {field} is invalid: [{lo}, {hi}] must be positive and contain 1")]
    BadInterval { field: &'static str, lo: f64, hi: f64 },
}

/// PD gains and torque limit for one actuated joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    pub tau_max: f64,
}

/// The full randomizable parameter vector of the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    /// Gravitational acceleration magnitude, acting along -z (m/s^2).
    pub gravity: f64,
    pub ball_mass: f64,
    pub ball_radius: f64,
    pub string_length: f64,
    pub string_anchor: Vector3<f64>,
    /// Linear velocity damping on the free ball (1/s).
    pub linear_damping: f64,
    /// Tip-ball friction coefficient gating grasp slip.
    pub friction_mu: f64,
    /// Per-joint PD gains; index 6 is the chopstick joint.
    pub pd_gains: [PdGains; 7],
    /// Viscous damping on arm joints (N.m.s/rad, unit joint inertia).
    pub joint_damping: f64,
    /// Low-level integration step (s).
    pub dt_low: f64,
    /// Tip-to-ball distance slack that still counts as contact (m).
    pub contact_tol: f64,
    /// Minimum squeeze torque for the grasp to latch (N.m).
    pub tau_min: f64,
    /// Extra tip separation beyond the ball diameter that releases (m).
    pub release_slack: f64,
}

impl PhysicsParams {
    pub fn default_desk() -> Self {
        let arm = PdGains { kp: 400.0, kd: 40.0, tau_max: 20.0 };
        let chop = PdGains { kp: 200.0, kd: 25.0, tau_max: 0.5 };
        PhysicsParams {
            gravity: 9.81,
            ball_mass: 0.005,
            ball_radius: 0.0075,
            string_length: 0.30,
            string_anchor: Vector3::new(0.35, 0.0, 0.35),
            linear_damping: 0.05,
            friction_mu: 0.6,
            pd_gains: [arm, arm, arm, arm, arm, arm, chop],
            joint_damping: 1.0,
            dt_low: 0.001,
            contact_tol: 0.001,
            tau_min: 0.01,
            release_slack: 0.002,
        }
    }

    /// Ball rest position: straight below the anchor at string length.
    pub fn equilibrium(&self) -> Vector3<f64> {
        self.string_anchor - Vector3::new(0.0, 0.0, self.string_length)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positives = [
            ("gravity", self.gravity),
            ("ball_mass", self.ball_mass),
            ("ball_radius", self.ball_radius),
            ("string_length", self.string_length),
            ("dt_low", self.dt_low),
            ("contact_tol", self.contact_tol),
            ("tau_min", self.tau_min),
            ("release_slack", self.release_slack),
        ];
        for (field, value) in positives {
            if !(value > 0.0) {
                return Err(ParamError::NonPositive { field, value });
            }
        }
        for g in &self.pd_gains {
            if !(g.kp > 0.0) {
                return Err(ParamError::NonPositive { field: "kp", value: g.kp });
            }
            if !(g.kd > 0.0) {
                return Err(ParamError::NonPositive { field: "kd", value: g.kd });
            }
            if !(g.tau_max > 0.0) {
                return Err(ParamError::NonPositive { field: "tau_max", value: g.tau_max });
            }
        }
        if self.ball_radius > self.string_length / 4.0 {
            return Err(ParamError::BallTooLarge {
                radius: self.ball_radius,
                limit: self.string_length / 4.0,
            });
        }
        Ok(())
    }
}

/// Multiplicative randomization intervals, each containing 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizeRanges {
    pub ball_mass: (f64, f64),
    pub ball_radius: (f64, f64),
    pub string_length: (f64, f64),
    pub linear_damping: (f64, f64),
    pub friction_mu: (f64, f64),
    pub joint_damping: (f64, f64),
    pub kp: (f64, f64),
    pub kd: (f64, f64),
}

impl Default for RandomizeRanges {
    fn default() -> Self {
        RandomizeRanges {
            ball_mass: (0.7, 1.4),
            ball_radius: (0.95, 1.05),
            string_length: (0.93, 1.07),
            linear_damping: (0.5, 2.0),
            friction_mu: (0.7, 1.4),
            joint_damping: (0.7, 1.4),
            kp: (0.8, 1.25),
            kd: (0.8, 1.25),
        }
    }
}

impl RandomizeRanges {
    /// Degenerate ranges: randomization disabled.
    pub fn identity() -> Self {
        RandomizeRanges {
            ball_mass: (1.0, 1.0),
            ball_radius: (1.0, 1.0),
            string_length: (1.0, 1.0),
            linear_damping: (1.0, 1.0),
            friction_mu: (1.0, 1.0),
            joint_damping: (1.0, 1.0),
            kp: (1.0, 1.0),
            kd: (1.0, 1.0),
        }
    }
}

fn check_interval(field: &'static str, (lo, hi): (f64, f64)) -> Result<(), ParamError> {
    if !(lo > 0.0) || !(hi >= lo) || lo > 1.0 || hi < 1.0 {
        return Err(ParamError::BadInterval { field, lo, hi });
    }
    Ok(())
}

fn log_uniform(rng: &mut ChaCha12Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

/// Samples a parameter set with each randomized field drawn log-uniformly
/// within its multiplicative interval around the nominal value.
pub fn randomize(
    nominal: &PhysicsParams,
    ranges: &RandomizeRanges,
    rng: &mut ChaCha12Rng,
) -> Result<PhysicsParams, ParamError> {
    check_interval("ball_mass", ranges.ball_mass)?;
    check_interval("ball_radius", ranges.ball_radius)?;
    check_interval("string_length", ranges.string_length)?;
    check_interval("linear_damping", ranges.linear_damping)?;
    check_interval("friction_mu", ranges.friction_mu)?;
    check_interval("joint_damping", ranges.joint_damping)?;
    check_interval("kp", ranges.kp)?;
    check_interval("kd", ranges.kd)?;

    let mut p = nominal.clone();
    p.ball_mass *= log_uniform(rng, ranges.ball_mass);
    p.ball_radius *= log_uniform(rng, ranges.ball_radius);
    p.string_length *= log_uniform(rng, ranges.string_length);
    p.linear_damping *= log_uniform(rng, ranges.linear_damping);
    p.friction_mu *= log_uniform(rng, ranges.friction_mu);
    p.joint_damping *= log_uniform(rng, ranges.joint_damping);
    let kp_f = log_uniform(rng, ranges.kp);
    let kd_f = log_uniform(rng, ranges.kd);
    for g in p.pd_gains.iter_mut() {
        g.kp *= kp_f;
        g.kd *= kd_f;
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwinMode {
    /// Hidden perturbation of dynamics, backlash, and observation noise.
    Hidden,
    /// No perturbation at all; for debugging the fine-tuning plumbing.
    Debug,
}

/// The fine-tuning target: perturbed dynamics the agent never gets to see,
/// plus joint backlash and an imperfect observation channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealTwin {
    pub params: PhysicsParams,
    pub backlash: [f64; 7],
    pub obs_model: ObservationModel,
    /// Multiplicative factors actually drawn, keyed by field, kept for
    /// post-hoc analysis; never fed to the agent.
    pub hidden_factors: Vec<(String, f64)>,
}

/// Draws a real twin around `nominal`: dynamic fields scaled log-uniformly
/// in [0.8, 1.25] (string length held within 5% so the scene geometry stays
/// sane), per-joint backlash in [0.002, 0.01] rad, observation noise of
/// 1 mm with 2 ticks latency.
pub fn make_real_twin(nominal: &PhysicsParams, mode: TwinMode, rng: &mut ChaCha12Rng) -> RealTwin {
    if mode == TwinMode::Debug {
        return RealTwin {
            params: nominal.clone(),
            backlash: [0.0; 7],
            obs_model: ObservationModel::exact(),
            hidden_factors: Vec::new(),
        };
    }
    let wide = (0.8, 1.25);
    let mut p = nominal.clone();
    let mut factors = Vec::new();
    let mut scale = |field: &str, value: &mut f64, range, rng: &mut ChaCha12Rng| {
        let f = log_uniform(rng, range);
        *value *= f;
        factors.push((field.to_string(), f));
    };
    scale("ball_mass", &mut p.ball_mass, wide, rng);
    scale("linear_damping", &mut p.linear_damping, wide, rng);
    scale("friction_mu", &mut p.friction_mu, wide, rng);
    scale("joint_damping", &mut p.joint_damping, wide, rng);
    scale("string_length", &mut p.string_length, (0.95, 1.05), rng);
    let kp_f = log_uniform(rng, wide);
    let kd_f = log_uniform(rng, wide);
    factors.push(("kp".to_string(), kp_f));
    factors.push(("kd".to_string(), kd_f));
    for g in p.pd_gains.iter_mut() {
        g.kp *= kp_f;
        g.kd *= kd_f;
    }
    let backlash: [f64; 7] = std::array::from_fn(|_| rng.gen_range(0.002..0.01));
    for (i, b) in backlash.iter().enumerate() {
        factors.push((format!("backlash_{i}"), *b));
    }
    RealTwin {
        params: p,
        backlash,
        obs_model: ObservationModel {
            noise_sigma: 0.001,
            noise_bias: Vector3::zeros(),
            latency_steps: 2,
        },
        hidden_factors: factors,
    }
}
