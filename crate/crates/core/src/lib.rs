//! Desk-scale dynamic fine-grasping testbed.
//!
//! A self-contained pipeline for grasping a ball swinging on a string with a
//! chopstick gripper:
//!
//! - [`sim`] — deterministic 1 kHz rigid-body world (ball on a unilateral
//!   string, PD-driven joints, disturbance pulses, noisy delayed observation),
//!   with domain randomization and a hidden-parameter "real twin" variant.
//! - [`kinematics`] — forward/inverse kinematics for the 6-DOF arm plus
//!   chopstick tips, backlash modeling and the calibration pipeline.
//! - [`nn`] — minimal dense network core with reverse-mode gradients,
//!   LayerNorm and Adam.
pub mod kinematics;
pub mod nn;
pub mod rng;
pub mod sim;
