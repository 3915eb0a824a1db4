//! World state and the 1 kHz step: PD joint tracking, ball flight under the
//! unilateral string constraint, the pinch/squeeze aperture stop, and the
//! hysteretic grasp latch.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::PhysicsParams;
use crate::kinematics::KinematicModel;

/// Signals a parameter blow-up: some state field left the representable
/// range during integration.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("non-finite {field} after integration")]
pub struct SimFault {
    pub field: &'static str,
}

/// Complete simulator state.
///
/// `prev_ball_vel` and the warning counter are integration bookkeeping:
/// the former backs the slip check (acceleration demand on the grasp), the
/// latter counts degenerate string projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub joint_pos: [f64; 6],
    pub joint_vel: [f64; 6],
    pub aperture: f64,
    pub aperture_vel: f64,
    pub ball_pos: Vector3<f64>,
    pub ball_vel: Vector3<f64>,
    pub grasp_latched: bool,
    /// Torque pressing the moving stick into the pinch stop (N.m, >= 0).
    pub squeeze_torque: f64,
    pub sim_time: f64,
    pub prev_ball_vel: Vector3<f64>,
    pub degenerate_string_warnings: u64,
}

impl WorldState {
    /// Arm at the given joints, ball resting at the string equilibrium.
    pub fn at_rest(params: &PhysicsParams, joints: [f64; 6], aperture: f64) -> Self {
        WorldState {
            joint_pos: joints,
            joint_vel: [0.0; 6],
            aperture,
            aperture_vel: 0.0,
            ball_pos: params.equilibrium(),
            ball_vel: Vector3::zeros(),
            grasp_latched: false,
            squeeze_torque: 0.0,
            sim_time: 0.0,
            prev_ball_vel: Vector3::zeros(),
            degenerate_string_warnings: 0,
        }
    }

    fn check_finite(&self) -> Result<(), SimFault> {
        for v in self.joint_pos {
            if !v.is_finite() {
                return Err(SimFault { field: "joint_pos" });
            }
        }
        for v in self.joint_vel {
            if !v.is_finite() {
                return Err(SimFault { field: "joint_vel" });
            }
        }
        if !self.aperture.is_finite() {
            return Err(SimFault { field: "aperture" });
        }
        if !self.aperture_vel.is_finite() {
            return Err(SimFault { field: "aperture_vel" });
        }
        if !self.ball_pos.iter().all(|v| v.is_finite()) {
            return Err(SimFault { field: "ball_pos" });
        }
        if !self.ball_vel.iter().all(|v| v.is_finite()) {
            return Err(SimFault { field: "ball_vel" });
        }
        if !self.squeeze_torque.is_finite() {
            return Err(SimFault { field: "squeeze_torque" });
        }
        Ok(())
    }
}

/// Outcome tag of one string-constraint application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StringEvent {
    Slack,
    Taut,
    /// Ball exactly at the anchor: projection direction undefined.
    Degenerate,
}

/// Unilateral inextensible string: inside the sphere nothing happens; at or
/// beyond the radius the position is projected back onto the sphere and the
/// outward radial velocity component removed.
pub fn string_constraint(
    pos: Vector3<f64>,
    vel: Vector3<f64>,
    anchor: Vector3<f64>,
    length: f64,
) -> (Vector3<f64>, Vector3<f64>, StringEvent) {
    assert!(length > 0.0, "string length must be positive");
    let r = pos - anchor;
    let dist = r.norm();
    if dist == 0.0 {
        return (pos, Vector3::zeros(), StringEvent::Degenerate);
    }
    if dist < length {
        return (pos, vel, StringEvent::Slack);
    }
    let dir = r / dist;
    let projected = anchor + dir * length;
    let radial = vel.dot(&dir);
    let vel = if radial > 0.0 { vel - dir * radial } else { vel };
    (projected, vel, StringEvent::Taut)
}

/// Contact/pinch summary for the current configuration.
struct Pinch {
    fixed_contact: bool,
    opposing: bool,
    moving_dist: f64,
}

fn pinch_state(
    model: &KinematicModel,
    params: &PhysicsParams,
    q: &[f64; 6],
    aperture: f64,
    ball: &Vector3<f64>,
) -> Pinch {
    let (fixed, moving) = model.tip_positions(q, aperture);
    let fixed_contact = (fixed - ball).norm() <= params.ball_radius + params.contact_tol;
    let opposing = (fixed - ball).dot(&(moving - ball)) <= 0.0;
    Pinch { fixed_contact, opposing, moving_dist: (moving - ball).norm() }
}

/// Latch predicate: both tips on the ball surface on opposing sides with
/// enough squeeze.
fn latch_condition(
    model: &KinematicModel,
    params: &PhysicsParams,
    world: &WorldState,
) -> bool {
    let (fixed, moving) = model.tip_positions(&world.joint_pos, world.aperture);
    let reach = params.ball_radius + params.contact_tol;
    (fixed - world.ball_pos).norm() <= reach
        && (moving - world.ball_pos).norm() <= reach
        && (fixed - world.ball_pos).dot(&(moving - world.ball_pos)) <= 0.0
        && world.squeeze_torque >= params.tau_min
}

/// Geometric release predicate: the sticks opened wider than the ball plus
/// slack. Strict inequality keeps it disjoint from the latch condition,
/// whose widest admissible separation is `2 (radius + contact_tol)`.
fn open_release_condition(
    model: &KinematicModel,
    params: &PhysicsParams,
    aperture: f64,
) -> bool {
    model.chopsticks.separation(aperture) > 2.0 * params.ball_radius + params.release_slack
}

/// Grasp latch transition.
///
/// Unlatched worlds latch when the pinch geometry closes with at least
/// `tau_min` squeeze; latched worlds release when the aperture opens past
/// the ball, when holding the ball would need more friction than the
/// squeeze provides, or when the taut string yanks the ball out. Latch and
/// release are never evaluated against the same state twice, which makes
/// the latch hysteretic.
pub fn grasp_update(
    world: &WorldState,
    params: &PhysicsParams,
    model: &KinematicModel,
    disturbance: Vector3<f64>,
) -> WorldState {
    let mut next = world.clone();
    if !world.grasp_latched {
        if latch_condition(model, params, world) {
            next.grasp_latched = true;
            next.ball_pos = model.tip_midpoint(&world.joint_pos, world.aperture);
        }
        return next;
    }

    // Aperture release.
    if open_release_condition(model, params, world.aperture) {
        next.grasp_latched = false;
        return next;
    }
    // Slip release: required grip force exceeds the friction capacity of
    // the squeezed contacts. Newton on the attached ball:
    //   grip = m a - m g - F_dist
    let dt = params.dt_low;
    let accel = (world.ball_vel - world.prev_ball_vel) / dt;
    let gravity = Vector3::new(0.0, 0.0, -params.gravity);
    let demand =
        (params.ball_mass * (accel - gravity) - disturbance).norm();
    let moment_arm = model.chopsticks.stick.norm();
    let capacity = 2.0 * params.friction_mu * world.squeeze_torque / moment_arm;
    if demand > capacity {
        next.grasp_latched = false;
        return next;
    }
    // String yank: an inextensible string beats any grip.
    let taut_excess = (world.ball_pos - params.string_anchor).norm() - params.string_length;
    if taut_excess > 0.0 {
        next.grasp_latched = false;
        let (p, v, _) = string_constraint(
            world.ball_pos,
            world.ball_vel,
            params.string_anchor,
            params.string_length,
        );
        next.ball_pos = p;
        next.ball_vel = v;
    }
    next
}

/// Advances the world one low-level tick.
///
/// Order: PD-driven joints and aperture (with the pinch stop), ball flight
/// under gravity, damping and the disturbance force, string projection,
/// then the grasp latch transition. Deterministic given inputs.
pub fn step(
    world: &WorldState,
    params: &PhysicsParams,
    model: &KinematicModel,
    joint_targets: &[f64; 7],
    disturbance: Vector3<f64>,
) -> Result<WorldState, SimFault> {
    if joint_targets.iter().any(|v| !v.is_finite()) {
        return Err(SimFault { field: "joint_targets" });
    }
    let dt = params.dt_low;
    let mut next = world.clone();

    // Arm joints: PD torque, viscous damping, unit rotor inertia.
    for i in 0..6 {
        let g = &params.pd_gains[i];
        let tau = (g.kp * (joint_targets[i] - world.joint_pos[i]) - g.kd * world.joint_vel[i])
            .clamp(-g.tau_max, g.tau_max);
        let mut vel = world.joint_vel[i] + dt * (tau - params.joint_damping * world.joint_vel[i]);
        let mut pos = world.joint_pos[i] + dt * vel;
        let (lo, hi) = model.joint_limits[i];
        if pos < lo {
            pos = lo;
            vel = 0.0;
        } else if pos > hi {
            pos = hi;
            vel = 0.0;
        }
        next.joint_pos[i] = pos;
        next.joint_vel[i] = vel;
    }

    // Chopstick joint with the pinch stop against the ball.
    {
        let g = &params.pd_gains[6];
        let target = joint_targets[6];
        let tau = (g.kp * (target - world.aperture) - g.kd * world.aperture_vel)
            .clamp(-g.tau_max, g.tau_max);
        let mut vel =
            world.aperture_vel + dt * (tau - params.joint_damping * world.aperture_vel);
        let mut ap = world.aperture + dt * vel;
        let (lo, hi) = model.aperture_limits;
        if ap < lo {
            ap = lo;
            vel = 0.0;
        } else if ap > hi {
            ap = hi;
            vel = 0.0;
        }
        next.squeeze_torque = 0.0;
        let ball = world.ball_pos;
        let pinch = pinch_state(model, params, &next.joint_pos, ap, &ball);
        if pinch.fixed_contact && pinch.opposing && pinch.moving_dist < params.ball_radius {
            // Closing into the ball: clamp the aperture where the moving tip
            // meets the surface, if the previous aperture was outside.
            let prev_dist = {
                let (_, moving) = model.tip_positions(&next.joint_pos, world.aperture);
                (moving - ball).norm()
            };
            if prev_dist >= params.ball_radius {
                let (mut a_in, mut a_out) = (ap, world.aperture);
                for _ in 0..24 {
                    let mid = 0.5 * (a_in + a_out);
                    let (_, moving) = model.tip_positions(&next.joint_pos, mid);
                    if (moving - ball).norm() < params.ball_radius {
                        a_in = mid;
                    } else {
                        a_out = mid;
                    }
                }
                ap = a_out;
            } else {
                ap = world.aperture;
            }
            vel = 0.0;
            let closing = g.kp * (ap - target) - 0.0;
            next.squeeze_torque = closing.clamp(0.0, g.tau_max);
        }
        next.aperture = ap;
        next.aperture_vel = vel;
    }

    // Ball.
    if world.grasp_latched {
        let mid = model.tip_midpoint(&next.joint_pos, next.aperture);
        next.prev_ball_vel = world.ball_vel;
        next.ball_vel = (mid - world.ball_pos) / dt;
        next.ball_pos = mid;
    } else {
        let accel = Vector3::new(0.0, 0.0, -params.gravity)
            + disturbance / params.ball_mass
            - params.linear_damping * world.ball_vel;
        let mut vel = world.ball_vel + dt * accel;
        next.prev_ball_vel = world.ball_vel;

        let r = world.ball_pos - params.string_anchor;
        let dist = r.norm();
        let taut_now = dist >= params.string_length * (1.0 - 1e-12);
        let mut advanced = false;
        if taut_now && dist > 0.0 {
            // Constraint impulse at the current configuration, before the
            // position update: removing the outward kick here (rather than
            // in the rotated end-of-step frame) keeps the swing from
            // bleeding tangential energy tick after tick.
            let dir = r / dist;
            let radial = vel.dot(&dir);
            if radial > 0.0 {
                vel -= dir * radial;
            }
            let speed = vel.norm();
            if radial >= 0.0 && speed * dt > 1e-15 {
                // Tangential motion: advance by rotation on the constraint
                // sphere with parallel transport of the velocity. This is
                // the projection of the Euler step onto the sphere, exact
                // to all orders in the arc angle.
                let axis = nalgebra::UnitVector3::new_normalize(dir.cross(&(vel / speed)));
                let rot =
                    nalgebra::UnitQuaternion::from_axis_angle(&axis, speed * dt / dist);
                next.ball_pos = params.string_anchor + rot * r;
                next.ball_vel = rot * vel;
                advanced = true;
            }
        }
        if !advanced {
            let pred = world.ball_pos + dt * vel;
            let (pos, vel_c, event) =
                string_constraint(pred, vel, params.string_anchor, params.string_length);
            match event {
                StringEvent::Slack | StringEvent::Taut => {
                    next.ball_pos = pos;
                    next.ball_vel = vel_c;
                }
                StringEvent::Degenerate => {
                    next.ball_pos = world.ball_pos;
                    next.ball_vel = Vector3::zeros();
                    next.degenerate_string_warnings += 1;
                }
            }
        }
    }

    next = grasp_update(&next, params, model, disturbance);
    next.sim_time = world.sim_time + dt;
    next.check_finite()?;
    Ok(next)
}

/// Kinetic plus gravitational potential energy of the free ball (J), with
/// the potential zero at z = 0.
pub fn ball_energy(world: &WorldState, params: &PhysicsParams) -> f64 {
    0.5 * params.ball_mass * world.ball_vel.norm_squared()
        + params.ball_mass * params.gravity * world.ball_pos.z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup() -> (PhysicsParams, KinematicModel, WorldState) {
        let params = PhysicsParams::default_desk();
        let model = KinematicModel::default_desk();
        let world = WorldState::at_rest(&params, KinematicModel::home_joints(), 0.6);
        (params, model, world)
    }

    #[test]
    fn zero_gravity_rest_is_a_fixed_point() {
        let (mut params, model, mut world) = setup();
        params.gravity = 1e-300; // validate() wants > 0; dynamics see ~none
        world.ball_vel = Vector3::zeros();
        let targets: [f64; 7] = {
            let mut t = [0.0; 7];
            t[..6].copy_from_slice(&world.joint_pos);
            t[6] = world.aperture;
            t
        };
        let next = step(&world, &params, &model, &targets, Vector3::zeros()).unwrap();
        for i in 0..6 {
            assert_relative_eq!(next.joint_pos[i], world.joint_pos[i], epsilon = 1e-12);
            assert_relative_eq!(next.joint_vel[i], 0.0, epsilon = 1e-12);
        }
        assert_relative_eq!((next.ball_pos - world.ball_pos).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(next.ball_vel.norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn hanging_ball_stays_at_equilibrium() {
        let (params, model, world) = setup();
        let targets: [f64; 7] = {
            let mut t = [0.0; 7];
            t[..6].copy_from_slice(&world.joint_pos);
            t[6] = world.aperture;
            t
        };
        let mut w = world;
        for _ in 0..2000 {
            w = step(&w, &params, &model, &targets, Vector3::zeros()).unwrap();
        }
        assert!((w.ball_pos - params.equilibrium()).norm() < 1e-9);
        assert!(w.ball_vel.norm() < 1e-9);
    }

    #[test]
    fn pendulum_small_angle_period() {
        let (mut params, model, mut world) = setup();
        params.linear_damping = 0.0;
        // Displace the ball 0.1 rad sideways on the sphere, at rest.
        let theta0 = 0.1_f64;
        world.ball_pos = params.string_anchor
            + Vector3::new(
                params.string_length * theta0.sin(),
                0.0,
                -params.string_length * theta0.cos(),
            );
        let targets: [f64; 7] = {
            let mut t = [0.0; 7];
            t[..6].copy_from_slice(&world.joint_pos);
            t[6] = world.aperture;
            t
        };
        // Measure 10 full periods via positive-going zero crossings of x
        // displacement from the anchor axis.
        let mut crossings = Vec::new();
        let mut prev_x = world.ball_pos.x - params.string_anchor.x;
        let mut w = world;
        for _ in 0..20_000 {
            w = step(&w, &params, &model, &targets, Vector3::zeros()).unwrap();
            let x = w.ball_pos.x - params.string_anchor.x;
            if prev_x < 0.0 && x >= 0.0 {
                // Linear interpolation of the crossing instant.
                let frac = prev_x / (prev_x - x);
                crossings.push(w.sim_time - params.dt_low + params.dt_low * frac);
            }
            prev_x = x;
        }
        assert!(crossings.len() >= 11, "too few crossings: {}", crossings.len());
        let period = (crossings[10] - crossings[0]) / 10.0;
        let expected = std::f64::consts::TAU * (params.string_length / params.gravity).sqrt();
        assert!(
            (period - expected).abs() / expected < 0.02,
            "period {period} vs analytic {expected}"
        );
    }

    /// Time-centered mechanical energy: KE from the average of the
    /// velocities flanking the step, PE at the pre-step position. The
    /// staggered (semi-implicit) scheme stores velocity half a step out of
    /// phase with position; this is the standard estimator that cancels the
    /// resulting O(dt*omega) bounded phase oscillation.
    fn centered_energy(prev: &WorldState, next: &WorldState, params: &PhysicsParams) -> f64 {
        let vbar = 0.5 * (prev.ball_vel + next.ball_vel);
        0.5 * params.ball_mass * vbar.norm_squared()
            + params.ball_mass * params.gravity * prev.ball_pos.z
    }

    #[test]
    fn undamped_energy_drift_is_small() {
        let (mut params, model, mut world) = setup();
        params.linear_damping = 0.0;
        let theta0 = 0.2_f64;
        world.ball_pos = params.string_anchor
            + Vector3::new(
                params.string_length * theta0.sin(),
                0.0,
                -params.string_length * theta0.cos(),
            );
        let targets: [f64; 7] = {
            let mut t = [0.0; 7];
            t[..6].copy_from_slice(&world.joint_pos);
            t[6] = world.aperture;
            t
        };
        // Normalize drift by the swing energy (potential above the rest
        // point), not the absolute offset of the potential zero.
        let rest = ball_energy(
            &WorldState::at_rest(&params, world.joint_pos, world.aperture),
            &params,
        );
        let mut w = world.clone();
        let mut e0 = None;
        let mut max_rel = 0.0_f64;
        let mut max_inst = 0.0_f64;
        let e_inst0 = ball_energy(&w, &params);
        for _ in 0..5000 {
            let next = step(&w, &params, &model, &targets, Vector3::zeros()).unwrap();
            let e = centered_energy(&w, &next, &params);
            let e0 = *e0.get_or_insert(e);
            max_rel = max_rel.max((e - e0).abs() / (e0 - rest).abs());
            max_inst = max_inst
                .max((ball_energy(&next, &params) - e_inst0).abs() / (e_inst0 - rest).abs());
            w = next;
        }
        assert!(max_rel <= 1e-3, "relative centered drift {max_rel}");
        // The instantaneous estimator additionally sees the bounded
        // phase oscillation; it must stay small too, just not 1e-3 small.
        assert!(max_inst <= 1e-2, "instantaneous envelope {max_inst}");
    }

    #[test]
    fn damped_energy_never_increases() {
        let (mut params, model, mut world) = setup();
        params.linear_damping = 0.3;
        world.ball_pos = params.string_anchor + Vector3::new(0.12, 0.05, -0.25);
        world.ball_vel = Vector3::new(0.2, -0.1, 0.0);
        let targets: [f64; 7] = {
            let mut t = [0.0; 7];
            t[..6].copy_from_slice(&world.joint_pos);
            t[6] = world.aperture;
            t
        };
        let mut w = world;
        let mut prev_e: Option<f64> = None;
        for _ in 0..5000 {
            let next = step(&w, &params, &model, &targets, Vector3::zeros()).unwrap();
            let e = centered_energy(&w, &next, &params);
            if let Some(pe) = prev_e {
                assert!(e <= pe + 1e-12, "energy increased: {pe} -> {e}");
            }
            prev_e = Some(e);
            w = next;
        }
    }

    #[test]
    fn string_slack_case_unchanged() {
        let anchor = Vector3::new(0.0, 0.0, 1.0);
        let (p, v, ev) = string_constraint(
            Vector3::new(0.0, 0.0, 0.9),
            Vector3::new(0.3, -0.2, 0.1),
            anchor,
            0.3,
        );
        assert_eq!(ev, StringEvent::Slack);
        assert_eq!(p, Vector3::new(0.0, 0.0, 0.9));
        assert_eq!(v, Vector3::new(0.3, -0.2, 0.1));
    }

    #[test]
    fn string_projects_onto_sphere() {
        let anchor = Vector3::new(0.0, 0.0, 1.0);
        let (p, _, ev) = string_constraint(
            Vector3::new(0.0, 0.0, 0.6),
            Vector3::zeros(),
            anchor,
            0.3,
        );
        assert_eq!(ev, StringEvent::Taut);
        assert_relative_eq!((p - Vector3::new(0.0, 0.0, 0.7)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn string_removes_outward_radial_velocity() {
        let anchor = Vector3::new(0.0, 0.0, 1.0);
        let (_, v, ev) = string_constraint(
            Vector3::new(0.3, 0.0, 1.0),
            Vector3::new(1.0, 0.0, 0.0),
            anchor,
            0.3,
        );
        assert_eq!(ev, StringEvent::Taut);
        assert_relative_eq!(v.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn string_degenerate_at_anchor() {
        let anchor = Vector3::new(0.0, 0.0, 1.0);
        let (p, v, ev) = string_constraint(anchor, Vector3::new(0.2, 0.0, 0.0), anchor, 0.3);
        assert_eq!(ev, StringEvent::Degenerate);
        assert_eq!(p, anchor);
        assert_eq!(v, Vector3::zeros());
    }

    #[test]
    fn grasp_latches_on_symmetric_pinch() {
        let (params, model, mut world) = setup();
        // Close the aperture to exactly the ball diameter and put the ball
        // at the corresponding tip midpoint.
        let sep = 2.0 * params.ball_radius;
        let ap = model.chopsticks.aperture_for_separation(sep, 0.0, 1.0);
        world.aperture = ap;
        world.ball_pos = model.tip_midpoint(&world.joint_pos, ap);
        world.squeeze_torque = 2.0 * params.tau_min;
        let next = grasp_update(&world, &params, &model, Vector3::zeros());
        assert!(next.grasp_latched);
    }

    #[test]
    fn no_latch_when_fully_open() {
        let (params, model, mut world) = setup();
        world.aperture = model.aperture_limits.1;
        world.ball_pos = model.tip_midpoint(&world.joint_pos, world.aperture);
        world.squeeze_torque = 10.0 * params.tau_min;
        let next = grasp_update(&world, &params, &model, Vector3::zeros());
        assert!(!next.grasp_latched, "latched with tips far apart");
    }

    #[test]
    fn no_latch_without_squeeze() {
        let (params, model, mut world) = setup();
        let sep = 2.0 * params.ball_radius;
        let ap = model.chopsticks.aperture_for_separation(sep, 0.0, 1.0);
        world.aperture = ap;
        world.ball_pos = model.tip_midpoint(&world.joint_pos, ap);
        world.squeeze_torque = 0.5 * params.tau_min;
        let next = grasp_update(&world, &params, &model, Vector3::zeros());
        assert!(!next.grasp_latched);
    }

    #[test]
    fn slip_releases_under_extreme_acceleration() {
        let (params, model, mut world) = setup();
        let sep = 2.0 * params.ball_radius;
        let ap = model.chopsticks.aperture_for_separation(sep, 0.0, 1.0);
        world.aperture = ap;
        world.ball_pos = model.tip_midpoint(&world.joint_pos, ap);
        world.squeeze_torque = 2.0 * params.tau_min;
        world.grasp_latched = true;
        // Demand 100x the capacity via a velocity jump over one tick.
        let moment_arm = model.chopsticks.stick.norm();
        let capacity = 2.0 * params.friction_mu * world.squeeze_torque / moment_arm;
        let accel_limit = capacity / params.ball_mass;
        world.prev_ball_vel = Vector3::zeros();
        world.ball_vel = Vector3::new(100.0 * accel_limit * params.dt_low, 0.0, 0.0);
        let next = grasp_update(&world, &params, &model, Vector3::zeros());
        assert!(!next.grasp_latched, "grasp survived 100x slip demand");
    }

    #[test]
    fn latch_and_release_conditions_are_mutually_exclusive() {
        let (params, model, mut world) = setup();
        let mut rng = crate::rng::stream(77, "hysteresis");
        use rand::Rng;
        for _ in 0..2000 {
            world.aperture = rng.gen_range(0.0..1.0);
            world.squeeze_torque = rng.gen_range(0.0..0.5);
            let mid = model.tip_midpoint(&world.joint_pos, world.aperture);
            world.ball_pos = mid
                + Vector3::new(
                    rng.gen_range(-0.02..0.02),
                    rng.gen_range(-0.02..0.02),
                    rng.gen_range(-0.02..0.02),
                );
            let latch = latch_condition(&model, &params, &world);
            let release = open_release_condition(&model, &params, world.aperture);
            assert!(!(latch && release), "hysteresis violated at ap {}", world.aperture);
        }
    }

    #[test]
    fn non_finite_targets_fault() {
        let (params, model, world) = setup();
        let mut targets = [0.0; 7];
        targets[2] = f64::NAN;
        let err = step(&world, &params, &model, &targets, Vector3::zeros());
        assert_eq!(err, Err(SimFault { field: "joint_targets" }));
    }

    #[test]
    fn step_is_deterministic() {
        let (params, model, world) = setup();
        let targets = {
            let mut t = [0.0; 7];
            t[..6].copy_from_slice(&world.joint_pos);
            t[5] += 0.2;
            t[6] = 0.3;
            t
        };
        let run = || {
            let mut w = world.clone();
            for _ in 0..500 {
                w = step(&w, &params, &model, &targets, Vector3::new(0.1, 0.0, 0.0)).unwrap();
            }
            w
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn string_never_violated_under_random_actions() {
        let (params, model, mut world) = setup();
        let mut rng = crate::rng::stream(123, "random-actions");
        use rand::Rng;
        let home = KinematicModel::home_joints();
        for _ in 0..20_000 {
            let targets: [f64; 7] = std::array::from_fn(|i| {
                if i < 6 {
                    home[i] + rng.gen_range(-0.3..0.3)
                } else {
                    rng.gen_range(0.0..1.0)
                }
            });
            let dist = Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), 0.0);
            world = step(&world, &params, &model, &targets, dist).unwrap();
            if !world.grasp_latched {
                let excess =
                    (world.ball_pos - params.string_anchor).norm() - params.string_length;
                assert!(excess <= 1e-9, "string stretched by {excess}");
            }
        }
    }
}
