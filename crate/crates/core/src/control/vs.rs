//! Visual-servo baseline: a three-phase state machine (align, grasp, lift)
//! driven by PD on the tracked object position. Hand-tuned, reactive only
//! through its phase resets, and deliberately sensitive to perception
//! noise through its millimeter alignment threshold.

use nalgebra::Vector3;

use super::hier::{Action, Controller};
use crate::kinematics::KinematicModel;
use crate::sim::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsPhase {
    Align,
    Grasp,
    Lift,
}

/// Per-axis PD gains for alignment plus phase-behavior knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsGains {
    pub align_kp: [f64; 3],
    pub align_kd: [f64; 3],
    /// Aperture command decrease per controller step while grasping (rad).
    pub close_rate: f64,
    /// Vertical step toward the goal per controller step while lifting (m).
    pub lift_rate: f64,
    /// Aperture considered "open" while aligning, as tip separation (m).
    pub open_separation: f64,
    /// Observed-aperture stall threshold for grasp completion (rad).
    pub stall_eps: f64,
}

impl VsGains {
    /// Tuning for the 20 Hz controller.
    pub fn rate_20hz() -> Self {
        VsGains {
            align_kp: [0.9, 0.9, 0.9],
            align_kd: [0.08, 0.08, 0.08],
            close_rate: 0.10,
            lift_rate: 0.012,
            open_separation: 0.045,
            stall_eps: 2e-3,
        }
    }

    /// Tuning for the 100 Hz variant: gentler per-step motions, same
    /// structure.
    pub fn rate_100hz() -> Self {
        VsGains {
            align_kp: [0.35, 0.35, 0.35],
            align_kd: [0.05, 0.05, 0.05],
            close_rate: 0.022,
            lift_rate: 0.0026,
            open_separation: 0.045,
            stall_eps: 5e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VsState {
    pub phase: VsPhase,
    pub phase_entry_time: f64,
    pub gains: VsGains,
    cmd_aperture: f64,
    prev_offset: Option<Vector3<f64>>,
    prev_aperture: Option<f64>,
    stall_ticks: u32,
}

impl VsState {
    pub fn new(gains: VsGains, open_aperture: f64) -> Self {
        VsState {
            phase: VsPhase::Align,
            phase_entry_time: 0.0,
            gains,
            cmd_aperture: open_aperture,
            prev_offset: None,
            prev_aperture: None,
            stall_ticks: 0,
        }
    }
}

/// Geometry and goal context the servo needs next to the observation.
#[derive(Debug, Clone)]
pub struct VsContext {
    pub model: KinematicModel,
    pub ball_radius: f64,
    /// Where to carry the object.
    pub goal: Vector3<f64>,
    /// Current controller time (s), for phase-entry bookkeeping.
    pub time: f64,
}

const ALIGN_THRESHOLD: f64 = 1e-3;
const HEIGHT_VIOLATION: f64 = 1e-3;
const STALL_STEPS: u32 = 3;

/// Midpoint the tips would pinch at, given the observed flange pose:
/// where the ball center should be for a grasp.
fn grasp_midpoint_from_obs(ctx: &VsContext, obs: &Observation) -> Vector3<f64> {
    let g = &ctx.model.chopsticks;
    let (lo, hi) = ctx.model.aperture_limits;
    let ap = g.aperture_for_separation(2.0 * ctx.ball_radius, lo, hi);
    let mid_local = 0.5 * (g.fixed_tip + g.moving_tip_local(ap));
    obs.ee_pos + obs.ee_quat * mid_local
}

/// One servo decision. Returns the pose command and the updated machine.
pub fn vs_step(vs: &VsState, obs: &Observation, ctx: &VsContext) -> (Action, VsState) {
    let mut next = vs.clone();
    let g = &ctx.model.chopsticks;
    let (ap_lo, ap_hi) = ctx.model.aperture_limits;
    let open_ap = g.aperture_for_separation(vs.gains.open_separation, ap_lo, ap_hi);

    // Offset between the object and the point the tips would pinch.
    let pinch = grasp_midpoint_from_obs(ctx, obs);
    let offset = obs.obj_com - pinch;

    // Any phase: losing the height alignment resets to Align.
    if vs.phase != VsPhase::Align && offset.z.abs() > HEIGHT_VIOLATION {
        next.phase = VsPhase::Align;
        next.phase_entry_time = ctx.time;
        next.cmd_aperture = open_ap;
        next.stall_ticks = 0;
        next.prev_aperture = None;
    }

    let action = match next.phase {
        VsPhase::Align => {
            let d_offset = match vs.prev_offset {
                Some(prev) => offset - prev,
                None => Vector3::zeros(),
            };
            let mut delta = Vector3::zeros();
            for i in 0..3 {
                delta[i] =
                    vs.gains.align_kp[i] * offset[i] + vs.gains.align_kd[i] * d_offset[i];
            }
            next.cmd_aperture = open_ap;
            if offset.norm() < ALIGN_THRESHOLD {
                next.phase = VsPhase::Grasp;
                next.phase_entry_time = ctx.time;
                next.stall_ticks = 0;
                next.prev_aperture = None;
                delta = Vector3::zeros();
            }
            Action {
                cmd_pos: obs.ee_pos + delta,
                cmd_quat: KinematicModel::grasp_orientation(),
                cmd_aperture: next.cmd_aperture,
            }
        }
        VsPhase::Grasp => {
            // Track the object while the moving stick closes at a fixed
            // rate; grasp completion shows up as an observed aperture stall
            // under a closing command.
            next.cmd_aperture = (next.cmd_aperture - vs.gains.close_rate).max(ap_lo);
            if let Some(prev_ap) = vs.prev_aperture {
                if (obs.aperture - prev_ap).abs() < vs.gains.stall_eps
                    && next.cmd_aperture < obs.aperture
                {
                    next.stall_ticks += 1;
                } else {
                    next.stall_ticks = 0;
                }
            }
            if next.stall_ticks >= STALL_STEPS {
                next.phase = VsPhase::Lift;
                next.phase_entry_time = ctx.time;
            }
            let mut delta = Vector3::zeros();
            for i in 0..3 {
                delta[i] = vs.gains.align_kp[i] * offset[i];
            }
            Action {
                cmd_pos: obs.ee_pos + delta,
                cmd_quat: KinematicModel::grasp_orientation(),
                cmd_aperture: next.cmd_aperture,
            }
        }
        VsPhase::Lift => {
            // Proportional ascent toward the goal, squeeze maintained.
            let to_goal = ctx.goal - obs.obj_com;
            let step = Vector3::new(
                to_goal.x.clamp(-vs.gains.lift_rate, vs.gains.lift_rate),
                to_goal.y.clamp(-vs.gains.lift_rate, vs.gains.lift_rate),
                to_goal.z.clamp(-vs.gains.lift_rate, vs.gains.lift_rate),
            );
            Action {
                cmd_pos: obs.ee_pos + step,
                cmd_quat: KinematicModel::grasp_orientation(),
                cmd_aperture: ap_lo,
            }
        }
    };

    next.prev_offset = Some(offset);
    next.prev_aperture = Some(obs.aperture);
    (action, next)
}

/// [`Controller`] wrapper owning the machine state.
#[derive(Debug, Clone)]
pub struct VsController {
    pub state: VsState,
    pub ctx: VsContext,
    initial: VsState,
    /// Controller period (s), advanced each act.
    pub period: f64,
}

impl VsController {
    pub fn new(gains: VsGains, ctx: VsContext, period: f64) -> Self {
        let g = &ctx.model.chopsticks;
        let (lo, hi) = ctx.model.aperture_limits;
        let open_ap = g.aperture_for_separation(gains.open_separation, lo, hi);
        let state = VsState::new(gains, open_ap);
        VsController { initial: state.clone(), state, ctx, period }
    }
}

impl Controller for VsController {
    fn act(&mut self, obs: &Observation) -> Action {
        let (action, next) = vs_step(&self.state, obs, &self.ctx);
        self.state = next;
        self.ctx.time += self.period;
        action
    }

    fn reset(&mut self) {
        self.state = self.initial.clone();
        self.ctx.time = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn context() -> VsContext {
        VsContext {
            model: KinematicModel::default_desk(),
            ball_radius: 0.0075,
            goal: Vector3::new(0.35, 0.0, 0.12),
            time: 0.0,
        }
    }

    fn obs_with_offset(ctx: &VsContext, offset: Vector3<f64>, aperture: f64) -> Observation {
        // Build an observation whose pinch midpoint is exactly `offset`
        // away from the object.
        let ee_pos = Vector3::new(0.35, 0.0, 0.25);
        let ee_quat = KinematicModel::grasp_orientation();
        let probe = Observation { ee_pos, ee_quat, obj_com: Vector3::zeros(), aperture };
        let pinch = grasp_midpoint_from_obs(ctx, &probe);
        Observation { ee_pos, ee_quat, obj_com: pinch + offset, aperture }
    }

    #[test]
    fn half_millimeter_offset_transitions_to_grasp() {
        let ctx = context();
        let vs = VsState::new(VsGains::rate_20hz(), 0.3);
        let obs = obs_with_offset(&ctx, Vector3::new(0.0005, 0.0, 0.0), 0.3);
        let (_, next) = vs_step(&vs, &obs, &ctx);
        assert_eq!(next.phase, VsPhase::Grasp);
    }

    #[test]
    fn five_millimeter_offset_stays_aligning_toward_object() {
        let ctx = context();
        let vs = VsState::new(VsGains::rate_20hz(), 0.3);
        let offset = Vector3::new(0.005, 0.0, 0.0);
        let obs = obs_with_offset(&ctx, offset, 0.3);
        let (action, next) = vs_step(&vs, &obs, &ctx);
        assert_eq!(next.phase, VsPhase::Align);
        let motion = action.cmd_pos - obs.ee_pos;
        assert!(motion.dot(&offset) > 0.0, "servo not moving toward the object");
    }

    #[test]
    fn lift_height_error_resets_to_align() {
        let ctx = context();
        let mut vs = VsState::new(VsGains::rate_20hz(), 0.3);
        vs.phase = VsPhase::Lift;
        let obs = obs_with_offset(&ctx, Vector3::new(0.0, 0.0, 0.003), 0.05);
        let (_, next) = vs_step(&vs, &obs, &ctx);
        assert_eq!(next.phase, VsPhase::Align);
    }

    #[test]
    fn grasp_stall_three_steps_enters_lift() {
        let ctx = context();
        let mut vs = VsState::new(VsGains::rate_20hz(), 0.3);
        vs.phase = VsPhase::Grasp;
        vs.cmd_aperture = 0.3;
        // Constant observed aperture well above the shrinking command.
        let mut state = vs;
        let mut phase_history = Vec::new();
        for _ in 0..6 {
            let obs = obs_with_offset(&ctx, Vector3::zeros(), 0.25);
            let (_, next) = vs_step(&state, &obs, &ctx);
            phase_history.push(next.phase);
            state = next;
        }
        assert!(
            phase_history.contains(&VsPhase::Lift),
            "never entered Lift: {phase_history:?}"
        );
        // No skipping: Lift must be reached from Grasp only after stalls.
        assert_eq!(phase_history[0], VsPhase::Grasp);
    }

    #[test]
    fn quaternion_command_is_canonical_grasp() {
        let ctx = context();
        let vs = VsState::new(VsGains::rate_20hz(), 0.3);
        let obs = obs_with_offset(&ctx, Vector3::new(0.01, 0.0, 0.0), 0.3);
        let (action, _) = vs_step(&vs, &obs, &ctx);
        let want: UnitQuaternion<f64> = KinematicModel::grasp_orientation();
        assert!(action.cmd_quat.angle_to(&want) < 1e-12);
    }
}
