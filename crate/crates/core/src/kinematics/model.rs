//! Kinematic chain description: DH-style link parameters, base pose,
//! chopstick tip geometry and per-joint backlash.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};

/// One joint in standard Denavit-Hartenberg form.
///
/// The joint transform is `Rz(theta + q) * Tz(d) * Tx(a) * Rx(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhParam {
    /// Link length (m).
    pub a: f64,
    /// Link twist (rad).
    pub alpha: f64,
    /// Link offset (m).
    pub d: f64,
    /// Joint angle bias (rad).
    pub theta: f64,
}

impl DhParam {
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.theta + q);
        let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Isometry3::from_parts(Translation3::new(0.0, 0.0, self.d), rz)
            * Isometry3::from_parts(Translation3::new(self.a, 0.0, 0.0), rx)
    }
}

/// Chopstick pair rigidly mounted on the flange.
///
/// The fixed stick's tip sits at a constant flange-frame offset; the moving
/// stick hinges at `pivot` and sweeps `stick` around `hinge_axis` by the
/// aperture angle. Tip separation is monotone in aperture over the aperture
/// limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChopstickGeometry {
    pub fixed_tip: Vector3<f64>,
    pub pivot: Vector3<f64>,
    pub stick: Vector3<f64>,
    pub hinge_axis: Vector3<f64>,
}

impl ChopstickGeometry {
    /// Moving-tip offset in the flange frame at the given aperture.
    pub fn moving_tip_local(&self, aperture: f64) -> Vector3<f64> {
        let axis = UnitVector3::new_normalize(self.hinge_axis);
        let rot = UnitQuaternion::from_axis_angle(&axis, aperture);
        self.pivot + rot * self.stick
    }

    /// Distance between the two tips at the given aperture.
    pub fn separation(&self, aperture: f64) -> f64 {
        (self.moving_tip_local(aperture) - self.fixed_tip).norm()
    }

    /// Smallest aperture in `[lo, hi]` whose tip separation reaches
    /// `target_sep`, by bisection on the monotone separation curve.
    /// Saturates at the interval ends when the target is out of range.
    pub fn aperture_for_separation(&self, target_sep: f64, lo: f64, hi: f64) -> f64 {
        if self.separation(lo) >= target_sep {
            return lo;
        }
        if self.separation(hi) <= target_sep {
            return hi;
        }
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.separation(mid) < target_sep {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Axis-aligned reachable box used as the documented IK workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl WorkspaceBox {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn clamp(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }
}

/// Full kinematic description shared by the simulator, IK and calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicModel {
    pub dh: [DhParam; 6],
    pub base_position: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
    pub chopsticks: ChopstickGeometry,
    /// Per-joint backlash width (rad); index 6 is the chopstick joint.
    pub nominal_backlash: [f64; 7],
    pub joint_limits: [(f64, f64); 6],
    pub aperture_limits: (f64, f64),
    pub workspace: WorkspaceBox,
}

impl KinematicModel {
    /// The desk-scale arm used throughout: a PUMA-like 6R chain with a
    /// roughly 0.5 m reach, chopsticks pointing out of the flange.
    pub fn default_desk() -> Self {
        KinematicModel {
            dh: [
                DhParam { a: 0.0, alpha: std::f64::consts::FRAC_PI_2, d: 0.12, theta: 0.0 },
                DhParam { a: 0.22, alpha: 0.0, d: 0.0, theta: 0.0 },
                DhParam { a: 0.05, alpha: std::f64::consts::FRAC_PI_2, d: 0.0, theta: 0.0 },
                DhParam { a: 0.0, alpha: -std::f64::consts::FRAC_PI_2, d: 0.18, theta: 0.0 },
                DhParam { a: 0.0, alpha: std::f64::consts::FRAC_PI_2, d: 0.0, theta: 0.0 },
                DhParam { a: 0.0, alpha: 0.0, d: 0.06, theta: 0.0 },
            ],
            base_position: Vector3::new(0.0, 0.0, 0.25),
            base_orientation: UnitQuaternion::identity(),
            chopsticks: ChopstickGeometry {
                fixed_tip: Vector3::new(0.0, -0.005, 0.10),
                pivot: Vector3::new(0.0, 0.005, 0.0),
                stick: Vector3::new(0.0, 0.0, 0.10),
                hinge_axis: Vector3::new(-1.0, 0.0, 0.0),
            },
            nominal_backlash: [0.004; 7],
            joint_limits: [
                (-2.9, 2.9),
                (-2.2, 2.2),
                (-2.6, 2.6),
                (-2.9, 2.9),
                (-2.2, 2.2),
                (-2.9, 2.9),
            ],
            aperture_limits: (0.0, 1.0),
            workspace: WorkspaceBox {
                min: Vector3::new(0.18, -0.22, 0.04),
                max: Vector3::new(0.50, 0.22, 0.34),
            },
        }
    }

    pub fn base_pose(&self) -> Isometry3<f64> {
        Isometry3::from_parts(self.base_position.into(), self.base_orientation)
    }

    /// Elbow-up start pose: flange at roughly (0.35, 0, 0.15) with the
    /// chopsticks pointing straight down and opening along world y.
    pub fn home_joints() -> [f64; 6] {
        [0.0, -0.73207281, 1.96255128, 0.0, -1.23047847, 0.0]
    }

    /// Flange orientation of the canonical grasp: tool z down, tool y along
    /// world -y (a half-turn about x).
    pub fn grasp_orientation() -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
    }

    /// Flange pose for the six arm joints.
    pub fn forward_kinematics(&self, q: &[f64; 6]) -> Isometry3<f64> {
        let mut pose = self.base_pose();
        for (dh, &qi) in self.dh.iter().zip(q.iter()) {
            pose *= dh.transform(qi);
        }
        pose
    }

    /// World positions of (fixed tip, moving tip).
    pub fn tip_positions(&self, q: &[f64; 6], aperture: f64) -> (Vector3<f64>, Vector3<f64>) {
        let flange = self.forward_kinematics(q);
        let fixed = flange * nalgebra::Point3::from(self.chopsticks.fixed_tip);
        let moving = flange * nalgebra::Point3::from(self.chopsticks.moving_tip_local(aperture));
        (fixed.coords, moving.coords)
    }

    pub fn tip_midpoint(&self, q: &[f64; 6], aperture: f64) -> Vector3<f64> {
        let (a, b) = self.tip_positions(q, aperture);
        0.5 * (a + b)
    }

    /// World midpoint of the tips at the aperture whose separation equals
    /// `sep`: where a ball of diameter `sep` would be centered when pinched.
    pub fn grasp_midpoint(&self, q: &[f64; 6], sep: f64) -> Vector3<f64> {
        let (lo, hi) = self.aperture_limits;
        let ap = self.chopsticks.aperture_for_separation(sep, lo, hi);
        self.tip_midpoint(q, ap)
    }

    pub fn clamp_joints(&self, q: &mut [f64; 6]) {
        for (qi, &(lo, hi)) in q.iter_mut().zip(self.joint_limits.iter()) {
            *qi = qi.clamp(lo, hi);
        }
    }
}

/// Direction-annotated backlash: each joint's effective angle lags the
/// command by half the dead-band width on the side it approached from.
pub fn apply_backlash(model: &KinematicModel, q_cmd: &[f64; 7], signs: &[f64; 7]) -> [f64; 7] {
    let mut out = [0.0; 7];
    for i in 0..7 {
        out[i] = q_cmd[i] - signs[i] * model.nominal_backlash[i] / 2.0;
    }
    out
}

/// Stateful dead-band (play) operator for simulating backlash tick by tick:
/// the effective angle stays put until the command drags it through the
/// dead band, reproducing a hysteresis loop of the full backlash width.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacklashPlay {
    half_width: [f64; 7],
    effective: [f64; 7],
}

impl BacklashPlay {
    pub fn new(width: [f64; 7], initial: [f64; 7]) -> Self {
        BacklashPlay {
            half_width: std::array::from_fn(|i| width[i] / 2.0),
            effective: initial,
        }
    }

    pub fn apply(&mut self, cmd: &[f64; 7]) -> [f64; 7] {
        for i in 0..7 {
            let (lo, hi) = (cmd[i] - self.half_width[i], cmd[i] + self.half_width[i]);
            self.effective[i] = self.effective[i].clamp(lo, hi);
        }
        self.effective
    }
}
