//! Damped-least-squares inverse kinematics with a numerical Jacobian.

use nalgebra::{Isometry3, Matrix6, Vector3, Vector6};
use thiserror::Error;

use super::model::KinematicModel;

pub const IK_TOL_POS: f64 = 1e-6;
pub const IK_TOL_ROT: f64 = 1e-6;
pub const IK_MAX_ITERS: usize = 200;
const DLS_LAMBDA: f64 = 1e-3;
const JAC_H: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IkError {
    #[error("target position ({0:.3}, {1:.3}, {2:.3}) outside the workspace box")]
    OutOfWorkspace(f64, f64, f64),
}

#[derive(Debug, Clone, Copy)]
pub struct IkResult {
    pub q: [f64; 6],
    pub converged: bool,
    pub iters: usize,
    pub pos_err: f64,
    pub rot_err: f64,
}

fn pose_error(current: &Isometry3<f64>, target: &Isometry3<f64>) -> Vector6<f64> {
    let dp = target.translation.vector - current.translation.vector;
    let dq = target.rotation * current.rotation.inverse();
    let w = dq.scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, w.x, w.y, w.z)
}

/// Solves for joint angles reaching `target` from `q_seed`.
///
/// Iterates damped least squares on a central-difference Jacobian; damping
/// keeps steps bounded near singular configurations. Returns the best
/// iterate with `converged = false` if tolerances are not met within
/// [`IK_MAX_ITERS`].
pub fn inverse_kinematics(
    model: &KinematicModel,
    target: &Isometry3<f64>,
    q_seed: &[f64; 6],
) -> Result<IkResult, IkError> {
    let p = target.translation.vector;
    if !model.workspace.contains(&p) {
        return Err(IkError::OutOfWorkspace(p.x, p.y, p.z));
    }

    let mut q = *q_seed;
    model.clamp_joints(&mut q);
    let mut best = q;
    let mut best_err = f64::INFINITY;
    let mut best_pos = f64::INFINITY;
    let mut best_rot = f64::INFINITY;

    for iter in 0..=IK_MAX_ITERS {
        let current = model.forward_kinematics(&q);
        let e = pose_error(&current, target);
        let pos_err = Vector3::new(e[0], e[1], e[2]).norm();
        let rot_err = Vector3::new(e[3], e[4], e[5]).norm();
        let total = pos_err + rot_err;
        if total < best_err {
            best_err = total;
            best = q;
            best_pos = pos_err;
            best_rot = rot_err;
        }
        if pos_err <= IK_TOL_POS && rot_err <= IK_TOL_ROT {
            return Ok(IkResult { q, converged: true, iters: iter, pos_err, rot_err });
        }
        if iter == IK_MAX_ITERS {
            break;
        }

        // Central-difference Jacobian of the 6D pose error.
        let mut jac = Matrix6::<f64>::zeros();
        for j in 0..6 {
            let mut qp = q;
            qp[j] += JAC_H;
            let mut qm = q;
            qm[j] -= JAC_H;
            let ep = pose_error(&model.forward_kinematics(&qp), target);
            let em = pose_error(&model.forward_kinematics(&qm), target);
            // d(error)/dq = -d(pose)/dq; solve directly for the step that
            // reduces the error, so keep the signed difference as-is.
            let col = (em - ep) / (2.0 * JAC_H);
            jac.set_column(j, &col);
        }

        // (J^T J + lambda^2 I) dq = J^T e
        let jtj = jac.transpose() * jac + Matrix6::identity() * (DLS_LAMBDA * DLS_LAMBDA);
        let rhs = jac.transpose() * e;
        let dq = match jtj.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => rhs * (1.0 / (1.0 + DLS_LAMBDA)),
        };
        // Trust region: cap the step to keep the linearization honest.
        let step_norm = dq.norm();
        let scale = if step_norm > 0.5 { 0.5 / step_norm } else { 1.0 };
        for j in 0..6 {
            q[j] += dq[j] * scale;
        }
        model.clamp_joints(&mut q);
    }

    Ok(IkResult {
        q: best,
        converged: false,
        iters: IK_MAX_ITERS,
        pos_err: best_pos,
        rot_err: best_rot,
    })
}
