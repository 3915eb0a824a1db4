//! Forward/inverse kinematics for the 6-DOF arm with chopstick tips,
//! backlash modeling, and the calibration pipeline (base-pose estimation,
//! regularized parameter fitting, residual backlash prediction).

mod calib;
mod ik;
mod model;

pub use calib::{
    calibrate, estimate_base, fit_residual, BaseEstimate, CalibError, CalibSample,
    CalibrationResult, ResidualFit,
};
pub use ik::{inverse_kinematics, IkError, IkResult, IK_MAX_ITERS, IK_TOL_POS, IK_TOL_ROT};
pub use model::{
    apply_backlash, BacklashPlay, ChopstickGeometry, DhParam, KinematicModel, WorkspaceBox,
};
