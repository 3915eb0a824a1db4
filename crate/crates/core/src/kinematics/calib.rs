//! Calibration pipeline: base-pose estimation from traced circles,
//! regularized DH-parameter fitting against tracked tip positions, and a
//! small residual network predicting angle-dependent joint backlash.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::KinematicModel;
use crate::nn::{adam_step, Activation, AdamState, Arch, Mlp};
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("degenerate point set (collinear or coincident)")]
    DegeneratePoints,
    #[error("need at least {need} samples for residual fitting, got {got}")]
    InsufficientData { got: usize, need: usize },
}

/// One tracked pose pair: commanded joints plus the measured fixed-tip
/// position, with the per-joint approach direction for backlash modeling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibSample {
    pub joint_angles: [f64; 6],
    pub aperture: f64,
    pub measured_tip: Vector3<f64>,
    pub approach_direction: [f64; 6],
}

/// Robot base estimate from a traced circle: the circle's center and the
/// spin axis (plane normal), plus tilt from world vertical.
#[derive(Debug, Clone, Copy)]
pub struct BaseEstimate {
    pub center: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub tilt_rad: f64,
}

/// Least-squares plane fit followed by an in-plane algebraic circle fit.
pub fn estimate_base(points: &[Vector3<f64>]) -> Result<BaseEstimate, CalibError> {
    if points.len() < 10 {
        return Err(CalibError::TooFewPoints { got: points.len(), need: 10 });
    }
    let n = points.len() as f64;
    let centroid: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    // Sort eigenpairs ascending; the smallest direction is the plane normal.
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let _l_min = eig.eigenvalues[idx[0]].max(0.0);
    let l_mid = eig.eigenvalues[idx[1]].max(0.0);
    let l_max = eig.eigenvalues[idx[2]].max(0.0);
    // Coincident points give all ~0; collinear points give two ~0.
    if l_max < 1e-18 || l_mid < 1e-12 * l_max.max(1e-12) {
        return Err(CalibError::DegeneratePoints);
    }
    let mut axis: Vector3<f64> = eig.eigenvectors.column(idx[0]).into();
    if axis.z < 0.0 {
        axis = -axis;
    }
    let e1: Vector3<f64> = eig.eigenvectors.column(idx[2]).into();
    let e2 = axis.cross(&e1);

    // Kasa circle fit in plane coordinates: u^2 + v^2 = 2u*cu + 2v*cv + k.
    let mut a = DMatrix::<f64>::zeros(points.len(), 3);
    let mut b = DVector::<f64>::zeros(points.len());
    for (i, p) in points.iter().enumerate() {
        let d = p - centroid;
        let (u, v) = (d.dot(&e1), d.dot(&e2));
        a[(i, 0)] = 2.0 * u;
        a[(i, 1)] = 2.0 * v;
        a[(i, 2)] = 1.0;
        b[i] = u * u + v * v;
    }
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let sol = ata
        .cholesky()
        .map(|ch| ch.solve(&atb))
        .ok_or(CalibError::DegeneratePoints)?;
    let center = centroid + sol[0] * e1 + sol[1] * e2;
    let tilt = axis.z.clamp(-1.0, 1.0).acos();
    Ok(BaseEstimate { center, axis, tilt_rad: tilt })
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub model: KinematicModel,
    /// RMS 3D tip error against the measurements after fitting (m).
    pub rms: f64,
    /// Same metric under the initial model.
    pub initial_rms: f64,
    pub converged: bool,
    pub iters: usize,
}

const N_DH_PARAMS: usize = 24;

fn pack_dh(model: &KinematicModel) -> [f64; N_DH_PARAMS] {
    let mut theta = [0.0; N_DH_PARAMS];
    for (j, dh) in model.dh.iter().enumerate() {
        theta[4 * j] = dh.a;
        theta[4 * j + 1] = dh.alpha;
        theta[4 * j + 2] = dh.d;
        theta[4 * j + 3] = dh.theta;
    }
    theta
}

fn unpack_dh(model: &KinematicModel, theta: &[f64]) -> KinematicModel {
    let mut out = model.clone();
    for (j, dh) in out.dh.iter_mut().enumerate() {
        dh.a = theta[4 * j];
        dh.alpha = theta[4 * j + 1];
        dh.d = theta[4 * j + 2];
        dh.theta = theta[4 * j + 3];
    }
    out
}

fn fixed_tip(model: &KinematicModel, q: &[f64; 6]) -> Vector3<f64> {
    model.tip_positions(q, 0.0).0
}

fn tip_rms(model: &KinematicModel, samples: &[CalibSample]) -> f64 {
    let sum: f64 = samples
        .iter()
        .map(|s| (fixed_tip(model, &s.joint_angles) - s.measured_tip).norm_squared())
        .sum();
    (sum / samples.len() as f64).sqrt()
}

/// Fits DH parameters to the samples by Levenberg-Marquardt on tip
/// residuals, with a quadratic penalty anchoring the fit to `model_init`.
///
/// Divergence (no accepted step) returns the initial model flagged
/// `converged = false`.
pub fn calibrate(
    model_init: &KinematicModel,
    samples: &[CalibSample],
    reg_weight: f64,
) -> Result<CalibrationResult, CalibError> {
    if samples.len() < 50 {
        return Err(CalibError::TooFewPoints { got: samples.len(), need: 50 });
    }
    let theta0 = pack_dh(model_init);
    let n_res = samples.len() * 3 + N_DH_PARAMS;
    let sqrt_w = reg_weight.sqrt();

    let residuals = |theta: &[f64]| -> DVector<f64> {
        let model = unpack_dh(model_init, theta);
        let mut r = DVector::zeros(n_res);
        for (i, s) in samples.iter().enumerate() {
            let e = fixed_tip(&model, &s.joint_angles) - s.measured_tip;
            r[3 * i] = e.x;
            r[3 * i + 1] = e.y;
            r[3 * i + 2] = e.z;
        }
        for k in 0..N_DH_PARAMS {
            r[samples.len() * 3 + k] = sqrt_w * (theta[k] - theta0[k]);
        }
        r
    };

    let mut theta = theta0;
    let mut r = residuals(&theta);
    let initial_cost = r.norm_squared();
    let initial_rms = tip_rms(model_init, samples);
    let mut cost = initial_cost;
    let mut lambda = 1e-6;
    let mut accepted_any = false;
    let mut iters = 0;

    for _ in 0..60 {
        iters += 1;
        // Central-difference Jacobian of the extended residual vector.
        let mut jac = DMatrix::<f64>::zeros(n_res, N_DH_PARAMS);
        let h = 1e-7;
        for k in 0..N_DH_PARAMS {
            let mut tp = theta;
            tp[k] += h;
            let mut tm = theta;
            tm[k] -= h;
            let rp = residuals(&tp);
            let rm = residuals(&tm);
            for i in 0..n_res {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;

        let mut improved = false;
        for _ in 0..8 {
            let lhs = &jtj + DMatrix::identity(N_DH_PARAMS, N_DH_PARAMS) * lambda;
            let Some(ch) = lhs.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = ch.solve(&jtr);
            let mut trial = theta;
            for k in 0..N_DH_PARAMS {
                trial[k] -= step[k];
            }
            let r_trial = residuals(&trial);
            let c_trial = r_trial.norm_squared();
            if c_trial.is_finite() && c_trial < cost {
                theta = trial;
                r = r_trial;
                let rel = (cost - c_trial) / cost.max(1e-300);
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                accepted_any = true;
                if rel < 1e-12 {
                    iters += 1;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
        if cost < 1e-24 {
            break;
        }
    }

    if !accepted_any && cost >= initial_cost {
        return Ok(CalibrationResult {
            model: model_init.clone(),
            rms: initial_rms,
            initial_rms,
            converged: false,
            iters,
        });
    }
    let model = unpack_dh(model_init, &theta);
    let rms = tip_rms(&model, samples);
    Ok(CalibrationResult { model, rms, initial_rms, converged: true, iters })
}

/// Residual backlash predictor: a small network mapping joint angles to a
/// per-joint backlash estimate, bounded to at most 1.1x the nominal width.
#[derive(Debug, Clone)]
pub struct ResidualFit {
    net: Mlp,
    nominal: [f64; 7],
    pub before_rms: f64,
    pub after_rms: f64,
    /// False when training failed to improve the fit; predictions are then 0.
    pub enabled: bool,
}

impl ResidualFit {
    /// Predicted backlash width per joint (rad), in `[0, 1.1 * nominal)`.
    pub fn predict(&self, q: &[f64; 6]) -> [f64; 7] {
        if !self.enabled {
            return [0.0; 7];
        }
        let raw = self.net.output(q.as_slice()).expect("shape fixed at build");
        std::array::from_fn(|j| 1.1 * self.nominal[j] * sigmoid(raw[j]))
    }

    /// Tip position after removing the predicted backlash from the command.
    pub fn corrected_tip(&self, model: &KinematicModel, s: &CalibSample) -> Vector3<f64> {
        let b = self.predict(&s.joint_angles);
        let q: [f64; 6] =
            std::array::from_fn(|j| s.joint_angles[j] - s.approach_direction[j] * b[j] / 2.0);
        fixed_tip(model, &q)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains the residual predictor on FK residuals.
///
/// The tip error is linearized through the cached tip Jacobian per sample,
/// which makes the loss gradient with respect to the predicted backlash
/// analytic; corrections this small (< 0.01 rad) stay well inside the
/// linear regime. Training that fails to reduce the RMS yields a disabled
/// (identity) predictor.
pub fn fit_residual(
    model: &KinematicModel,
    samples: &[CalibSample],
) -> Result<ResidualFit, CalibError> {
    if samples.len() < 100 {
        return Err(CalibError::InsufficientData { got: samples.len(), need: 100 });
    }
    let nominal = model.nominal_backlash;
    let n = samples.len();

    // Cache per-sample nominal tip, error, and tip Jacobian (3x6).
    let mut errs: Vec<Vector3<f64>> = Vec::with_capacity(n);
    let mut jacs: Vec<[Vector3<f64>; 6]> = Vec::with_capacity(n);
    let h = 1e-6;
    for s in samples {
        errs.push(fixed_tip(model, &s.joint_angles) - s.measured_tip);
        let cols: [Vector3<f64>; 6] = std::array::from_fn(|j| {
            let mut qp = s.joint_angles;
            qp[j] += h;
            let mut qm = s.joint_angles;
            qm[j] -= h;
            (fixed_tip(model, &qp) - fixed_tip(model, &qm)) / (2.0 * h)
        });
        jacs.push(cols);
    }

    let mut rng = stream(0xbac1a5, "residual-fit");
    let arch = Arch::new(vec![6, 32, 32, 7], Activation::Tanh, false);
    let mut net = Mlp::init(arch, &mut rng);
    let mut opt = AdamState::new(net.theta.len(), 3e-3);

    let epochs = 400;
    for _ in 0..epochs {
        // Full-batch: stack all inputs.
        let xs: Vec<f64> = samples.iter().flat_map(|s| s.joint_angles).collect();
        let (raw, cache) = net.forward(&xs).expect("shapes fixed");
        let mut d_raw = vec![0.0; raw.len()];
        for (i, s) in samples.iter().enumerate() {
            let out = &raw[i * 7..(i + 1) * 7];
            // pred_err = e - J (signs .* delta) / 2
            let mut pred_err = errs[i];
            let mut delta = [0.0; 6];
            for j in 0..6 {
                delta[j] = 1.1 * nominal[j] * sigmoid(out[j]);
                pred_err -= jacs[i][j] * (s.approach_direction[j] * delta[j] / 2.0);
            }
            for j in 0..6 {
                let dl_ddelta =
                    -jacs[i][j].dot(&pred_err) * s.approach_direction[j];
                let sg = sigmoid(out[j]);
                d_raw[i * 7 + j] = dl_ddelta * 1.1 * nominal[j] * sg * (1.0 - sg) / n as f64;
            }
        }
        let (grads, _) = net.backward(&cache, &d_raw).expect("shapes fixed");
        adam_step(&mut net.theta, &grads, &mut opt);
    }

    let mut fit = ResidualFit {
        net,
        nominal,
        before_rms: tip_rms(model, samples),
        after_rms: 0.0,
        enabled: true,
    };
    let after: f64 = samples
        .iter()
        .map(|s| (fit.corrected_tip(model, s) - s.measured_tip).norm_squared())
        .sum();
    fit.after_rms = (after / n as f64).sqrt();
    if !fit.after_rms.is_finite() || fit.after_rms > fit.before_rms {
        fit.enabled = false;
        fit.after_rms = fit.before_rms;
    }
    Ok(fit)
}
