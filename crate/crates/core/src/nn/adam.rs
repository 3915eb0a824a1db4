//! Bias-corrected Adam over a flat parameter vector.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates skipped because a gradient was non-finite.
    pub skipped: u64,
}

impl AdamState {
    pub fn new(param_len: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            skipped: 0,
        }
    }
}

/// One Adam update in place. A non-finite gradient skips the whole step and
/// bumps the fault counter, leaving parameters and moments untouched.
pub fn adam_step(theta: &mut [f64], grads: &[f64], opt: &mut AdamState) {
    assert_eq!(theta.len(), grads.len());
    assert_eq!(theta.len(), opt.m.len());
    if grads.iter().any(|g| !g.is_finite()) {
        opt.skipped += 1;
        return;
    }
    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);
    for i in 0..theta.len() {
        let g = grads[i];
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
        let mhat = opt.m[i] / bc1;
        let vhat = opt.v[i] / bc2;
        theta[i] -= opt.lr * mhat / (vhat.sqrt() + opt.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut theta = vec![1.0, -2.0, 0.5];
        let mut opt = AdamState::new(3, 1e-3);
        adam_step(&mut theta, &[0.0; 3], &mut opt);
        assert_eq!(theta, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn quadratic_converges() {
        // f(w) = w^2, lr = 0.1 from w = 1: the iterate marches down
        // monotonically while far from the optimum, rings once around zero
        // from momentum, and settles near the minimum by step 100.
        let mut w = vec![1.0_f64];
        let mut opt = AdamState::new(1, 0.1);
        let mut prev = w[0].abs();
        for _ in 0..9 {
            let g = vec![2.0 * w[0]];
            adam_step(&mut w, &g, &mut opt);
            assert!(w[0].abs() < prev, "|w| grew early: {} -> {}", prev, w[0].abs());
            prev = w[0].abs();
        }
        let mut late_max = 0.0_f64;
        for k in 9..100 {
            let g = vec![2.0 * w[0]];
            adam_step(&mut w, &g, &mut opt);
            if k >= 50 {
                late_max = late_max.max(w[0].abs());
            }
        }
        assert!(late_max < 0.05, "late envelope {late_max}");
        assert!(w[0].abs() < 1e-2, "w after 100 steps: {}", w[0]);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut w = vec![0.3, -0.7];
            let mut opt = AdamState::new(2, 0.05);
            for k in 0..50 {
                let g = vec![w[0] + k as f64 * 0.01, w[1] * 2.0];
                adam_step(&mut w, &g, &mut opt);
            }
            w
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_skips_and_counts() {
        let mut w = vec![1.0];
        let mut opt = AdamState::new(1, 0.1);
        adam_step(&mut w, &[f64::NAN], &mut opt);
        assert_eq!(w[0], 1.0);
        assert_eq!(opt.skipped, 1);
        assert_eq!(opt.step, 0);
    }
}
