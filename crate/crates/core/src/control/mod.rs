//! Hierarchical mixed-frequency control (policy-rate pose commands,
//! joint-space interpolation, 1 kHz PD tracking), the visual-servo state
//! machine baseline, and scripted demo generation.

mod demos;
mod hier;
mod vs;

pub use demos::{generate_demos, DemoDataset};
pub use hier::{hier_step, Action, Controller, HierConfig, HierOutcome};
pub use vs::{vs_step, VsContext, VsController, VsGains, VsPhase, VsState};

use crate::sim::PdGains;

/// Linear joint-space interpolation from `q_from` to `q_to` over `n_ticks`
/// low-level ticks; element `k` (1-based) is `q_from + k/n (q_to - q_from)`,
/// so the final element is exactly `q_to`.
pub fn interpolate_targets(q_from: &[f64; 7], q_to: &[f64; 7], n_ticks: usize) -> Vec<[f64; 7]> {
    assert!(n_ticks >= 1, "need at least one tick");
    (1..=n_ticks)
        .map(|k| {
            let t = k as f64 / n_ticks as f64;
            std::array::from_fn(|i| q_from[i] + t * (q_to[i] - q_from[i]))
        })
        .collect()
}

/// PD tracking torque per joint, clamped to the gain's torque limit.
pub fn pd_torque(q: &[f64; 7], qd: &[f64; 7], q_target: &[f64; 7], gains: &[PdGains; 7]) -> [f64; 7] {
    std::array::from_fn(|i| {
        let g = &gains[i];
        (g.kp * (q_target[i] - q[i]) - g.kd * qd[i]).clamp(-g.tau_max, g.tau_max)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn constant_interpolation_for_equal_endpoints() {
        let q = [0.3; 7];
        let seq = interpolate_targets(&q, &q, 50);
        assert_eq!(seq.len(), 50);
        for s in seq {
            assert_eq!(s, q);
        }
    }

    #[test]
    fn scalar_ramp_is_linear() {
        let from = [0.0; 7];
        let mut to = [0.0; 7];
        to[0] = 0.05;
        let seq = interpolate_targets(&from, &to, 50);
        for (k, s) in seq.iter().enumerate() {
            assert_relative_eq!(s[0], 0.001 * (k + 1) as f64, epsilon = 1e-12);
        }
        assert_eq!(seq.last().unwrap()[0], 0.05);
    }

    #[test]
    fn consecutive_interpolations_are_continuous() {
        let a = [0.1; 7];
        let b = [0.6; 7];
        let c = [-0.2; 7];
        let first = interpolate_targets(&a, &b, 50);
        let second = interpolate_targets(&b, &c, 50);
        // Junction: last of the first segment equals the start point of the
        // second segment's ramp.
        assert_eq!(*first.last().unwrap(), b);
        let step2 = (c[0] - b[0]) / 50.0;
        assert_relative_eq!(second[0][0], b[0] + step2, epsilon = 1e-12);
    }

    #[test]
    fn pd_zero_error_zero_velocity_is_zero_torque() {
        let gains = [PdGains { kp: 10.0, kd: 1.0, tau_max: 5.0 }; 7];
        let q = [0.2; 7];
        let tau = pd_torque(&q, &[0.0; 7], &q, &gains);
        assert_eq!(tau, [0.0; 7]);
    }

    #[test]
    fn pd_formula_worked_example() {
        let gains = [PdGains { kp: 10.0, kd: 1.0, tau_max: 5.0 }; 7];
        let tau = pd_torque(&[0.0; 7], &[0.0; 7], &[0.1; 7], &gains);
        for t in tau {
            assert_relative_eq!(t, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pd_never_exceeds_torque_limit() {
        let gains = [PdGains { kp: 400.0, kd: 40.0, tau_max: 7.5 }; 7];
        let mut rng = crate::rng::stream(21, "pd-sweep");
        for _ in 0..2000 {
            let q: [f64; 7] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            let qd: [f64; 7] = std::array::from_fn(|_| rng.gen_range(-10.0..10.0));
            let qt: [f64; 7] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            for t in pd_torque(&q, &qd, &qt, &gains) {
                assert!(t.abs() <= 7.5 + 1e-12);
            }
        }
    }
}
