use serde::{Deserialize, Serialize};

use super::{CheckContext, CheckReport};
use crate::dynamics::{velocity, SimError, Trajectory};
use crate::kernels::KernelPair;

/// Space factor of a test function, with its derivative in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceFunction {
    /// `psi(x) = x`.
    Linear,
    /// Cubic B-spline `B((x - center) / width)`, supported on
    /// `|x - center| < 2 width`.
    Spline { center: f64, width: f64 },
}

impl SpaceFunction {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            SpaceFunction::Linear => x,
            SpaceFunction::Spline { center, width } => spline((x - center) / width),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            SpaceFunction::Linear => 1.0,
            SpaceFunction::Spline { center, width } => spline_prime((x - center) / width) / width,
        }
    }
}

fn spline(z: f64) -> f64 {
    let a = z.abs();
    if a <= 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        0.0
    }
}

fn spline_prime(z: f64) -> f64 {
    let a = z.abs();
    let d = if a <= 1.0 {
        -2.0 * a + 1.5 * a * a
    } else if a < 2.0 {
        -0.5 * (2.0 - a).powi(2)
    } else {
        0.0
    };
    d * z.signum()
}

/// `phi(t, x) = eta(t) psi(x)` with `eta(t) = (t - t0)(t1 - t)`, which
/// vanishes at both ends of the window `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub space: SpaceFunction,
    pub t0: f64,
    pub t1: f64,
}

impl TestFunction {
    pub fn new(space: SpaceFunction, t0: f64, t1: f64) -> Self {
        Self { space, t0, t1 }
    }

    pub fn eta(&self, t: f64) -> f64 {
        (t - self.t0) * (self.t1 - t)
    }

    pub fn eta_prime(&self, t: f64) -> f64 {
        self.t0 + self.t1 - 2.0 * t
    }
}

/// Residuals of the weak form for both species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakFormResidual {
    pub plus: f64,
    pub minus: f64,
}

impl WeakFormResidual {
    pub fn total(&self) -> f64 {
        self.plus.abs() + self.minus.abs()
    }
}

/// Weak-form residual of the trajectory against one test function.
///
/// For each species the integrand at a sample is
/// `(1/n) sum_i [d_t phi(t, x_i) + phi'(t, x_i) v_i]` over the particles
/// of that initial charge, where the velocity is the one the interaction
/// terms produce (zero once a particle is annihilated). The time integral
/// uses the left-endpoint rule on the samples, which for the exact solution
/// leaves an error proportional to the sample spacing.
pub fn weak_form_residual(
    traj: &Trajectory,
    pair: &KernelPair,
    phi: &TestFunction,
) -> Result<WeakFormResidual, SimError> {
    let mut res = WeakFormResidual { plus: 0.0, minus: 0.0 };
    for w in traj.samples.windows(2) {
        let s = &w[0].state;
        let dt = w[1].t() - s.t;
        if dt <= 0.0 {
            continue;
        }
        let v = velocity(s, pair)?;
        let (eta, eta_p) = (phi.eta(s.t), phi.eta_prime(s.t));
        let inv_n = 1.0 / s.n() as f64;
        for i in 0..s.n() {
            let x = s.x[i];
            let term = inv_n * (eta_p * phi.space.value(x) + eta * phi.space.derivative(x) * v[i]);
            if s.b0[i] > 0 {
                res.plus += dt * term;
            } else {
                res.minus += dt * term;
            }
        }
    }
    Ok(res)
}

/// Largest residual over `functions` as a check against `tolerance`.
pub fn check_weak_form(
    traj: &Trajectory,
    pair: &KernelPair,
    functions: &[TestFunction],
    tolerance: f64,
    scenario: &str,
) -> Result<CheckReport, SimError> {
    let mut worst = 0.0f64;
    let mut at = 0;
    for (k, f) in functions.iter().enumerate() {
        let r = weak_form_residual(traj, pair, f)?.total();
        if !(r <= worst) {
            worst = r;
            at = k;
        }
    }
    let first = traj.initial();
    Ok(CheckReport::new(
        "weak_form_residual",
        worst,
        0.0,
        tolerance,
        CheckContext {
            scenario: scenario.to_string(),
            n: first.n(),
            t_end: traj.last().t(),
            detail: format!("largest for test function {at}"),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, ParticleState, SimConfig};
    use crate::kernels::KernelFamily;

    #[test]
    fn spline_derivative_matches_difference_quotient() {
        let f = SpaceFunction::Spline { center: 0.3, width: 0.7 };
        for k in -30..30 {
            let x = 0.3 + 0.05 * k as f64 + 0.013;
            let h = 1e-6;
            let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
            assert!((fd - f.derivative(x)).abs() < 1e-8, "x = {x}");
        }
        assert!((spline(0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(spline(2.0), 0.0);
        assert!((spline(1.0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn frozen_state_leaves_only_quadrature_error() {
        let pair = KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::Zero).unwrap();
        let mut s = ParticleState::new(vec![-0.2, 0.4], vec![1, -1]).unwrap();
        s.b = vec![0, 0];
        let cfg = SimConfig { t_end: 1.0, record_every: 0.1, ..SimConfig::default() };
        let traj = run(&s, &pair, &cfg).unwrap();
        // only the time-derivative term remains; its left-endpoint sum is
        // sum_k 0.1 (1 - 0.2 k) = 0.1 instead of the exact 0
        for space in [SpaceFunction::Linear, SpaceFunction::Spline { center: 0.0, width: 1.0 }] {
            let r = weak_form_residual(&traj, &pair, &TestFunction::new(space, 0.0, 1.0)).unwrap();
            let expected_plus = space.value(-0.2) * 0.1 * 0.1 * 10.0 / 2.0;
            assert!((r.plus - expected_plus).abs() < 1e-12, "{r:?}");
            let expected_minus = space.value(0.4) * 0.1 * 0.1 * 10.0 / 2.0;
            assert!((r.minus - expected_minus).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn symmetric_configuration_with_odd_test_function() {
        let pair = KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::Zero).unwrap();
        let s = ParticleState::new(vec![-0.5, 0.5], vec![1, 1]).unwrap();
        let cfg = SimConfig { t_end: 1.0, record_every: 0.1, ..SimConfig::default() };
        let traj = run(&s, &pair, &cfg).unwrap();
        let r = weak_form_residual(&traj, &pair, &TestFunction::new(SpaceFunction::Linear, 0.0, 1.0)).unwrap();
        assert!(r.total() < 1e-12, "{r:?}");
    }
}
