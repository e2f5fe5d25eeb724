//! Dormand–Prince 5(4) stepping of the charged particles with a gap-based
//! step limit, an ordering guard and a continuous extension used for event
//! location.

use super::state::{ActiveSystem, ParticleState};
use super::{SimConfig, SimError};
use crate::kernels::KernelPair;

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights (identical to the last row of `A`).
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Continuous extension coefficients (Hairer & Wanner, DOPRI5 `contd5`).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Fourth-order interpolant over one accepted step, on the compact
/// (charged-only) coordinates.
#[derive(Debug, Clone)]
pub struct DenseOutput {
    pub(crate) t0: f64,
    pub(crate) h: f64,
    r: [Vec<f64>; 5],
}

impl DenseOutput {
    /// Interpolated position of compact coordinate `k` at `theta` in `[0, 1]`.
    #[inline]
    pub fn position(&self, k: usize, theta: f64) -> f64 {
        let [r1, r2, r3, r4, r5] = &self.r;
        let s = 1.0 - theta;
        r1[k] + theta * (r2[k] + s * (r3[k] + theta * (r4[k] + s * r5[k])))
    }

    /// Interpolated velocity of compact coordinate `k` at `theta`.
    #[inline]
    pub fn velocity(&self, k: usize, theta: f64) -> f64 {
        let [_, r2, r3, r4, r5] = &self.r;
        let s = 1.0 - theta;
        let p = r3[k] + theta * (r4[k] + s * r5[k]);
        let dp = r4[k] + (1.0 - 2.0 * theta) * r5[k];
        let q = r2[k] + s * p;
        let dq = -p + s * dp;
        (q + theta * dq) / self.h
    }

    pub fn len(&self) -> usize {
        self.r[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.r[0].is_empty()
    }
}

/// Result of one accepted step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub before: ParticleState,
    pub after: ParticleState,
    pub dt_used: f64,
    /// Suggested size of the next step.
    pub dt_next: f64,
    /// Scaled local error estimate (`<= 1` for accepted adaptive steps).
    pub error_estimate: f64,
    /// `(1/n) * integral of |x'|^2` over the step, from the stage velocities.
    pub dissipation: f64,
    pub rejected: usize,
    pub(crate) dense: DenseOutput,
    pub(crate) system: ActiveSystem,
}

/// Largest step allowed by the same-sign gap: the drift on a gap `g` is of
/// order `bound / (n g)`, so its relative change per step stays small when
/// `dt <= guard * n * g^2 / bound`.
pub fn gap_limit(state: &ParticleState, pair: &KernelPair, guard: f64) -> f64 {
    let g = state.min_same_sign_gap();
    if !g.is_finite() || pair.bound_r_v_prime == 0.0 {
        return f64::INFINITY;
    }
    guard * state.n() as f64 * g * g / pair.bound_r_v_prime
}

struct Trial {
    y_new: Vec<f64>,
    k: [Vec<f64>; 7],
    err: f64,
}

fn attempt(sys: &ActiveSystem, pair: &KernelPair, y: &[f64], k1: &[f64], h: f64, cfg: &SimConfig) -> Trial {
    let m = y.len();
    let mut k: [Vec<f64>; 7] = Default::default();
    k[0] = k1.to_vec();
    let mut tmp = vec![0.0; m];
    for s in 1..7 {
        for i in 0..m {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(s) {
                acc += A[s][j] * kj[i];
            }
            tmp[i] = y[i] + h * acc;
        }
        let mut ks = vec![0.0; m];
        sys.rhs(pair, &tmp, &mut ks);
        k[s] = ks;
    }
    // stage 7 is evaluated at the fifth-order solution (FSAL)
    let y_new = tmp;
    let mut err = 0.0f64;
    for i in 0..m {
        let mut e = 0.0;
        for (s, ks) in k.iter().enumerate() {
            e += E[s] * ks[i];
        }
        let e = (h * e).abs();
        let scale = cfg.atol + cfg.tol_step * y[i].abs().max(y_new[i].abs());
        let ratio = if e == 0.0 {
            0.0
        } else if scale == 0.0 {
            f64::INFINITY
        } else {
            e / scale
        };
        err = err.max(ratio);
    }
    if y_new.iter().any(|v| !v.is_finite()) {
        err = f64::INFINITY;
    }
    Trial { y_new, k, err }
}

/// Advances `state` by one accepted step, starting from the trial size
/// `dt` and never exceeding `dt_cap`.
///
/// Rejected trials (local error above tolerance, or two same-sign particles
/// out of order) shrink the step; falling below `dt_min` is an error. With
/// `config.fixed_dt` set, every trial is accepted as is.
pub fn step(
    state: &ParticleState,
    pair: &KernelPair,
    config: &SimConfig,
    dt: f64,
    dt_cap: f64,
) -> Result<StepOutput, SimError> {
    let sys = ActiveSystem::new(state);
    let y = sys.gather(&state.x);
    let m = y.len();
    let mut k1 = vec![0.0; m];
    sys.rhs(pair, &y, &mut k1);

    let fixed = config.fixed_dt.is_some();
    let mut h = if fixed { dt.min(dt_cap) } else {
        dt.min(dt_cap).min(gap_limit(state, pair, config.gap_guard))
    };
    let mut rejected = 0;
    loop {
        if !fixed && h < config.dt_min && h < dt_cap {
            return Err(SimError::StepTooSmall {
                t: state.t,
                dt: h,
                dump: format!("{state:?}"),
            });
        }
        let trial = attempt(&sys, pair, &y, &k1, h, config);
        let ordered = sys.same_sign_ordered(&trial.y_new);
        if fixed || (trial.err <= 1.0 && ordered) {
            let fac = if trial.err == 0.0 {
                5.0
            } else {
                (0.9 * trial.err.powf(-0.2)).clamp(0.2, 5.0)
            };
            let fac = if rejected > 0 { fac.min(1.0) } else { fac };
            let mut dissipation = 0.0;
            for (s, ks) in trial.k.iter().enumerate() {
                if B[s] != 0.0 {
                    dissipation += B[s] * ks.iter().map(|v| v * v).sum::<f64>();
                }
            }
            dissipation *= h / state.n() as f64;

            let r1 = y.clone();
            let r2: Vec<f64> = (0..m).map(|i| trial.y_new[i] - y[i]).collect();
            let r3: Vec<f64> = (0..m).map(|i| h * trial.k[0][i] - r2[i]).collect();
            let r4: Vec<f64> = (0..m)
                .map(|i| r2[i] - h * trial.k[6][i] - r3[i])
                .collect();
            let r5: Vec<f64> = (0..m)
                .map(|i| {
                    let mut acc = 0.0;
                    for (s, ks) in trial.k.iter().enumerate() {
                        acc += D[s] * ks[i];
                    }
                    h * acc
                })
                .collect();

            let mut after = state.clone();
            sys.scatter(&trial.y_new, &mut after.x);
            after.t = state.t + h;
            return Ok(StepOutput {
                before: state.clone(),
                after,
                dt_used: h,
                dt_next: if fixed { dt } else { h * fac },
                error_estimate: trial.err,
                dissipation,
                rejected,
                dense: DenseOutput {
                    t0: state.t,
                    h,
                    r: [r1, r2, r3, r4, r5],
                },
                system: sys,
            });
        }
        rejected += 1;
        h = if !ordered || !trial.err.is_finite() {
            0.5 * h
        } else {
            h * (0.9 * trial.err.powf(-0.2)).clamp(0.2, 1.0)
        };
    }
}

/// `(1/n) * integral of |x'|^2` over `theta` in `[0, theta_end]` of the
/// step, from the interpolant (5-point Gauss–Legendre).
pub(crate) fn partial_dissipation(dense: &DenseOutput, n_total: usize, theta_end: f64) -> f64 {
    const NODES: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let half = 0.5 * theta_end;
    let mut acc = 0.0;
    for (z, w) in NODES.iter().zip(WEIGHTS) {
        let theta = half * (1.0 + z);
        let s: f64 = (0..dense.len())
            .map(|k| {
                let v = dense.velocity(k, theta);
                v * v
            })
            .sum();
        acc += w * s;
    }
    acc * half * dense.h / n_total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::energy;
    use crate::kernels::KernelFamily;

    fn cfg() -> SimConfig {
        SimConfig {
            tol_step: 1e-10,
            atol: 0.0,
            ..SimConfig::default()
        }
    }

    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

    #[test]
    fn tableau_is_consistent() {
        for s in 1..7 {
            let row: f64 = A[s].iter().sum();
            assert!((row - C[s]).abs() < 1e-14, "row {s}");
        }
        assert!((B.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(E.iter().sum::<f64>().abs() < 1e-14);
        // quadrature order conditions sum b c^(q-1) = 1/q for q <= 5
        for q in 1..=5 {
            let s: f64 = B.iter().zip(C).map(|(b, c)| b * c.powi(q - 1)).sum();
            assert!((s - 1.0 / q as f64).abs() < 1e-14, "q = {q}");
        }
    }

    #[test]
    fn frozen_state_is_unchanged() {
        let pair = KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::Zero).unwrap();
        let mut s = ParticleState::new(vec![-1.0, 0.3, 2.0], vec![1, -1, 1]).unwrap();
        s.b = vec![0, 0, 0];
        let out = step(&s, &pair, &cfg(), 0.1, 1.0).unwrap();
        assert_eq!(out.after.x, s.x);
        assert_eq!(out.dissipation, 0.0);
    }

    #[test]
    fn repulsive_pair_gap_grows() {
        let pair = KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::Zero).unwrap();
        let s = ParticleState::new(vec![0.0, 1.0], vec![1, 1]).unwrap();
        let out = step(&s, &pair, &cfg(), 0.05, 1.0).unwrap();
        let g = out.after.x[1] - out.after.x[0];
        assert!(g > 1.0);
        let exact = (1.0 + 2.0 * out.dt_used).sqrt();
        assert!((g - exact).abs() < 1e-9);
        // energy drop equals dissipation for a single smooth step
        let de = energy(&s, &pair) - energy(&out.after, &pair);
        assert!((de - out.dissipation).abs() < 1e-10, "{de} {}", out.dissipation);
    }

    #[test]
    fn dense_output_interpolates_step() {
        let pair = KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::Zero).unwrap();
        let s = ParticleState::new(vec![0.0, 1.0], vec![1, 1]).unwrap();
        let out = step(&s, &pair, &cfg(), 0.2, 0.2).unwrap();
        for theta in [0.0, 0.3, 0.7, 1.0] {
            let g = out.dense.position(1, theta) - out.dense.position(0, theta);
            let exact = (1.0 + 2.0 * theta * out.dt_used).sqrt();
            assert!((g - exact).abs() < 1e-7, "theta {theta}: {g} vs {exact}");
            let v = out.dense.velocity(1, theta);
            assert!((v - 0.5 / exact).abs() < 1e-6);
        }
        assert_eq!(out.dense.position(0, 1.0), out.after.x[0]);
        let full = partial_dissipation(&out.dense, 2, 1.0);
        assert!((full - out.dissipation).abs() < 1e-8);
    }

    #[test]
    fn too_small_step_is_an_error() {
        let pair = KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::Zero).unwrap();
        let s = ParticleState::new(vec![0.0, 1e-9], vec![1, 1]).unwrap();
        let config = SimConfig {
            dt_min: 1.0,
            dt_init: 1.0,
            ..cfg()
        };
        assert!(matches!(
            step(&s, &pair, &config, 1.0, 10.0),
            Err(SimError::StepTooSmall { .. })
        ));
    }

    #[test]
    fn crossing_trial_is_rejected() {
        // three same-sign particles with a tiny middle gap: a large trial
        // would reorder them, the accepted step must not
        let pair = KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::Zero).unwrap();
        let s = ParticleState::new(vec![0.0, 1e-3, 1.0], vec![1, 1, 1]).unwrap();
        let config = SimConfig {
            gap_guard: f64::INFINITY,
            tol_step: 1.0,
            ..cfg()
        };
        let out = step(&s, &pair, &config, 10.0, 10.0).unwrap();
        assert!(out.rejected > 0);
        assert!(out.after.x[0] < out.after.x[1] && out.after.x[1] < out.after.x[2]);
    }
}
