use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::kernels::KernelPair;

/// Below this many active particles force loops run on one thread.
const PARALLEL_THRESHOLD: usize = 256;

/// Positions, current and initial charges and collision times of `n`
/// particles at time `t`.
///
/// Annihilated particles are kept with charge `0`; their position stays at
/// the value it had at their collision time `tau[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub x: Vec<f64>,
    pub b: Vec<i8>,
    pub b0: Vec<i8>,
    /// Collision time per particle, `+inf` while still active.
    pub tau: Vec<f64>,
    pub t: f64,
}

impl ParticleState {
    /// Initial state at `t = 0` with all particles active.
    ///
    /// Requires strictly increasing positions and charges in `{-1, +1}`.
    pub fn new(x: Vec<f64>, charges: Vec<i8>) -> Result<Self, SimError> {
        if x.len() != charges.len() {
            return Err(SimError::InvalidState(format!(
                "{} positions but {} charges",
                x.len(),
                charges.len()
            )));
        }
        if x.is_empty() {
            return Err(SimError::InvalidState("no particles".into()));
        }
        if let Some(i) = charges.iter().position(|&c| c != 1 && c != -1) {
            return Err(SimError::InvalidState(format!(
                "initial charge of particle {i} is {}, expected +1 or -1",
                charges[i]
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(SimError::InvalidState(format!("position {i} is not finite")));
        }
        for i in 1..x.len() {
            if x[i] <= x[i - 1] {
                return Err(if x[i] == x[i - 1] && charges[i] != charges[i - 1] {
                    SimError::OppositeCoincidence { i: i - 1, j: i, x: x[i] }
                } else {
                    SimError::InvalidState(format!(
                        "positions must be strictly increasing: x[{}] = {} >= x[{i}] = {}",
                        i - 1,
                        x[i - 1],
                        x[i]
                    ))
                });
            }
        }
        let n = x.len();
        Ok(Self {
            x,
            b: charges.clone(),
            b0: charges,
            tau: vec![f64::INFINITY; n],
            t: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.b[i] != 0
    }

    /// Indices of charged particles, in index order. Along a solution this
    /// is also position order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.b[i] != 0).collect()
    }

    pub fn active_count(&self) -> usize {
        self.b.iter().filter(|&&c| c != 0).count()
    }

    /// Smallest gap between neighbouring active particles of equal charge,
    /// `+inf` when no such pair exists.
    pub fn min_same_sign_gap(&self) -> f64 {
        let mut last: [Option<f64>; 2] = [None, None];
        let mut gap = f64::INFINITY;
        for (i, &c) in self.b.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let slot = usize::from(c > 0);
            if let Some(prev) = last[slot] {
                gap = gap.min(self.x[i] - prev);
            }
            last[slot] = Some(self.x[i]);
        }
        gap
    }

    /// First pair of same-sign active particles that coincide, if any.
    pub fn same_sign_coincidence(&self) -> Option<(usize, usize)> {
        let mut act: Vec<usize> = self.active_indices();
        act.sort_by(|&a, &b| self.x[a].total_cmp(&self.x[b]).then(a.cmp(&b)));
        let mut last: [Option<usize>; 2] = [None, None];
        let mut prev_pos: Option<f64> = None;
        for &i in &act {
            if prev_pos != Some(self.x[i]) {
                last = [None, None];
            }
            let slot = usize::from(self.b[i] > 0);
            if let Some(j) = last[slot] {
                return Some((j.min(i), j.max(i)));
            }
            last[slot] = Some(i);
            prev_pos = Some(self.x[i]);
        }
        None
    }
}

/// Interaction energy `E_n(x; b)`; `+inf` exactly when two active particles
/// of equal charge share a position.
pub fn energy(state: &ParticleState, pair: &KernelPair) -> f64 {
    let n = state.n();
    let act = state.active_indices();
    let mut sum = 0.0;
    for (a, &i) in act.iter().enumerate() {
        for &j in &act[a + 1..] {
            let r = state.x[i] - state.x[j];
            if state.b[i] == state.b[j] {
                if r == 0.0 {
                    return f64::INFINITY;
                }
                sum += pair.v_value(r);
            } else {
                sum += pair.w_value(r);
            }
        }
    }
    // the double sum counts every unordered pair twice, cancelling the 1/2
    sum / (n * n) as f64
}

/// Velocities of the gradient flow, `-n` times the energy gradient; zero for
/// annihilated particles.
pub fn velocity(state: &ParticleState, pair: &KernelPair) -> Result<Vec<f64>, SimError> {
    if let Some((i, j)) = state.same_sign_coincidence() {
        return Err(SimError::InfiniteEnergy { i, j });
    }
    let sys = ActiveSystem::new(state);
    let y = sys.gather(&state.x);
    let mut v = vec![0.0; y.len()];
    sys.rhs(pair, &y, &mut v);
    let mut out = vec![0.0; state.n()];
    sys.scatter(&v, &mut out);
    Ok(out)
}

/// `(1/n) sum_i |x_i|^k` over all particles, charged or not.
pub fn moment(state: &ParticleState, k: u32) -> f64 {
    moment_of(&state.x, k)
}

pub fn moment_of(x: &[f64], k: u32) -> f64 {
    x.iter().map(|v| v.abs().powi(k as i32)).sum::<f64>() / x.len() as f64
}

/// Compact view of the charged particles, the only ones that move between
/// collisions.
#[derive(Debug, Clone)]
pub(crate) struct ActiveSystem {
    pub idx: Vec<usize>,
    pub charge: Vec<i8>,
    pub n_total: usize,
}

impl ActiveSystem {
    pub fn new(state: &ParticleState) -> Self {
        let idx = state.active_indices();
        let charge = idx.iter().map(|&i| state.b[i]).collect();
        Self {
            idx,
            charge,
            n_total: state.n(),
        }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.idx.iter().map(|&i| x[i]).collect()
    }

    pub fn scatter(&self, y: &[f64], x: &mut [f64]) {
        for (k, &i) in self.idx.iter().enumerate() {
            x[i] = y[k];
        }
    }

    /// Velocity field on the compact positions `y`.
    pub fn rhs(&self, pair: &KernelPair, y: &[f64], out: &mut [f64]) {
        let inv_n = 1.0 / self.n_total as f64;
        let charge = &self.charge;
        let one = |k: usize| -> f64 {
            let (yk, ck) = (y[k], charge[k]);
            let mut s = 0.0;
            for (m, (&ym, &cm)) in y.iter().zip(charge).enumerate() {
                if m == k {
                    continue;
                }
                let r = yk - ym;
                s += if cm == ck {
                    pair.v_prime(r)
                } else {
                    pair.w_prime(r)
                };
            }
            -s * inv_n
        };
        if y.len() >= PARALLEL_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(|(k, o)| *o = one(k));
        } else {
            for (k, o) in out.iter_mut().enumerate() {
                *o = one(k);
            }
        }
    }

    /// `false` if two charged particles of equal sign are out of order or
    /// coincide.
    pub fn same_sign_ordered(&self, y: &[f64]) -> bool {
        let mut last: [Option<f64>; 2] = [None, None];
        for (k, &c) in self.charge.iter().enumerate() {
            let slot = usize::from(c > 0);
            if let Some(prev) = last[slot] {
                if !(y[k] > prev) {
                    return false;
                }
            }
            last[slot] = Some(y[k]);
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;

    fn log_zero() -> KernelPair {
        KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::Zero).unwrap()
    }

    #[test]
    fn energy_examples() {
        let p = log_zero();
        let s = ParticleState::new(vec![0.0, 0.5], vec![1, 1]).unwrap();
        // (1/(2*4)) * (V(-0.5) + V(0.5)) = log(2)/4
        assert!((energy(&s, &p) - 0.173_286_795_139_986_33).abs() < 1e-15);
        let s = ParticleState::new(vec![0.0, 1.0], vec![1, -1]).unwrap();
        assert_eq!(energy(&s, &p), 0.0);
        let mut s = ParticleState::new(vec![0.0, 1.0], vec![1, 1]).unwrap();
        s.x[1] = 0.0;
        assert_eq!(energy(&s, &p), f64::INFINITY);
    }

    #[test]
    fn velocity_examples() {
        let p = log_zero();
        let s = ParticleState::new(vec![0.0, 1.0], vec![1, 1]).unwrap();
        assert_eq!(velocity(&s, &p).unwrap(), vec![-0.5, 0.5]);

        let delta = 0.2;
        let a = 0.3;
        let p = KernelPair::new(
            KernelFamily::LogRepulsive,
            KernelFamily::regularized_log(delta).unwrap(),
        )
        .unwrap();
        let s = ParticleState::new(vec![-a, a], vec![1, -1]).unwrap();
        let v = velocity(&s, &p).unwrap();
        let expected = a / (4.0 * a * a + delta * delta);
        assert!((v[0] - expected).abs() < 1e-15);
        assert_eq!(v[1], -v[0]);
    }

    #[test]
    fn annihilated_particles_do_not_move_or_push() {
        let p = log_zero();
        let mut s = ParticleState::new(vec![0.0, 1.0, 3.0], vec![1, -1, 1]).unwrap();
        s.b = vec![0, 0, 0];
        assert_eq!(velocity(&s, &p).unwrap(), vec![0.0; 3]);
        s.b = vec![0, 0, 1];
        assert_eq!(velocity(&s, &p).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn coincident_same_sign_is_rejected() {
        let p = log_zero();
        let mut s = ParticleState::new(vec![0.0, 1.0, 2.0], vec![1, -1, 1]).unwrap();
        s.x[2] = 0.0;
        assert!(matches!(
            velocity(&s, &p),
            Err(SimError::InfiniteEnergy { i: 0, j: 2 })
        ));
    }

    #[test]
    fn moment_examples() {
        let s = ParticleState::new(vec![-1.0, 1.0], vec![1, 1]).unwrap();
        assert_eq!(moment(&s, 2), 1.0);
        assert_eq!(moment_of(&[0.0, 0.0, 0.0], 4), 0.0);
        assert!((moment_of(&[1.0, 2.0, 3.0], 2) - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(ParticleState::new(vec![0.0, 0.0], vec![1, 1]).is_err());
        assert!(matches!(
            ParticleState::new(vec![0.0, 0.0], vec![1, -1]),
            Err(SimError::OppositeCoincidence { i: 0, j: 1, .. })
        ));
        assert!(ParticleState::new(vec![0.0, 1.0], vec![1, 0]).is_err());
        assert!(ParticleState::new(vec![1.0, 0.0], vec![1, -1]).is_err());
    }
}
