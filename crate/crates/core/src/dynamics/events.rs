//! Collision detection, event location and the annihilation bookkeeping.

use serde::{Deserialize, Serialize};

use super::integrator::{partial_dissipation, StepOutput};
use super::state::{energy, ParticleState};
use super::SimConfig;
use crate::kernels::KernelPair;

/// One collision time `t_k` with the particles annihilated there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    #[serde(rename = "t_k")]
    pub t: f64,
    /// Sorted indices of the particles annihilated at `t`.
    #[serde(rename = "Gamma_k")]
    pub indices: Vec<usize>,
    pub gamma_k: usize,
    /// `(positive, negative)` pairs by initial charge.
    pub pairs: Vec<(usize, usize)>,
    /// Signed gap `x_right - x_left` of each pair when it was located.
    pub separations: Vec<f64>,
    /// `E_n` just before and just after the charges were removed.
    pub energy_before: f64,
    pub energy_after: f64,
    /// More than one pairing pass was needed, i.e. a cluster of three or
    /// more charged particles was within the threshold.
    pub degenerate: bool,
}

impl CollisionEvent {
    pub fn energy_jump(&self) -> f64 {
        self.energy_after - self.energy_before
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog {
    pub events: Vec<CollisionEvent>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn total_annihilated(&self) -> usize {
        self.events.iter().map(|e| e.gamma_k).sum()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.t)
    }

    /// Checks ordering of times, parity of every `gamma_k`, the pairing
    /// bijection and the total count against `initial_charges`.
    /// `max_separation` bounds the recorded pair gaps (negative gaps of
    /// pairs located just after crossing are fine).
    pub fn validate(&self, initial_charges: &[i8], max_separation: f64) -> Result<(), String> {
        let n = initial_charges.len();
        let mut seen = vec![false; n];
        let mut last_t = f64::NEG_INFINITY;
        for (k, e) in self.events.iter().enumerate() {
            if !(e.t > last_t) {
                return Err(format!("event {k}: time {} not after {last_t}", e.t));
            }
            last_t = e.t;
            if e.gamma_k != e.indices.len() || e.gamma_k % 2 != 0 || e.gamma_k == 0 {
                return Err(format!("event {k}: gamma_k = {} is not a positive even count", e.gamma_k));
            }
            if e.pairs.len() * 2 != e.gamma_k || e.separations.len() != e.pairs.len() {
                return Err(format!("event {k}: {} pairs for gamma_k = {}", e.pairs.len(), e.gamma_k));
            }
            let mut from_pairs: Vec<usize> = Vec::with_capacity(e.gamma_k);
            for (&(p, m), &sep) in e.pairs.iter().zip(&e.separations) {
                if p >= n || m >= n {
                    return Err(format!("event {k}: index out of range"));
                }
                if initial_charges[p] != 1 || initial_charges[m] != -1 {
                    return Err(format!("event {k}: pair ({p}, {m}) is not (+, -)"));
                }
                if !(sep <= max_separation) {
                    return Err(format!("event {k}: pair ({p}, {m}) separated by {sep}"));
                }
                from_pairs.push(p);
                from_pairs.push(m);
            }
            from_pairs.sort_unstable();
            if from_pairs != e.indices {
                return Err(format!("event {k}: pairs do not cover Gamma_k exactly"));
            }
            for &i in &e.indices {
                if std::mem::replace(&mut seen[i], true) {
                    return Err(format!("event {k}: particle {i} annihilated twice"));
                }
            }
        }
        let total = self.total_annihilated();
        if total > n {
            return Err(format!("{total} annihilated particles out of {n}"));
        }
        Ok(())
    }
}

/// A located collision: the state right after annihilation, the event
/// record and the dissipation accumulated from the step start to the event.
#[derive(Debug, Clone)]
pub struct LocatedEvent {
    pub state: ParticleState,
    pub event: CollisionEvent,
    pub dissipation: f64,
}

/// Signed gap minus threshold of every neighbouring charged pair with
/// opposite charge; non-positive means "collided".
fn min_margin(step: &StepOutput, pairs: &[usize], theta: f64, eps: f64) -> f64 {
    pairs
        .iter()
        .map(|&k| step.dense.position(k + 1, theta) - step.dense.position(k, theta) - eps)
        .fold(f64::INFINITY, f64::min)
}

/// Looks for the first time in the accepted step at which two neighbouring
/// particles of opposite charge come within `eps_annihilate` (or cross).
/// The time is bisected on the step interpolant to `eps_bisect`; every
/// opposite-sign cluster within the threshold at that time is paired greedily
/// from the left and annihilated.
pub fn detect_and_annihilate(
    step: &StepOutput,
    pair: &KernelPair,
    config: &SimConfig,
) -> Option<LocatedEvent> {
    let sys = &step.system;
    let candidates: Vec<usize> = (0..sys.len().saturating_sub(1))
        .filter(|&k| sys.charge[k] != sys.charge[k + 1])
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let eps = config.eps_annihilate;
    let probes = [0.25, 0.5, 0.75, 1.0];
    let mut lo = 0.0;
    let mut hi = None;
    for &th in &probes {
        if min_margin(step, &candidates, th, eps) <= 0.0 {
            hi = Some(th);
            break;
        }
        lo = th;
    }
    let mut hi = hi?;
    let h = step.dense.h;
    while (hi - lo) * h > config.eps_bisect {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if min_margin(step, &candidates, mid, eps) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let theta = hi;
    let t_event = if theta == 1.0 {
        step.after.t
    } else {
        step.dense.t0 + theta * h
    };

    let mut state = step.before.clone();
    for (k, &i) in sys.idx.iter().enumerate() {
        state.x[i] = if theta == 1.0 {
            step.after.x[i]
        } else {
            step.dense.position(k, theta)
        };
    }
    state.t = t_event;
    let dissipation = if theta == 1.0 {
        step.dissipation
    } else {
        partial_dissipation(&step.dense, state.n(), theta)
    };
    let energy_before = energy(&state, pair);

    let mut pairs = Vec::new();
    let mut separations = Vec::new();
    let mut passes = 0;
    loop {
        let act = state.active_indices();
        let mut found = false;
        let mut a = 0;
        while a + 1 < act.len() {
            let (i, j) = (act[a], act[a + 1]);
            let gap = state.x[j] - state.x[i];
            if state.b[i] != state.b[j] && gap <= eps {
                let (p, m) = if state.b0[i] > 0 { (i, j) } else { (j, i) };
                let mid = 0.5 * (state.x[i] + state.x[j]);
                state.x[i] = mid;
                state.x[j] = mid;
                state.b[i] = 0;
                state.b[j] = 0;
                state.tau[i] = t_event;
                state.tau[j] = t_event;
                pairs.push((p, m));
                separations.push(gap);
                found = true;
                a += 2;
            } else {
                a += 1;
            }
        }
        if !found {
            break;
        }
        passes += 1;
    }
    if pairs.is_empty() {
        // the interpolant dipped below the threshold but the located state
        // has no pair within it; treat as no event
        return None;
    }
    let mut indices: Vec<usize> = pairs.iter().flat_map(|&(p, m)| [p, m]).collect();
    indices.sort_unstable();
    let energy_after = energy(&state, pair);
    Some(LocatedEvent {
        event: CollisionEvent {
            t: t_event,
            gamma_k: indices.len(),
            indices,
            pairs,
            separations,
            energy_before,
            energy_after,
            degenerate: passes > 1,
        },
        state,
        dissipation,
    })
}
