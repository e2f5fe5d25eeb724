//! Gradient-flow dynamics of signed particles with annihilation.

mod events;
mod integrator;
mod run;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use events::{detect_and_annihilate, CollisionEvent, EventLog, LocatedEvent};
pub use integrator::{gap_limit, step, DenseOutput, StepOutput};
pub use run::{run, Sample, Trajectory, TrajectoryRow};
pub use state::{energy, moment, moment_of, velocity, ParticleState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("particles {i} and {j} have opposite charge and start at the same position {x}")]
    OppositeCoincidence { i: usize, j: usize, x: f64 },
    #[error("particles {i} and {j} have equal charge and coincide; the energy is infinite")]
    InfiniteEnergy { i: usize, j: usize },
    #[error("step size {dt:e} below the minimum at t = {t}\nstate: {dump}")]
    StepTooSmall { t: f64, dt: f64, dump: String },
    #[error("particles {i} and {j} of opposite charge start within the annihilation threshold")]
    InitialWithinThreshold { i: usize, j: usize },
    #[error("step limit {0} reached")]
    MaxSteps(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Time-stepping, event and recording parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Final time.
    #[serde(alias = "T")]
    pub t_end: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    /// Relative local error tolerance.
    pub tol_step: f64,
    /// Absolute local error tolerance (positions).
    pub atol: f64,
    /// Opposite-sign neighbours closer than this are annihilated.
    pub eps_annihilate: f64,
    /// Accuracy in time of located collisions.
    pub eps_bisect: f64,
    /// Spacing of the recorded sample times.
    pub record_every: f64,
    /// Safety factor of the same-sign gap step limit.
    pub gap_guard: f64,
    /// Disables error control and the guards; every step has this size.
    pub fixed_dt: Option<f64>,
    pub max_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            dt_init: 1e-3,
            dt_min: 1e-14,
            tol_step: 1e-9,
            atol: 1e-12,
            eps_annihilate: 1e-9,
            eps_bisect: 1e-12,
            record_every: 0.01,
            gap_guard: 0.5,
            fixed_dt: None,
            max_steps: 50_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init) {
            return bad(format!(
                "need 0 < dt_min <= dt_init, got dt_min = {}, dt_init = {}",
                self.dt_min, self.dt_init
            ));
        }
        if !(self.eps_bisect > 0.0) {
            return bad(format!("eps_bisect = {} must be positive", self.eps_bisect));
        }
        if !(self.eps_annihilate >= 0.0) {
            return bad(format!("eps_annihilate = {} must be nonnegative", self.eps_annihilate));
        }
        if !(self.tol_step > 0.0) || !(self.atol >= 0.0) {
            return bad("tol_step must be positive and atol nonnegative".into());
        }
        if !(self.record_every > 0.0) {
            return bad(format!("record_every = {} must be positive", self.record_every));
        }
        if !(self.gap_guard > 0.0) {
            return bad(format!("gap_guard = {} must be positive", self.gap_guard));
        }
        if let Some(h) = self.fixed_dt {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("fixed_dt = {h} must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn config_invariants() {
        let c = SimConfig { dt_min: 1.0, dt_init: 0.1, ..SimConfig::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { eps_bisect: 0.0, ..SimConfig::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { eps_annihilate: -1.0, ..SimConfig::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { eps_annihilate: 0.0, ..SimConfig::default() };
        assert!(c.validate().is_ok());
    }
}
