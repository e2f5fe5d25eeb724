//! Automated checks of the discrete estimates, the weak-form residual and
//! the particle-number convergence study.

mod checks;
mod convergence;
mod suite;
mod weak_form;

use serde::{Deserialize, Serialize};

pub use checks::{
    check_block_monotone, check_edi, check_energy_monotone, check_event_log, check_mass_conservation,
    check_metric_bound, check_moments, check_separation, edi_constant, moment_constant, standard_checks,
};
pub use convergence::{convergence_study, ConvergenceRow, ConvergenceTable};
pub use suite::{default_suite, negative_control, run_suite, SuiteEntry};
pub use weak_form::{check_weak_form, weak_form_residual, SpaceFunction, TestFunction, WeakFormResidual};

/// Where a check was evaluated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckContext {
    pub scenario: String,
    pub n: usize,
    pub t_end: f64,
    /// Free-form note, e.g. the time of the worst sample.
    pub detail: String,
}

/// Outcome of one check: `pass` iff `slack = bound - measured >= -tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub context: CheckContext,
    /// Set on reports of runs built to violate the check.
    pub negative_control: bool,
}

impl CheckReport {
    pub fn new(name: &str, measured: f64, bound: f64, tolerance: f64, context: CheckContext) -> Self {
        let slack = bound - measured;
        Self {
            name: name.to_string(),
            // NaN never passes
            pass: slack >= -tolerance,
            measured,
            bound,
            slack,
            tolerance,
            context,
            negative_control: false,
        }
    }

    /// A report passes as intended: normal checks pass, negative controls
    /// fail.
    pub fn as_expected(&self) -> bool {
        self.pass != self.negative_control
    }
}
