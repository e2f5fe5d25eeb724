use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::{check_energy_monotone, standard_checks};
use super::{CheckContext, CheckReport};
use crate::dynamics::run;
use crate::scenario::{Scenario, ScenarioError};

/// A scenario of the check suite. A negative control names the check it is
/// built to fail; only that check is reported for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub scenario: Scenario,
    pub negative_control: Option<String>,
}

const SUITE: [&str; 10] = [
    r#"
name = "repulsive-pair"
[kernels]
V = "log"
W = "zero"
[initial]
kind = "explicit"
x = [0.0, 1.0]
b = [1, 1]
[sim]
T = 2.0
record_every = 0.02
"#,
    r#"
name = "regularised-dipole"
[kernels]
V = "log"
W = "reglog(0.1)"
[initial]
kind = "explicit"
x = [-0.5, 0.5]
b = [1, -1]
[sim]
T = 5.0
record_every = 0.05
eps_annihilate = 0.0
tol_step = 1e-12
atol = 0.0
"#,
    r#"
name = "interleaved-four"
[kernels]
V = "log"
W = "reglog(0.1)"
[initial]
kind = "explicit"
x = [-0.3, -0.1, 0.1, 0.3]
b = [1, -1, 1, -1]
[sim]
T = 1.0
record_every = 0.01
eps_annihilate = 1e-8
"#,
    r#"
name = "mixed-six"
[kernels]
V = "log"
W = "reglog(0.05)"
[initial]
kind = "explicit"
x = [-1.0, -0.6, -0.1, 0.2, 0.7, 1.3]
b = [1, 1, -1, -1, 1, -1]
[sim]
T = 1.0
record_every = 0.01
"#,
    r#"
name = "log-gas"
[kernels]
V = "log"
W = "zero"
[initial]
kind = "blocks"
n = 200
[[initial.blocks]]
charge = 1
lo = -1.0
hi = 1.0
mass = 1.0
profile = "parabolic"
[sim]
T = 1.0
record_every = 0.02
"#,
    r#"
name = "log-gas-random"
seed = 7
[kernels]
V = "log"
W = "zero"
[initial]
kind = "blocks"
n = 400
placement = "random"
[[initial.blocks]]
charge = 1
lo = -1.0
hi = 1.0
mass = 1.0
profile = "uniform"
[sim]
T = 0.5
record_every = 0.02
"#,
    r#"
name = "two-block"
[kernels]
V = "log"
W = "zero"
[initial]
kind = "blocks"
n = 200
[[initial.blocks]]
charge = 1
lo = -1.0
hi = 0.0
mass = 0.5
profile = "uniform"
[[initial.blocks]]
charge = -1
lo = 0.0
hi = 1.0
mass = 0.5
profile = "uniform"
[sim]
T = 1.0
record_every = 0.02
"#,
    r#"
name = "two-block-attracting"
[kernels]
V = "log"
W = "reglog(0.2)"
[initial]
kind = "blocks"
n = 120
[[initial.blocks]]
charge = 1
lo = -1.0
hi = -0.05
mass = 0.5
profile = "parabolic"
[[initial.blocks]]
charge = -1
lo = 0.05
hi = 1.0
mass = 0.5
profile = "parabolic"
[sim]
T = 0.5
record_every = 0.01
"#,
    r#"
name = "four-blocks"
[kernels]
V = "log"
W = "reglog(0.2)"
[initial]
kind = "blocks"
n = 160
[[initial.blocks]]
charge = 1
lo = -2.0
hi = -1.0
mass = 0.25
profile = "uniform"
[[initial.blocks]]
charge = -1
lo = -1.0
hi = 0.0
mass = 0.25
profile = "uniform"
[[initial.blocks]]
charge = 1
lo = 0.0
hi = 1.0
mass = 0.25
profile = "uniform"
[[initial.blocks]]
charge = -1
lo = 1.0
hi = 2.0
mass = 0.25
profile = "uniform"
[sim]
T = 0.5
record_every = 0.01
"#,
    r#"
name = "walls"
seed = 11
[kernels]
V = "wall"
W = "reglog(0.5)"
[initial]
kind = "blocks"
n = 90
placement = "random"
[[initial.blocks]]
charge = 1
lo = -1.5
hi = -0.5
mass = 0.3
profile = "parabolic"
[[initial.blocks]]
charge = -1
lo = -0.5
hi = 0.5
mass = 0.4
profile = "parabolic"
[[initial.blocks]]
charge = 1
lo = 0.5
hi = 1.5
mass = 0.3
profile = "parabolic"
[sim]
T = 0.5
record_every = 0.01
"#,
];

/// The ten scenarios every check runs on.
pub fn default_suite() -> Vec<SuiteEntry> {
    SUITE
        .iter()
        .map(|text| SuiteEntry {
            scenario: Scenario::from_toml_str(text).expect("built-in scenario is valid"),
            negative_control: None,
        })
        .collect()
}

/// The interleaved four-particle collision integrated with one fixed step
/// per half time unit: the interpolant inside such a step is far off the
/// flow and the energy it reports just before the first collision lies above
/// the initial one.
pub fn negative_control() -> SuiteEntry {
    let mut scenario = Scenario::from_toml_str(SUITE[2]).expect("built-in scenario is valid");
    scenario.name = "interleaved-four-huge-step".into();
    scenario.sim.fixed_dt = Some(0.5);
    scenario.sim.record_every = 0.5;
    SuiteEntry {
        scenario,
        negative_control: Some("energy_monotone".into()),
    }
}

fn run_entry(entry: &SuiteEntry) -> Result<Vec<CheckReport>, ScenarioError> {
    let sc = &entry.scenario;
    let pair = sc.kernel_pair()?;
    let init = sc.initial_state(sc.default_n())?;
    let result = run(&init, &pair, &sc.sim);
    let Some(target) = &entry.negative_control else {
        let traj = result?;
        log::info!("suite: {} ({} events)", sc.name, traj.events.len());
        return Ok(standard_checks(
            &traj,
            &pair,
            sc.sim.tol_step,
            sc.sim.eps_annihilate,
            sc.seed,
            &sc.name,
        ));
    };
    let mut report = match result {
        Ok(traj) => {
            let all = standard_checks(&traj, &pair, sc.sim.tol_step, sc.sim.eps_annihilate, sc.seed, &sc.name);
            all.into_iter()
                .find(|r| &r.name == target)
                .unwrap_or_else(|| check_energy_monotone(&traj, 10.0 * sc.sim.tol_step, &sc.name))
        }
        // a run that breaks down counts as a detected violation
        Err(e) => CheckReport::new(
            target,
            f64::INFINITY,
            0.0,
            0.0,
            CheckContext {
                scenario: sc.name.clone(),
                n: init.n(),
                t_end: sc.sim.t_end,
                detail: format!("run failed: {e}"),
            },
        ),
    };
    report.negative_control = true;
    Ok(vec![report])
}

/// Runs every entry (in parallel) and collects the reports in entry order.
pub fn run_suite(entries: &[SuiteEntry]) -> Result<Vec<CheckReport>, ScenarioError> {
    let per_entry: Vec<Vec<CheckReport>> = entries.par_iter().map(run_entry).collect::<Result<_, _>>()?;
    Ok(per_entry.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_valid_and_small() {
        let suite = default_suite();
        assert_eq!(suite.len(), 10);
        for e in &suite {
            assert!(e.scenario.default_n() <= 400);
            assert!(e.negative_control.is_none());
        }
    }

    #[test]
    fn negative_control_fails_its_check() {
        let reports = run_suite(&[negative_control()]).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(!reports[0].pass, "{:?}", reports[0]);
        assert!(reports[0].as_expected());
    }
}
