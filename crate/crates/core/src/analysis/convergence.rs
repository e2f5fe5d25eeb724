use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuum::{run_continuum, to_measure, GridDensityPair, Species};
use crate::dynamics::{run, Trajectory};
use crate::measures::{from_state, pair_distance_upper, EmpiricalPair, MeasureError, WeightedAtoms};
use crate::scenario::{Reference, Scenario, ScenarioError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Largest distance to the reference over the common sample times.
    pub sup_distance: f64,
    /// `sup_distance` divided by the one of the previous row.
    pub ratio: Option<f64>,
    /// Mass of annihilated particles at the final time, `2 * pairs / n`.
    pub annihilated_mass: f64,
    /// Loss of `|kappa|(R)` of the reference at the final time.
    pub reference_annihilated_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub scenario: String,
    pub reference: Reference,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Every ratio after the first row is below one.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.iter().skip(1).all(|r| r.ratio.is_some_and(|q| q < 1.0))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n",
            "sup_distance",
            "ratio",
            "annihilated_mass",
            "reference_annihilated_mass",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.sup_distance.to_string(),
                r.ratio.map(|q| q.to_string()).unwrap_or_default(),
                r.annihilated_mass.to_string(),
                r.reference_annihilated_mass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn annihilated_mass(traj: &Trajectory) -> f64 {
    traj.events.total_annihilated() as f64 / traj.initial().n() as f64
}

/// Grid samples (not the ones taken at collisions) keyed by time.
fn grid_samples(traj: &Trajectory) -> Vec<(f64, EmpiricalPair)> {
    traj.samples
        .iter()
        .filter(|s| s.event.is_none())
        .map(|s| (s.t(), from_state(&s.state).pair))
        .collect()
}

fn sup_distance(a: &[(f64, EmpiricalPair)], b: &[(f64, EmpiricalPair)]) -> Result<f64, MeasureError> {
    let mut sup = 0.0f64;
    let mut j = 0;
    for (t, pa) in a {
        while j < b.len() && b[j].0 < *t {
            j += 1;
        }
        if j < b.len() && b[j].0 == *t {
            let d = pair_distance_upper(pa, &b[j].1)?;
            if !(d <= sup) {
                sup = d;
            }
        }
    }
    Ok(sup)
}

fn rescaled(atoms: WeightedAtoms, mass: f64) -> WeightedAtoms {
    let m = atoms.mass();
    if m <= 0.0 {
        return atoms;
    }
    WeightedAtoms {
        atoms: atoms.atoms.into_iter().map(|(x, w)| (x, w * mass / m)).collect(),
    }
}

/// Continuum snapshot as a pair with the species masses of `like`.
fn continuum_pair(dens: &GridDensityPair, like: &EmpiricalPair) -> EmpiricalPair {
    let plus = rescaled(to_measure(dens, Species::Plus), like.mu_plus.mass());
    let minus = rescaled(to_measure(dens, Species::Minus), like.mu_minus.mass());
    EmpiricalPair {
        mu_plus: plus,
        mu_minus: minus,
        mass_plus: like.mass_plus,
    }
}

fn measure_err(e: MeasureError) -> ScenarioError {
    ScenarioError::Invalid(e.to_string())
}

/// Runs the scenario for every `n` in `n_list` and measures the largest
/// distance (over the sample times) to the reference: the run with `2n`
/// particles or the finite-volume solution on the scenario grid. Runs are
/// independent and execute in parallel; rows are sorted by `n`.
pub fn convergence_study(
    scenario: &Scenario,
    n_list: &[usize],
    reference: Reference,
) -> Result<ConvergenceTable, ScenarioError> {
    let pair = scenario.kernel_pair()?;
    let mut ns: BTreeSet<usize> = n_list.iter().copied().collect();
    if reference == Reference::Doubling {
        ns.extend(n_list.iter().map(|n| 2 * n));
    }
    let ns: Vec<usize> = ns.into_iter().collect();
    let runs: Vec<(usize, Trajectory)> = ns
        .par_iter()
        .map(|&n| {
            let init = scenario.initial_state(n)?;
            log::info!("convergence run n = {n}");
            Ok((n, run(&init, &pair, &scenario.sim)?))
        })
        .collect::<Result<_, ScenarioError>>()?;
    let find = |n: usize| &runs.iter().find(|(m, _)| *m == n).expect("run exists").1;

    let continuum = if reference == Reference::Continuum {
        let init = scenario.initial_density(None)?;
        let times: Vec<f64> = find(n_list[0])
            .samples
            .iter()
            .filter(|s| s.event.is_none())
            .map(|s| s.t())
            .collect();
        let snaps = run_continuum(&init, &pair, &times, scenario.continuum.cfl)?;
        let lost = init.kappa_mass() - snaps.last().map_or(init.kappa_mass(), |s| s.kappa_mass());
        Some((times, snaps, lost / init.total_mass()))
    } else {
        None
    };

    let mut sorted: Vec<usize> = n_list.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(sorted.len());
    for n in sorted {
        let traj = find(n);
        let own = grid_samples(traj);
        let (sup, reference_mass) = match &continuum {
            None => {
                let other = find(2 * n);
                let sup = sup_distance(&own, &grid_samples(other)).map_err(measure_err)?;
                (sup, annihilated_mass(other))
            }
            Some((times, snaps, lost)) => {
                let like = &own[0].1;
                let refs: Vec<(f64, EmpiricalPair)> = times
                    .iter()
                    .zip(snaps)
                    .map(|(&t, d)| (t, continuum_pair(d, like)))
                    .collect();
                (sup_distance(&own, &refs).map_err(measure_err)?, *lost)
            }
        };
        let ratio = rows.last().map(|r| sup / r.sup_distance);
        rows.push(ConvergenceRow {
            n,
            sup_distance: sup,
            ratio,
            annihilated_mass: annihilated_mass(traj),
            reference_annihilated_mass: reference_mass,
        });
    }
    Ok(ConvergenceTable {
        scenario: scenario.name.clone(),
        reference,
        rows,
    })
}
