use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::events::{detect_and_annihilate, EventLog};
use super::integrator::step;
use super::state::{energy, moment_of, ParticleState};
use super::{SimConfig, SimError};
use crate::kernels::KernelPair;

/// A recorded state together with the energy and the running dissipation
/// `(1/n) * int_0^t |x'|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: ParticleState,
    pub energy: f64,
    pub dissipation: f64,
    /// Index into the event log when this sample is taken right after a
    /// collision.
    pub event: Option<usize>,
}

impl Sample {
    pub fn t(&self) -> f64 {
        self.state.t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: EventLog,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn initial(&self) -> &ParticleState {
        &self.samples[0].state
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(Sample::t).collect()
    }

    /// `(time, E_n)` per sample.
    pub fn energy_trace(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t(), s.energy)).collect()
    }

    pub fn dissipation_integral(&self) -> f64 {
        self.last().dissipation
    }

    /// Writes one row per sample: `t, x_1..x_n, b_1..b_n, E_n, M2, M4`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let n = self.initial().n();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("b_{i}")));
        header.extend(["E_n", "M2", "M4"].map(String::from));
        w.write_record(&header).map_err(io_err)?;
        for s in &self.samples {
            let st = &s.state;
            let mut rec = Vec::with_capacity(2 * n + 4);
            rec.push(st.t.to_string());
            rec.extend(st.x.iter().map(f64::to_string));
            rec.extend(st.b.iter().map(i8::to_string));
            rec.push(s.energy.to_string());
            rec.push(moment_of(&st.x, 2).to_string());
            rec.push(moment_of(&st.x, 4).to_string());
            w.write_record(&rec).map_err(io_err)?;
        }
        w.flush().map_err(|e| SimError::Io(e.to_string()))
    }

    pub fn write_events_json<W: Write>(&self, out: W) -> Result<(), SimError> {
        serde_json::to_writer_pretty(out, &self.events).map_err(|e| SimError::Io(e.to_string()))
    }
}

/// One parsed row of the trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub b: Vec<i8>,
    pub energy: f64,
    pub m2: f64,
    pub m4: f64,
}

impl TrajectoryRow {
    pub fn read_csv<R: Read>(input: R) -> Result<Vec<Self>, SimError> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers().map_err(io_err)?.len();
        if width < 6 || (width - 4) % 2 != 0 {
            return Err(SimError::Io(format!("unexpected column count {width}")));
        }
        let n = (width - 4) / 2;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io_err)?;
            let f = |k: usize| -> Result<f64, SimError> {
                rec[k]
                    .parse()
                    .map_err(|e| SimError::Io(format!("column {k}: {e}")))
            };
            let x = (1..=n).map(f).collect::<Result<Vec<_>, _>>()?;
            let b = (n + 1..=2 * n)
                .map(|k| {
                    rec[k]
                        .parse::<i8>()
                        .map_err(|e| SimError::Io(format!("column {k}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(Self {
                t: f(0)?,
                x,
                b,
                energy: f(2 * n + 1)?,
                m2: f(2 * n + 2)?,
                m4: f(2 * n + 3)?,
            });
        }
        Ok(rows)
    }
}

fn io_err(e: csv::Error) -> SimError {
    SimError::Io(e.to_string())
}

/// Integrates from `initial` up to `config.t_end`, annihilating opposite
/// pairs at collisions and restarting the integrator after each of them.
/// Samples are taken at the multiples of `record_every`, at `t_end` and
/// right after every collision.
pub fn run(initial: &ParticleState, pair: &KernelPair, config: &SimConfig) -> Result<Trajectory, SimError> {
    config.validate()?;
    if let Some((i, j)) = initial.same_sign_coincidence() {
        return Err(SimError::InfiniteEnergy { i, j });
    }
    let act = initial.active_indices();
    for w in act.windows(2) {
        let (i, j) = (w[0], w[1]);
        if initial.b[i] != initial.b[j] && initial.x[j] - initial.x[i] <= config.eps_annihilate {
            return Err(if initial.x[j] == initial.x[i] {
                SimError::OppositeCoincidence { i, j, x: initial.x[i] }
            } else {
                SimError::InitialWithinThreshold { i, j }
            });
        }
    }

    let mut state = initial.clone();
    let mut dissipation = 0.0;
    let mut traj = Trajectory {
        samples: vec![Sample {
            energy: energy(&state, pair),
            state: state.clone(),
            dissipation,
            event: None,
        }],
        events: EventLog::default(),
        accepted_steps: 0,
        rejected_steps: 0,
    };

    let grid_time = |k: usize| (k as f64 * config.record_every).min(config.t_end);
    let mut next_k = 1;
    while grid_time(next_k) <= state.t && state.t < config.t_end {
        next_k += 1;
    }
    let mut dt = config.fixed_dt.unwrap_or(config.dt_init);

    while state.t < config.t_end {
        let target = grid_time(next_k);
        let cap = target - state.t;
        if state.active_count() < 2 {
            // nothing moves any more
            state.t = target;
        } else {
            if traj.accepted_steps >= config.max_steps {
                return Err(SimError::MaxSteps(config.max_steps));
            }
            let out = step(&state, pair, config, dt, cap)?;
            traj.accepted_steps += 1;
            traj.rejected_steps += out.rejected;
            if let Some(located) = detect_and_annihilate(&out, pair, config) {
                state = located.state;
                dissipation += located.dissipation;
                let k = traj.events.len();
                traj.events.events.push(located.event);
                traj.samples.push(Sample {
                    energy: energy(&state, pair),
                    state: state.clone(),
                    dissipation,
                    event: Some(k),
                });
                dt = config.fixed_dt.unwrap_or(config.dt_init);
                log::debug!("collision at t = {} ({} active left)", state.t, state.active_count());
                if state.t >= target {
                    // the event landed on the grid time itself
                    next_k += 1;
                }
                continue;
            }
            let clamped = out.dt_used >= cap;
            state = out.after;
            dissipation += out.dissipation;
            if clamped {
                state.t = target;
                dt = dt.max(out.dt_next);
            } else {
                dt = out.dt_next;
            }
        }
        if state.t >= target {
            traj.samples.push(Sample {
                energy: energy(&state, pair),
                state: state.clone(),
                dissipation,
                event: None,
            });
            next_k += 1;
        }
    }
    log::info!(
        "run finished: {} steps ({} rejected), {} events",
        traj.accepted_steps,
        traj.rejected_steps,
        traj.events.len()
    );
    Ok(traj)
}
