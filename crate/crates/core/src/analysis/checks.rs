use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CheckContext, CheckReport};
use crate::dynamics::{moment_of, Trajectory};
use crate::kernels::KernelPair;
use crate::measures::{block_structure, coupling_bound, from_state, pair_distance_upper};

fn context(traj: &Trajectory, scenario: &str, detail: String) -> CheckContext {
    CheckContext {
        scenario: scenario.to_string(),
        n: traj.initial().n(),
        t_end: traj.last().t(),
        detail,
    }
}

/// `2 (sup|r V'| + sup|r W'|)`, the growth rate of the second moment.
pub fn moment_constant(pair: &KernelPair) -> f64 {
    2.0 * (pair.bound_r_v_prime + pair.bound_r_w_prime)
}

/// Constant `C` of `E(t) - E(0) + (1/n) int |x'|^2 <= C (t + M2(0) + 1)`.
///
/// Removing an opposite pair at `y` changes the energy by
/// `-(W(0) + sum_i (V + W)(x_i - y)) / n^2`; with `V + W >= -q r^2` and the
/// moment bound, all jumps together stay below
/// `|W(0)| / 4 + 2 q (M2(0) + C_M t)`.
pub fn edi_constant(pair: &KernelPair) -> f64 {
    let q = pair.quadratic_growth;
    let cm = moment_constant(pair);
    (2.0 * q * cm).max(2.0 * q).max(0.25 * pair.w_at_zero.abs())
}

/// Largest energy increase between consecutive samples with no collision in
/// between; the energy just before a collision is compared with the sample
/// preceding it.
pub fn check_energy_monotone(traj: &Trajectory, tolerance: f64, scenario: &str) -> CheckReport {
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0.0;
    for w in traj.samples.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let end = match next.event {
            Some(k) => traj.events.events[k].energy_before,
            None => next.energy,
        };
        let rise = if end.is_finite() && prev.energy.is_finite() {
            end - prev.energy
        } else {
            f64::INFINITY
        };
        if !(rise <= worst) {
            worst = rise;
            at = next.t();
        }
    }
    if traj.samples.len() < 2 {
        worst = 0.0;
    }
    CheckReport::new(
        "energy_monotone",
        worst,
        0.0,
        tolerance,
        context(traj, scenario, format!("worst interval ends at t = {at}")),
    )
}

/// Tracks the comparison `lhs <= rhs` with the smallest slack (NaN first).
struct Tightest {
    lhs: f64,
    rhs: f64,
    detail: String,
}

impl Tightest {
    fn new() -> Self {
        Self { lhs: 0.0, rhs: f64::INFINITY, detail: String::new() }
    }

    fn offer(&mut self, lhs: f64, rhs: f64, detail: impl FnOnce() -> String) {
        let slack = self.rhs - self.lhs;
        if slack.is_nan() {
            return;
        }
        if !(rhs - lhs >= slack) {
            *self = Self { lhs, rhs, detail: detail() };
        }
    }
}

/// Energy-dissipation inequality at every sample after the first.
pub fn check_edi(traj: &Trajectory, pair: &KernelPair, scenario: &str) -> CheckReport {
    let c = edi_constant(pair);
    let first = &traj.samples[0];
    let m2 = moment_of(&first.state.x, 2);
    let mut worst = Tightest::new();
    for s in traj.samples.iter().skip(1) {
        let lhs = s.energy - first.energy + (s.dissipation - first.dissipation);
        let rhs = c * (s.t() - first.t() + m2 + 1.0);
        worst.offer(lhs, rhs, || format!("tightest at t = {}", s.t()));
    }
    if traj.samples.len() == 1 {
        worst.offer(0.0, c * (m2 + 1.0), || "single sample".into());
    }
    CheckReport::new(
        "energy_dissipation",
        worst.lhs,
        worst.rhs,
        0.0,
        context(traj, scenario, format!("C = {c}, {}", worst.detail)),
    )
}

/// Second- and fourth-moment growth bounds at every sample after the first;
/// reports the tighter of the two.
pub fn check_moments(traj: &Trajectory, pair: &KernelPair, scenario: &str) -> CheckReport {
    let cm = moment_constant(pair);
    let first = &traj.samples[0];
    let t0 = first.t();
    let m2_0 = moment_of(&first.state.x, 2);
    let m4_0 = moment_of(&first.state.x, 4);
    let mut worst = Tightest::new();
    for s in traj.samples.iter().skip(1) {
        let t = s.t() - t0;
        let m2 = moment_of(&s.state.x, 2);
        let m4 = moment_of(&s.state.x, 4);
        let b2 = m2_0 + cm * t;
        let b4 = m4_0 + 3.0 * cm * t * (m2_0 + 0.5 * cm * t);
        worst.offer(m2, b2, || format!("M2 at t = {}", s.t()));
        worst.offer(m4, b4, || format!("M4 at t = {}", s.t()));
    }
    if traj.samples.len() == 1 {
        worst.offer(m2_0, m2_0, || "single sample".into());
    }
    CheckReport::new(
        "moment_bounds",
        worst.lhs,
        worst.rhs,
        1e-8,
        context(traj, scenario, format!("C = {cm}, tightest {}", worst.detail)),
    )
}

/// For `pairs` random sample pairs `s < t`:
/// `d(mu(s), mu(t))^2 <= coupling(s, t)^2 <= (t - s) (1/n) int_s^t |x'|^2`.
/// Reports the comparison with the smallest slack.
pub fn check_metric_bound(traj: &Trajectory, pairs: usize, seed: u64, scenario: &str) -> CheckReport {
    let m = traj.samples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let measures: Vec<_> = traj.samples.iter().map(|s| from_state(&s.state).pair).collect();
    let mut worst = Tightest::new();
    if m < 2 {
        worst.offer(0.0, 0.0, || "fewer than two samples".into());
    }
    for _ in 0..if m >= 2 { pairs } else { 0 } {
        let a = rng.gen_range(0..m);
        let mut b = rng.gen_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        let (i, j) = (a.min(b), a.max(b));
        let (si, sj) = (&traj.samples[i], &traj.samples[j]);
        let w = pair_distance_upper(&measures[i], &measures[j]).unwrap_or(f64::NAN);
        let c = coupling_bound(&si.state, &sj.state).unwrap_or(f64::NAN);
        let budget = (sj.t() - si.t()) * (sj.dissipation - si.dissipation);
        worst.offer(w * w, c * c, || format!("distance vs coupling, s = {}, t = {}", si.t(), sj.t()));
        worst.offer(c * c, budget, || format!("coupling vs dissipation, s = {}, t = {}", si.t(), sj.t()));
    }
    CheckReport::new("metric_bound", worst.lhs, worst.rhs, 1e-8, context(traj, scenario, worst.detail))
}

/// Largest increase of the block count `L_t` between samples.
pub fn check_block_monotone(traj: &Trajectory, scenario: &str) -> CheckReport {
    let counts: Vec<usize> = traj.samples.iter().map(|s| block_structure(&s.state).l).collect();
    let rise = counts
        .windows(2)
        .map(|w| w[1] as f64 - w[0] as f64)
        .fold(0.0, f64::max);
    CheckReport::new(
        "block_monotone",
        rise,
        0.0,
        0.0,
        context(
            traj,
            scenario,
            format!("L from {} to {}", counts[0], counts[counts.len() - 1]),
        ),
    )
}

/// Event log consistency and frozen positions of annihilated particles;
/// `measured` counts violations.
pub fn check_event_log(traj: &Trajectory, eps_annihilate: f64, scenario: &str) -> CheckReport {
    let init = traj.initial();
    let mut problems = Vec::new();
    if let Err(e) = traj.events.validate(&init.b0, eps_annihilate) {
        problems.push(e);
    }
    let pairs: usize = traj.events.events.iter().map(|e| e.pairs.len()).sum();
    if 2 * pairs > init.n() {
        problems.push(format!("{pairs} pairs for n = {}", init.n()));
    }
    for (k, ev) in traj.events.events.iter().enumerate() {
        let Some(at) = traj.samples.iter().position(|s| s.event == Some(k)) else {
            problems.push(format!("event {k} has no sample"));
            continue;
        };
        let frozen = &traj.samples[at].state;
        for s in &traj.samples[at..] {
            for &i in &ev.indices {
                if s.state.x[i].to_bits() != frozen.x[i].to_bits() || s.state.b[i] != 0 || s.state.tau[i] != ev.t {
                    problems.push(format!("particle {i} moved after t = {}", ev.t));
                }
            }
        }
    }
    problems.dedup();
    CheckReport::new(
        "event_log",
        problems.len() as f64,
        0.0,
        0.0,
        context(traj, scenario, problems.first().cloned().unwrap_or_default()),
    )
}

/// Smallest gap between charged particles of equal sign over all samples
/// (must stay positive, with the order preserved).
pub fn check_separation(traj: &Trajectory, scenario: &str) -> CheckReport {
    let mut min_gap = f64::INFINITY;
    for s in &traj.samples {
        let st = &s.state;
        let mut last: [Option<f64>; 2] = [None, None];
        for i in 0..st.n() {
            if st.b[i] == 0 {
                continue;
            }
            let slot = usize::from(st.b[i] > 0);
            if let Some(prev) = last[slot] {
                let gap = st.x[i] - prev;
                if !(gap >= min_gap) {
                    min_gap = gap;
                }
            }
            last[slot] = Some(st.x[i]);
        }
    }
    // pass iff min_gap > 0: measured = -min_gap against bound 0 with the
    // smallest positive tolerance excluded
    let report = CheckReport::new(
        "same_sign_separation",
        -min_gap,
        0.0,
        0.0,
        context(traj, scenario, format!("min gap {min_gap:e}")),
    );
    CheckReport {
        pass: min_gap > 0.0,
        ..report
    }
}

/// Species masses stay `n+/n`, `n-/n` and `|kappa|(R)` never grows.
pub fn check_mass_conservation(traj: &Trajectory, scenario: &str) -> CheckReport {
    let init = traj.initial();
    let n = init.n() as f64;
    let n_plus = init.b0.iter().filter(|&&b| b > 0).count() as f64;
    let mut worst: f64 = 0.0;
    let mut last_kappa = f64::INFINITY;
    for s in &traj.samples {
        let m = from_state(&s.state);
        worst = worst.max((m.pair.mu_plus.mass() - n_plus / n).abs());
        worst = worst.max((m.pair.mu_minus.mass() - (n - n_plus) / n).abs());
        let k = m.kappa.total_variation();
        if k > last_kappa {
            worst = worst.max(k - last_kappa);
        }
        last_kappa = k;
    }
    CheckReport::new("mass_conservation", worst, 0.0, 1e-12, context(traj, scenario, String::new()))
}

/// All trajectory checks used by the suite.
pub fn standard_checks(
    traj: &Trajectory,
    pair: &KernelPair,
    tol_step: f64,
    eps_annihilate: f64,
    seed: u64,
    scenario: &str,
) -> Vec<CheckReport> {
    vec![
        check_energy_monotone(traj, 10.0 * tol_step, scenario),
        check_edi(traj, pair, scenario),
        check_moments(traj, pair, scenario),
        check_metric_bound(traj, 100, seed, scenario),
        check_block_monotone(traj, scenario),
        check_event_log(traj, eps_annihilate, scenario),
        check_separation(traj, scenario),
        check_mass_conservation(traj, scenario),
    ]
}
