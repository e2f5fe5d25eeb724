use annihilation::dynamics::{energy, run, velocity, ParticleState, SimConfig, SimError};
use annihilation::kernels::{KernelFamily, KernelPair};
use annihilation::measures::block_structure;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn log_zero() -> KernelPair {
    KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::Zero).unwrap()
}

fn log_reglog(delta: f64) -> KernelPair {
    KernelPair::new(KernelFamily::LogRepulsive, KernelFamily::regularized_log(delta).unwrap()).unwrap()
}

#[test]
fn repulsive_pair_follows_square_root_law() {
    let s = ParticleState::new(vec![0.0, 1.0], vec![1, 1]).unwrap();
    let cfg = SimConfig { t_end: 2.0, record_every: 0.5, ..SimConfig::default() };
    let traj = run(&s, &log_zero(), &cfg).unwrap();
    for smp in &traj.samples {
        let g = smp.state.x[1] - smp.state.x[0];
        let exact = (1.0 + 2.0 * smp.t()).sqrt();
        assert!((g / exact - 1.0).abs() < 1e-8, "t = {}: {g} vs {exact}", smp.t());
        // the centre of mass does not move
        assert!((smp.state.x[0] + smp.state.x[1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn wall_pair_matches_quadrature_of_its_ode() {
    // the gap obeys g' = -V'(g); reference by classical RK4 with a fine step
    let pair = KernelPair::new(KernelFamily::WallRepulsive, KernelFamily::Zero).unwrap();
    let s = ParticleState::new(vec![0.0, 0.5], vec![1, 1]).unwrap();
    let cfg = SimConfig { t_end: 1.0, record_every: 1.0, tol_step: 1e-11, ..SimConfig::default() };
    let traj = run(&s, &pair, &cfg).unwrap();
    let f = |g: f64| -KernelFamily::WallRepulsive.derivative(g);
    let (mut g, h) = (0.5f64, 1e-5);
    for _ in 0..100_000 {
        let k1 = f(g);
        let k2 = f(g + 0.5 * h * k1);
        let k3 = f(g + 0.5 * h * k2);
        let k4 = f(g + h * k3);
        g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let last = &traj.last().state;
    assert!(((last.x[1] - last.x[0]) / g - 1.0).abs() < 1e-8);
}

#[test]
fn velocity_is_scaled_negative_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pairs = [log_zero(), log_reglog(0.3), KernelPair::new(KernelFamily::WallRepulsive, KernelFamily::regularized_log(1.0).unwrap()).unwrap()];
    for case in 0..100 {
        let pair = &pairs[case % pairs.len()];
        let n = rng.gen_range(2..9);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        x.sort_by(f64::total_cmp);
        for i in 1..n {
            if x[i] - x[i - 1] < 0.05 {
                x[i] = x[i - 1] + 0.05;
            }
        }
        let b: Vec<i8> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let s = ParticleState::new(x.clone(), b).unwrap();
        let v = velocity(&s, pair).unwrap();
        for i in 0..n {
            let h = 1e-6;
            let mut sp = s.clone();
            sp.x[i] += h;
            let mut sm = s.clone();
            sm.x[i] -= h;
            let grad = (energy(&sp, pair) - energy(&sm, pair)) / (2.0 * h);
            let expected = -(n as f64) * grad;
            assert!((v[i] - expected).abs() < 1e-6 * expected.abs().max(1.0), "case {case}, i = {i}: {} vs {expected}", v[i]);
        }
    }
}

#[test]
fn annihilated_particles_exert_no_force() {
    let pair = log_reglog(0.2);
    let mut s = ParticleState::new(vec![-1.0, 0.0, 2.0], vec![1, -1, 1]).unwrap();
    s.b[1] = 0;
    let v = velocity(&s, &pair).unwrap();
    assert_eq!(v[1], 0.0);
    // only the two remaining positive charges interact: v = +-(1/3)/3
    assert!((v[0] + 1.0 / 9.0).abs() < 1e-15);
    assert!((v[2] - 1.0 / 9.0).abs() < 1e-15);
}

#[test]
fn coincident_opposite_charges_are_rejected() {
    let s = ParticleState::new(vec![0.0, 1e-12], vec![1, -1]).unwrap();
    let err = run(&s, &log_reglog(0.1), &SimConfig::default()).unwrap_err();
    assert!(matches!(err, SimError::InitialWithinThreshold { .. }), "{err:?}");
}

fn configuration() -> impl Strategy<Value = (Vec<f64>, Vec<i8>)> {
    (2usize..9)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.05f64..0.6, n),
                prop::collection::vec(prop::bool::ANY, n),
            )
        })
        .prop_map(|(gaps, signs)| {
            let mut x = Vec::with_capacity(gaps.len());
            let mut acc = -1.0;
            for g in gaps {
                acc += g;
                x.push(acc);
            }
            let b = signs.into_iter().map(|s| if s { 1 } else { -1 }).collect();
            (x, b)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectories_respect_the_solution_properties((x, b) in configuration(), delta in 0.05f64..0.5) {
        let pair = log_reglog(delta);
        let s = ParticleState::new(x, b.clone()).unwrap();
        let cfg = SimConfig { t_end: 0.3, record_every: 0.02, eps_annihilate: 1e-9, ..SimConfig::default() };
        let traj = run(&s, &pair, &cfg).unwrap();

        prop_assert!(traj.events.validate(&b, cfg.eps_annihilate).is_ok());
        prop_assert!(traj.events.total_annihilated() <= b.len());
        let mut last_l = usize::MAX;
        for smp in &traj.samples {
            let st = &smp.state;
            // same-sign particles keep their order
            for sign in [1i8, -1] {
                let xs: Vec<f64> = (0..st.n()).filter(|&i| st.b[i] == sign).map(|i| st.x[i]).collect();
                prop_assert!(xs.windows(2).all(|w| w[0] < w[1]));
            }
            // initial charges never change, current ones only drop to zero
            prop_assert_eq!(&st.b0, &b);
            for i in 0..st.n() {
                prop_assert!(st.b[i] == st.b0[i] || st.b[i] == 0);
                prop_assert_eq!(st.b[i] == 0, st.tau[i].is_finite());
            }
            let l = block_structure(st).l;
            prop_assert!(l <= last_l);
            last_l = l;
        }
        // annihilated particles stay where they collided
        for ev in &traj.events.events {
            for w in ev.pairs.iter() {
                let at = traj.samples.iter().find(|s| s.t() >= ev.t).unwrap().state.x[w.0];
                prop_assert_eq!(traj.last().state.x[w.0], at);
                prop_assert_eq!(traj.last().state.x[w.0], traj.last().state.x[w.1]);
            }
        }
        // energy decreases between collisions
        for w in traj.samples.windows(2) {
            let end = match w[1].event {
                Some(k) => traj.events.events[k].energy_before,
                None => w[1].energy,
            };
            prop_assert!(end <= w[0].energy + 1e-8, "energy rose from {} to {end}", w[0].energy);
        }
    }
}
