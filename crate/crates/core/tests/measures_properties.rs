mod common;

use annihilation::dynamics::ParticleState;
use annihilation::measures::{
    block_structure, coupling_bound, from_state, pair_distance_upper, wasserstein2, wasserstein2_squared,
    WeightedAtoms,
};
use proptest::prelude::*;

fn measure(max_atoms: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0f64..3.0, 0.05f64..1.0), 1..=max_atoms)
}

fn normalised(mut atoms: Vec<(f64, f64)>, mass: f64) -> Vec<(f64, f64)> {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.iter_mut().for_each(|a| a.1 *= mass / total);
    atoms
}

fn state(n_max: usize) -> impl Strategy<Value = ParticleState> {
    (1usize..=n_max)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.01f64..1.0, n),
                prop::collection::vec(prop::bool::ANY, n),
                prop::collection::vec(prop::bool::ANY, n),
            )
        })
        .prop_map(|(gaps, signs, alive)| {
            let mut x = Vec::new();
            let mut acc = -2.0;
            for g in gaps {
                acc += g;
                x.push(acc);
            }
            let b: Vec<i8> = signs.iter().map(|&s| if s { 1 } else { -1 }).collect();
            let mut st = ParticleState::new(x, b).unwrap();
            for (i, a) in alive.into_iter().enumerate() {
                if !a {
                    st.b[i] = 0;
                }
            }
            st
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn monotone_coupling_solves_the_transport_problem(a in measure(6), b in measure(6), mass in 0.2f64..1.5) {
        let (a, b) = (normalised(a, mass), normalised(b, mass));
        let fast = wasserstein2_squared(&WeightedAtoms::new(a.clone()).unwrap(), &WeightedAtoms::new(b.clone()).unwrap()).unwrap();
        let lp = common::lp_wasserstein2_squared(&a, &b);
        prop_assert!((fast - lp).abs() <= 1e-10, "monotone {fast}, lp {lp}");
    }

    #[test]
    fn distance_is_symmetric_and_vanishes_on_the_diagonal(a in measure(8), b in measure(8)) {
        let a = WeightedAtoms::new(normalised(a, 1.0)).unwrap();
        let b = WeightedAtoms::new(normalised(b, 1.0)).unwrap();
        prop_assert_eq!(wasserstein2(&a, &a).unwrap(), 0.0);
        let (ab, ba) = (wasserstein2(&a, &b).unwrap(), wasserstein2(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() <= 1e-14 * ab.max(1.0));
    }

    #[test]
    fn translation_moves_by_the_shift(a in measure(8), shift in -2.0f64..2.0) {
        let a = WeightedAtoms::new(normalised(a, 1.0)).unwrap();
        let b = WeightedAtoms::new(a.atoms.iter().map(|&(x, w)| (x + shift, w)).collect()).unwrap();
        prop_assert!((wasserstein2(&a, &b).unwrap() - shift.abs()).abs() < 1e-12);
    }

    #[test]
    fn species_distance_is_below_the_particle_coupling(s in state(10), moves in prop::collection::vec(-0.5f64..0.5, 10)) {
        let mut t = s.clone();
        for i in 0..t.n() {
            t.x[i] += moves[i];
        }
        let d = pair_distance_upper(&from_state(&s).pair, &from_state(&t).pair).unwrap();
        let c = coupling_bound(&s, &t).unwrap();
        prop_assert!(d <= c + 1e-12, "{d} > {c}");
    }

    #[test]
    fn block_structure_separates_the_charges(s in state(12)) {
        let bs = block_structure(&s);
        prop_assert!(bs.separates(&s));
        prop_assert!(bs.boundaries.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(bs.boundaries.len(), if bs.l == 0 { 0 } else { 2 * bs.l + 1 });
        // L is the number of (+ run, - run) pairs needed to cover the sign sequence
        let signs: Vec<i8> = (0..s.n()).filter(|&i| s.b[i] != 0).map(|i| s.b[i]).collect();
        let runs = signs.windows(2).filter(|w| w[0] != w[1]).count() + usize::from(!signs.is_empty());
        let leading_minus = usize::from(signs.first() == Some(&-1));
        prop_assert_eq!(bs.l, (runs + leading_minus).div_ceil(2));
    }

    #[test]
    fn species_masses_follow_initial_charges(s in state(12)) {
        let m = from_state(&s);
        let n = s.n() as f64;
        let plus = s.b0.iter().filter(|&&b| b > 0).count() as f64;
        prop_assert!((m.pair.mu_plus.mass() - plus / n).abs() < 1e-14);
        prop_assert!((m.pair.mu_minus.mass() - (n - plus) / n).abs() < 1e-14);
        let charged = s.b.iter().filter(|&&b| b != 0).count() as f64;
        prop_assert!((m.kappa.total_variation() - charged / n).abs() < 1e-14);
    }
}

#[test]
fn unequal_masses_are_rejected() {
    let a = WeightedAtoms::new(vec![(0.0, 0.5)]).unwrap();
    let b = WeightedAtoms::new(vec![(0.0, 0.6)]).unwrap();
    assert!(wasserstein2(&a, &b).is_err());
}
