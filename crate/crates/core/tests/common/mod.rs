use minilp::{ComparisonOp, OptimizationDirection, Problem};

/// Squared 2-Wasserstein cost between two discrete measures of equal mass,
/// as the optimum of the transport linear program over all couplings.
pub fn lp_wasserstein2_squared(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = a
        .iter()
        .map(|&(x, _)| {
            b.iter()
                .map(|&(y, _)| p.add_var((x - y) * (x - y), (0.0, f64::INFINITY)))
                .collect()
        })
        .collect();
    for (i, &(_, w)) in a.iter().enumerate() {
        let row: Vec<_> = vars[i].iter().map(|&v| (v, 1.0)).collect();
        p.add_constraint(&row, ComparisonOp::Eq, w);
    }
    // one marginal is implied by the others and the equal masses
    for (j, &(_, w)) in b.iter().enumerate().skip(1) {
        let col: Vec<_> = vars.iter().map(|r| (r[j], 1.0)).collect();
        p.add_constraint(&col, ComparisonOp::Eq, w);
    }
    p.solve().expect("transport problem is feasible").objective()
}
