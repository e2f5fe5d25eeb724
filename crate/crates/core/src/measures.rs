//! Empirical measures of a particle configuration, 1D optimal transport and
//! the block structure of the charged particles.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ParticleState;

/// Relative tolerance on masses that must agree.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("states are not comparable: {0}")]
    Incompatible(String),
    #[error("invalid atom: {0}")]
    InvalidAtom(String),
}

/// Nonnegative measure given by finitely many weighted atoms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedAtoms {
    pub atoms: Vec<(f64, f64)>,
}

impl WeightedAtoms {
    /// Rejects non-finite positions and non-positive weights.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self, MeasureError> {
        for &(x, w) in &atoms {
            if !x.is_finite() || !(w > 0.0 && w.is_finite()) {
                return Err(MeasureError::InvalidAtom(format!("({x}, {w})")));
            }
        }
        Ok(Self { atoms })
    }

    /// Uniform atoms of weight `weight` at `positions`.
    pub fn uniform(positions: &[f64], weight: f64) -> Self {
        Self {
            atoms: positions.iter().map(|&x| (x, weight)).collect(),
        }
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn min_support(&self) -> Option<f64> {
        self.atoms.iter().map(|a| a.0).min_by(f64::total_cmp)
    }

    pub fn max_support(&self) -> Option<f64> {
        self.atoms.iter().map(|a| a.0).max_by(f64::total_cmp)
    }

    /// Atoms sorted by position (ties keep their input order) with
    /// duplicate positions merged.
    pub fn sorted_merged(&self) -> Vec<(f64, f64)> {
        let mut order: Vec<usize> = (0..self.atoms.len()).collect();
        order.sort_by(|&a, &b| {
            self.atoms[a]
                .0
                .total_cmp(&self.atoms[b].0)
                .then(a.cmp(&b))
        });
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(order.len());
        for k in order {
            let (x, w) = self.atoms[k];
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => out.push((x, w)),
            }
        }
        out
    }
}

/// Signed measure given by finitely many atoms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignedAtoms {
    pub atoms: Vec<(f64, f64)>,
}

impl SignedAtoms {
    /// Total variation `|kappa|(R)`.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.1.abs()).sum()
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }
}

/// The two species `(mu+, mu-)` of a configuration, a probability measure
/// on `R x {+1, -1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPair {
    pub mu_plus: WeightedAtoms,
    pub mu_minus: WeightedAtoms,
    /// Mass of `mu_plus`.
    pub mass_plus: f64,
}

/// Everything [`from_state`] derives from a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMeasures {
    pub pair: EmpiricalPair,
    pub kappa: SignedAtoms,
    pub kappa_plus: WeightedAtoms,
    pub kappa_minus: WeightedAtoms,
}

/// Empirical measures of a configuration. The species measures use the
/// initial charges (so their masses never change); `kappa` and its parts use
/// the current ones.
pub fn from_state(state: &ParticleState) -> StateMeasures {
    let n = state.n();
    let w = 1.0 / n as f64;
    let mut mu_plus = Vec::new();
    let mut mu_minus = Vec::new();
    let mut kappa = Vec::new();
    let mut kappa_plus = Vec::new();
    let mut kappa_minus = Vec::new();
    for i in 0..n {
        let x = state.x[i];
        if state.b0[i] > 0 {
            mu_plus.push((x, w));
        } else {
            mu_minus.push((x, w));
        }
        match state.b[i] {
            1 => {
                kappa.push((x, w));
                kappa_plus.push((x, w));
            }
            -1 => {
                kappa.push((x, -w));
                kappa_minus.push((x, w));
            }
            _ => {}
        }
    }
    let mass_plus = mu_plus.len() as f64 * w;
    StateMeasures {
        pair: EmpiricalPair {
            mu_plus: WeightedAtoms { atoms: mu_plus },
            mu_minus: WeightedAtoms { atoms: mu_minus },
            mass_plus,
        },
        kappa: SignedAtoms { atoms: kappa },
        kappa_plus: WeightedAtoms { atoms: kappa_plus },
        kappa_minus: WeightedAtoms { atoms: kappa_minus },
    }
}

fn masses_agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= MASS_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Squared 2-Wasserstein cost between measures of equal mass (unnormalised:
/// the weights are used as they are), from the monotone coupling.
pub fn wasserstein2_squared(a: &WeightedAtoms, b: &WeightedAtoms) -> Result<f64, MeasureError> {
    let (ma, mb) = (a.mass(), b.mass());
    if !masses_agree(ma, mb) {
        return Err(MeasureError::MassMismatch(ma, mb));
    }
    let sa = a.sorted_merged();
    let sb = b.sorted_merged();
    if sa.is_empty() || sb.is_empty() {
        return Ok(0.0);
    }
    let cumulative = |s: &[(f64, f64)]| {
        let mut acc = 0.0;
        s.iter()
            .map(|&(_, w)| {
                acc += w;
                acc
            })
            .collect::<Vec<f64>>()
    };
    let mut ca = cumulative(&sa);
    let mut cb = cumulative(&sb);
    // both quantile functions end at the same level
    let top = ma.max(mb);
    *ca.last_mut().unwrap() = top;
    *cb.last_mut().unwrap() = top;

    let (mut i, mut j) = (0, 0);
    let mut level = 0.0;
    let mut cost = 0.0;
    while i < sa.len() && j < sb.len() {
        let d = sa[i].0 - sb[j].0;
        let next = ca[i].min(cb[j]);
        cost += (next - level) * d * d;
        level = next;
        if ca[i] <= next {
            i += 1;
        }
        if cb[j] <= next {
            j += 1;
        }
    }
    Ok(cost)
}

/// 2-Wasserstein distance between measures of equal mass.
pub fn wasserstein2(a: &WeightedAtoms, b: &WeightedAtoms) -> Result<f64, MeasureError> {
    wasserstein2_squared(a, b).map(f64::sqrt)
}

/// Upper bound on the distance between two species pairs obtained by
/// transporting each species separately.
pub fn pair_distance_upper(a: &EmpiricalPair, b: &EmpiricalPair) -> Result<f64, MeasureError> {
    if !masses_agree(a.mass_plus, b.mass_plus) {
        return Err(MeasureError::MassMismatch(a.mass_plus, b.mass_plus));
    }
    let plus = wasserstein2_squared(&a.mu_plus, &b.mu_plus)?;
    let minus = wasserstein2_squared(&a.mu_minus, &b.mu_minus)?;
    Ok((plus + minus).sqrt())
}

/// `sqrt((1/n) sum_i (x_i(s) - x_i(t))^2)`, the cost of moving every
/// particle to its own later position.
pub fn coupling_bound(s: &ParticleState, t: &ParticleState) -> Result<f64, MeasureError> {
    if s.n() != t.n() || s.b0 != t.b0 {
        return Err(MeasureError::Incompatible(
            "different particle counts or initial charges".into(),
        ));
    }
    let sum: f64 = s.x.iter().zip(&t.x).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / s.n() as f64).sqrt())
}

/// Points `a_0 <= ... <= a_{2L}` such that the positive charges lie in the
/// intervals `(a_{2l-2}, a_{2l-1})` and the negative ones in
/// `(a_{2l-1}, a_{2l})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub boundaries: Vec<f64>,
    pub l: usize,
}

impl BlockStructure {
    /// Checks that every charged particle lies in an interval of its sign.
    pub fn separates(&self, state: &ParticleState) -> bool {
        (0..state.n()).filter(|&i| state.b[i] != 0).all(|i| {
            let x = state.x[i];
            let first = if state.b[i] > 0 { 1 } else { 2 };
            (first..=2 * self.l)
                .step_by(2)
                .any(|k| self.boundaries[k - 1] < x && x < self.boundaries[k])
        })
    }
}

/// Block structure of the charged particles by the midpoint construction:
/// `a_0 = x_first - 1`, a midpoint for every neighbouring pair of opposite
/// charge and `a_{2L} = x_last + 1`, with a degenerate first (last) interval
/// when the leftmost (rightmost) charge is negative (positive).
pub fn block_structure(state: &ParticleState) -> BlockStructure {
    let act = state.active_indices();
    let (Some(&first), Some(&last)) = (act.first(), act.last()) else {
        return BlockStructure {
            boundaries: Vec::new(),
            l: 0,
        };
    };
    let mut a = vec![state.x[first] - 1.0];
    if state.b[first] < 0 {
        a.push(state.x[first] - 1.0);
    }
    for w in act.windows(2) {
        let (i, j) = (w[0], w[1]);
        if state.b[i] != state.b[j] {
            a.push(0.5 * (state.x[i] + state.x[j]));
        }
    }
    let ell = a.len() - 1;
    let end = state.x[last] + 1.0;
    if ell % 2 == 0 {
        a.push(end);
    }
    a.push(end);
    let l = (a.len() - 1) / 2;
    BlockStructure { boundaries: a, l }
}

/// `sup supp a <= inf supp b`; true when either measure is empty.
pub fn supports_separated(a: &WeightedAtoms, b: &WeightedAtoms) -> bool {
    match (a.max_support(), b.min_support()) {
        (Some(hi), Some(lo)) => hi <= lo,
        _ => true,
    }
}

/// Writes `position,weight,species` rows for the given labelled measures.
pub fn write_measures_csv<W: Write>(out: W, measures: &[(&str, &WeightedAtoms)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["position", "weight", "species"])?;
    for (label, m) in measures {
        for &(x, wt) in &m.atoms {
            w.write_record([x.to_string(), wt.to_string(), label.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a square distance matrix with the sample times as header and first
/// column.
pub fn write_distance_matrix_csv<W: Write>(out: W, times: &[f64], d: &[Vec<f64>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(times.iter().map(f64::to_string));
    w.write_record(&header)?;
    for (t, row) in times.iter().zip(d) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
