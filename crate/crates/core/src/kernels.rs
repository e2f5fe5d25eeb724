//! Interaction potentials for equally charged (`V`) and oppositely charged
//! (`W`) particles, together with a numerical audit of the standing
//! assumptions the rest of the crate relies on: evenness, bounded `r K'(r)`,
//! a logarithmic singularity of `V` at the origin and a regular `W`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("{family} cannot be evaluated at r = 0 when used as the same-sign kernel")]
    Domain { family: KernelFamily },
    #[error("regularisation length must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("{family} is not admissible as a {role} kernel: {reason}")]
    InvalidRole {
        family: KernelFamily,
        role: KernelRole,
        reason: &'static str,
    },
    #[error("unrecognised kernel '{0}' (expected log, wall, reglog(<delta>) or zero)")]
    Parse(String),
}

/// The supported potential families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelFamily {
    /// `-log|r|`
    LogRepulsive,
    /// `r coth r - log|2 sinh r|`, the dislocation-wall potential.
    WallRepulsive,
    /// `log(r^2 + delta^2) / 2`, a regularised attraction.
    RegularizedLog { delta: f64 },
    Zero,
}

/// Which slot of the kernel pair a family occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelRole {
    /// `V`: interaction between particles of equal charge.
    SameSign,
    /// `W`: interaction between particles of opposite charge.
    OppositeSign,
}

impl fmt::Display for KernelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelRole::SameSign => f.write_str("same-sign (V)"),
            KernelRole::OppositeSign => f.write_str("opposite-sign (W)"),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::LogRepulsive => f.write_str("log"),
            KernelFamily::WallRepulsive => f.write_str("wall"),
            KernelFamily::RegularizedLog { delta } => write!(f, "reglog({delta})"),
            KernelFamily::Zero => f.write_str("zero"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "log" => return Ok(KernelFamily::LogRepulsive),
            "wall" => return Ok(KernelFamily::WallRepulsive),
            "zero" => return Ok(KernelFamily::Zero),
            _ => {}
        }
        let inner = t
            .strip_prefix("reglog(")
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| KernelError::Parse(s.to_string()))?;
        let delta: f64 = inner
            .trim()
            .parse()
            .map_err(|_| KernelError::Parse(s.to_string()))?;
        KernelFamily::regularized_log(delta)
    }
}

impl TryFrom<String> for KernelFamily {
    type Error = KernelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<KernelFamily> for String {
    fn from(k: KernelFamily) -> String {
        k.to_string()
    }
}

impl KernelFamily {
    pub fn regularized_log(delta: f64) -> Result<Self, KernelError> {
        if delta > 0.0 && delta.is_finite() {
            Ok(KernelFamily::RegularizedLog { delta })
        } else {
            Err(KernelError::BadDelta(delta))
        }
    }

    /// Raw potential value. No domain checks; `LogRepulsive` and
    /// `WallRepulsive` return `+inf` at the origin.
    pub fn value(&self, r: f64) -> f64 {
        let a = r.abs();
        match *self {
            KernelFamily::LogRepulsive => -a.ln(),
            KernelFamily::WallRepulsive => wall_value(a),
            KernelFamily::RegularizedLog { delta } => 0.5 * (a * a + delta * delta).ln(),
            KernelFamily::Zero => 0.0,
        }
    }

    /// Derivative with the convention `K'(0) = 0`.
    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            KernelFamily::LogRepulsive => {
                if r == 0.0 {
                    0.0
                } else {
                    -1.0 / r
                }
            }
            KernelFamily::WallRepulsive => wall_derivative(r),
            KernelFamily::RegularizedLog { delta } => r / (r * r + delta * delta),
            KernelFamily::Zero => 0.0,
        }
    }

    /// Limits of `|r K'(r)|` as `r -> 0` and `r -> inf`.
    fn r_derivative_limits(&self) -> (f64, f64) {
        match self {
            KernelFamily::LogRepulsive => (1.0, 1.0),
            KernelFamily::WallRepulsive => (1.0, 0.0),
            KernelFamily::RegularizedLog { .. } => (0.0, 1.0),
            KernelFamily::Zero => (0.0, 0.0),
        }
    }
}

// r coth r - log(2 sinh r) rewritten as 2r/expm1(2r) - log(-expm1(-2r)),
// which is free of cancellation for every r > 0.
fn wall_value(a: f64) -> f64 {
    if a == 0.0 {
        return f64::INFINITY;
    }
    let two_a = 2.0 * a;
    let first = if two_a > 700.0 { 0.0 } else { two_a / two_a.exp_m1() };
    first - (-(-two_a).exp_m1()).ln()
}

// d/dr [r coth r - log(2 sinh r)] = -r / sinh^2 r
fn wall_derivative(r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let s = r.sinh();
    if s.is_infinite() {
        return 0.0;
    }
    let q = r / s;
    if q == 0.0 {
        return 0.0;
    }
    -q / s
}

/// A potential family placed in one of the two kernel slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub role: KernelRole,
}

impl KernelSpec {
    /// Builds a kernel, rejecting families that cannot occupy `role`.
    pub fn new(family: KernelFamily, role: KernelRole) -> Result<Self, KernelError> {
        if let KernelFamily::RegularizedLog { delta } = family {
            KernelFamily::regularized_log(delta)?;
        }
        let reason = match (role, family) {
            (KernelRole::SameSign, KernelFamily::Zero) => Some("V must diverge at 0"),
            (KernelRole::SameSign, KernelFamily::RegularizedLog { .. }) => {
                Some("V must diverge at 0")
            }
            (KernelRole::OppositeSign, KernelFamily::LogRepulsive) => {
                Some("W must be finite and C^1 at 0")
            }
            (KernelRole::OppositeSign, KernelFamily::WallRepulsive) => {
                Some("W must be finite and C^1 at 0")
            }
            _ => None,
        };
        match reason {
            Some(reason) => Err(KernelError::InvalidRole {
                family,
                role,
                reason,
            }),
            None => Ok(Self { family, role }),
        }
    }

    /// Skips the role check. Only useful for feeding inadmissible kernels
    /// into [`validate_assumptions`].
    pub fn unchecked(family: KernelFamily, role: KernelRole) -> Self {
        Self { family, role }
    }

    pub fn eval(&self, r: f64) -> Result<f64, KernelError> {
        if r == 0.0 && self.role == KernelRole::SameSign {
            return Err(KernelError::Domain {
                family: self.family,
            });
        }
        Ok(self.family.value(r))
    }

    #[inline]
    pub fn eval_prime(&self, r: f64) -> f64 {
        self.family.derivative(r)
    }
}

/// The `(V, W)` pair with the constants derived from it once at
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPair {
    pub v: KernelSpec,
    pub w: KernelSpec,
    /// `sup_r |r V'(r)|`
    pub bound_r_v_prime: f64,
    /// `sup_r |r W'(r)|`
    pub bound_r_w_prime: f64,
    /// `W(0)`
    pub w_at_zero: f64,
    /// Smallest `C >= 0` with `(V + W)(r) >= -C r^2`, estimated numerically.
    pub quadratic_growth: f64,
}

impl KernelPair {
    pub fn new(v: KernelFamily, w: KernelFamily) -> Result<Self, KernelError> {
        let v = KernelSpec::new(v, KernelRole::SameSign)?;
        let w = KernelSpec::new(w, KernelRole::OppositeSign)?;
        Ok(Self::from_specs(v, w))
    }

    /// Builds a pair without role checks (see [`KernelSpec::unchecked`]).
    pub fn unchecked(v: KernelFamily, w: KernelFamily) -> Self {
        Self::from_specs(
            KernelSpec::unchecked(v, KernelRole::SameSign),
            KernelSpec::unchecked(w, KernelRole::OppositeSign),
        )
    }

    fn from_specs(v: KernelSpec, w: KernelSpec) -> Self {
        let bound_r_v_prime = r_derivative_bound(&v.family);
        let bound_r_w_prime = r_derivative_bound(&w.family);
        let quadratic_growth = quadratic_growth_constant(&v.family, &w.family);
        Self {
            v,
            w,
            bound_r_v_prime,
            bound_r_w_prime,
            w_at_zero: w.family.value(0.0),
            quadratic_growth,
        }
    }

    /// Same-sign potential `V(r)`; `r = 0` gives `+inf`.
    #[inline]
    pub fn v_value(&self, r: f64) -> f64 {
        self.v.family.value(r)
    }

    #[inline]
    pub fn w_value(&self, r: f64) -> f64 {
        self.w.family.value(r)
    }

    #[inline]
    pub fn v_prime(&self, r: f64) -> f64 {
        self.v.family.derivative(r)
    }

    #[inline]
    pub fn w_prime(&self, r: f64) -> f64 {
        self.w.family.derivative(r)
    }

    /// Constant of the logarithmic growth bound
    /// `|V(r)| + |W(r)| <= C (|log|r|| + 1)`, obtained by integrating the
    /// `r K'` bounds from `r = 1`.
    pub fn log_growth_constant(&self) -> f64 {
        let at_one = self.v_value(1.0).abs() + self.w_value(1.0).abs();
        at_one.max(self.bound_r_v_prime + self.bound_r_w_prime)
    }
}

fn log_grid(lo_exp: i32, hi_exp: i32, per_decade: usize) -> Vec<f64> {
    let steps = (hi_exp - lo_exp) as usize * per_decade;
    (0..=steps)
        .map(|k| 10f64.powf(lo_exp as f64 + k as f64 / per_decade as f64))
        .collect()
}

fn r_derivative_bound(family: &KernelFamily) -> f64 {
    let (at_zero, at_inf) = family.r_derivative_limits();
    log_grid(-12, 12, 20)
        .into_iter()
        .map(|r| (r * family.derivative(r)).abs())
        .fold(at_zero.max(at_inf), f64::max)
}

fn quadratic_growth_constant(v: &KernelFamily, w: &KernelFamily) -> f64 {
    let deficit = |r: f64| {
        let (a, b) = (v.value(r), w.value(r));
        let s = a + b;
        // cancellation noise of V + W is not a deficit
        if s.is_nan() || s >= -4.0 * f64::EPSILON * (a.abs() + b.abs()) {
            0.0
        } else {
            (-s).max(0.0) / (r * r)
        }
    };
    let grid = log_grid(-12, 12, 40);
    let (best, _) = grid
        .iter()
        .enumerate()
        .map(|(k, &r)| (k, deficit(r)))
        .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    let coarse = deficit(grid[best]);
    if coarse == 0.0 {
        return 0.0;
    }
    // golden-section refinement in log r around the best grid point
    let mut lo = grid[best.saturating_sub(1)].ln();
    let mut hi = grid[(best + 1).min(grid.len() - 1)].ln();
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if deficit(a.exp()) > deficit(b.exp()) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let refined = deficit((0.5 * (lo + hi)).exp());
    coarse.max(refined) * (1.0 + 1e-9)
}

/// Log-spaced sample points with `|r|` in `[1e-8, 1e4]`, both signs.
pub fn default_sample_grid() -> Vec<f64> {
    let pos = log_grid(-8, 4, 40);
    let mut grid: Vec<f64> = pos.iter().map(|r| -r).rev().collect();
    grid.extend(pos);
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub v: KernelFamily,
    pub w: KernelFamily,
    pub clauses: Vec<Clause>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }
}

/// Audits a kernel pair on `sample_grid`. Failures are reported, never
/// raised.
pub fn validate_assumptions(pair: &KernelPair, sample_grid: &[f64]) -> ValidationReport {
    let v = &pair.v.family;
    let w = &pair.w.family;
    let nonzero: Vec<f64> = sample_grid.iter().copied().filter(|r| *r != 0.0).collect();
    let mut clauses = Vec::new();

    let mut asym = 0.0f64;
    for &r in &nonzero {
        for k in [v, w] {
            let (a, b) = (k.value(r), k.value(-r));
            if a.is_finite() && b.is_finite() {
                asym = asym.max((a - b).abs() / a.abs().max(1.0));
            } else if a != b {
                asym = f64::INFINITY;
            }
            let (da, db) = (k.derivative(r), k.derivative(-r));
            asym = asym.max((da + db).abs() / da.abs().max(1.0));
        }
    }
    clauses.push(Clause {
        name: "evenness".into(),
        pass: asym <= 1e-14,
        value: Some(asym),
        detail: "max relative |K(r) - K(-r)| and |K'(r) + K'(-r)|".into(),
    });

    for (name, k, bound) in [
        ("r_v_prime_bounded", v, pair.bound_r_v_prime),
        ("r_w_prime_bounded", w, pair.bound_r_w_prime),
    ] {
        let sup = nonzero
            .iter()
            .map(|&r| (r * k.derivative(r)).abs())
            .fold(0.0, f64::max);
        clauses.push(Clause {
            name: name.into(),
            pass: sup.is_finite() && bound.is_finite() && sup <= bound * (1.0 + 1e-12),
            value: Some(sup),
            detail: format!("empirical sup on grid, stored bound {bound}"),
        });
    }

    let probes: Vec<f64> = (2..=12).map(|e| 10f64.powi(-e)).collect();
    let values: Vec<f64> = probes.iter().map(|&r| v.value(r)).collect();
    let increasing = values.windows(2).all(|p| p[1] > p[0]);
    let rise = values[values.len() - 1] - values[0];
    clauses.push(Clause {
        name: "v_diverges_at_zero".into(),
        pass: increasing && rise > 1.0,
        value: Some(rise),
        detail: "V(1e-12) - V(1e-2), required > 1 with strict increase".into(),
    });

    let w0 = w.value(0.0);
    let slope = w.derivative(1e-8).abs().max(w.derivative(-1e-8).abs());
    clauses.push(Clause {
        name: "w_regular_at_zero".into(),
        pass: w0.is_finite() && slope <= 1e-4,
        value: Some(w0),
        detail: format!("W(0) and |W'(1e-8)| = {slope}"),
    });

    let predicted = pair.log_growth_constant();
    let empirical = nonzero
        .iter()
        .map(|&r| (v.value(r).abs() + w.value(r).abs()) / (r.abs().ln().abs() + 1.0))
        .fold(0.0, f64::max);
    clauses.push(Clause {
        name: "log_growth".into(),
        pass: empirical.is_finite() && empirical <= predicted * (1.0 + 1e-9),
        value: Some(empirical),
        detail: format!("sup (|V|+|W|)/(|log r|+1); constant from rK' bounds {predicted}"),
    });

    let mut c_quad = 0.0f64;
    let mut near_zero_ok = true;
    for &r in &nonzero {
        let s = v.value(r) + w.value(r);
        if r.abs() <= 1e-3 && !(s >= 0.0) {
            near_zero_ok = false;
        }
        if s.is_finite() {
            c_quad = c_quad.max((-s).max(0.0) / (r * r));
        }
    }
    clauses.push(Clause {
        name: "quadratic_lower_bound".into(),
        pass: near_zero_ok && c_quad.is_finite(),
        value: Some(c_quad),
        detail: "sup max(0, -(V+W)(r)) / r^2; requires V+W >= 0 for |r| <= 1e-3".into(),
    });

    ValidationReport {
        v: *v,
        w: *w,
        clauses,
    }
}
