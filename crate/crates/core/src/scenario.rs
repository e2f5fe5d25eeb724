//! Scenario files: kernels, initial data, solver settings and study
//! parameters in one TOML document.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuum::{ContinuumError, Grid, GridDensityPair};
use crate::dynamics::{ParticleState, SimConfig, SimError};
use crate::kernels::{KernelError, KernelFamily, KernelPair};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Continuum(#[from] ContinuumError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelChoice {
    #[serde(rename = "V")]
    pub v: KernelFamily,
    #[serde(rename = "W")]
    pub w: KernelFamily,
}

/// Shape of a block density on its interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Constant density.
    Uniform,
    /// `(3/4)(1 - z^2)` in the rescaled variable `z` in `[-1, 1]`.
    Parabolic,
}

impl Profile {
    /// Density of the unit-mass profile on `[-1, 1]`.
    fn pdf(self, z: f64) -> f64 {
        if z.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Profile::Uniform => 0.5,
            Profile::Parabolic => 0.75 * (1.0 - z * z),
        }
    }

    fn cdf(self, z: f64) -> f64 {
        let z = z.clamp(-1.0, 1.0);
        match self {
            Profile::Uniform => 0.5 * (z + 1.0),
            Profile::Parabolic => 0.5 + 0.75 * z - 0.25 * z * z * z,
        }
    }

    /// Inverse of the CDF by bisection.
    fn quantile(self, level: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Particles at the midpoint quantiles `(k - 1/2) / n_block`.
    #[default]
    Quantile,
    /// Independent draws from the profile, seeded by the scenario seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    /// `+1` or `-1`.
    pub charge: i8,
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub profile: Profile,
}

impl Block {
    pub fn density(&self, x: f64) -> f64 {
        let half = 0.5 * (self.hi - self.lo);
        let z = (x - 0.5 * (self.lo + self.hi)) / half;
        self.mass * self.profile.pdf(z) / half
    }

    fn position(&self, level: f64) -> f64 {
        let half = 0.5 * (self.hi - self.lo);
        0.5 * (self.lo + self.hi) + half * self.profile.quantile(level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialData {
    Explicit {
        x: Vec<f64>,
        b: Vec<i8>,
    },
    Blocks {
        /// Default particle count.
        n: usize,
        #[serde(default)]
        placement: Placement,
        blocks: Vec<Block>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuumSettings {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
    pub cfl: f64,
    /// Spacing of the written snapshots.
    pub snapshot_every: f64,
}

impl Default for ContinuumSettings {
    fn default() -> Self {
        Self {
            x_min: -3.0,
            x_max: 3.0,
            cells: 400,
            cfl: 0.5,
            snapshot_every: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// Compare the run with `n` particles against the one with `2n`.
    #[default]
    #[serde(alias = "self-doubling")]
    Doubling,
    /// Compare against the finite-volume solution.
    Continuum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSettings {
    pub n_list: Vec<usize>,
    pub reference: Reference,
}

impl Default for ConvergeSettings {
    fn default() -> Self {
        Self {
            n_list: vec![50, 100, 200, 400],
            reference: Reference::Doubling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub kernels: KernelChoice,
    pub initial: InitialData,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub continuum: ContinuumSettings,
    #[serde(default)]
    pub converge: ConvergeSettings,
    #[serde(default)]
    pub out: Option<String>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ScenarioError::Parse(msg) => ScenarioError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// Checks kernels, solver settings and the initial data (including
    /// opposite charges at a common position).
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.kernel_pair()?;
        self.sim.validate()?;
        if let InitialData::Blocks { n, blocks, .. } = &self.initial {
            if blocks.is_empty() {
                return Err(ScenarioError::Invalid("no blocks".into()));
            }
            for (k, b) in blocks.iter().enumerate() {
                if b.charge != 1 && b.charge != -1 {
                    return Err(ScenarioError::Invalid(format!("block {k}: charge {}", b.charge)));
                }
                if !(b.lo < b.hi) || !(b.mass > 0.0) {
                    return Err(ScenarioError::Invalid(format!(
                        "block {k}: need lo < hi and positive mass"
                    )));
                }
            }
            let total: f64 = blocks.iter().map(|b| b.mass).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(ScenarioError::Invalid(format!("block masses sum to {total}, not 1")));
            }
            self.initial_state(*n)?;
            for &m in &self.converge.n_list {
                self.initial_state(m)?;
            }
        } else {
            self.initial_state(0)?;
        }
        let c = &self.continuum;
        Grid::new(c.x_min, c.x_max, c.cells)?;
        if !(c.cfl > 0.0 && c.cfl <= 0.5) || !(c.snapshot_every > 0.0) {
            return Err(ScenarioError::Invalid("continuum cfl must be in (0, 0.5] and snapshot_every positive".into()));
        }
        Ok(())
    }

    pub fn kernel_pair(&self) -> Result<KernelPair, ScenarioError> {
        Ok(KernelPair::new(self.kernels.v, self.kernels.w)?)
    }

    /// Particle count used by single runs.
    pub fn default_n(&self) -> usize {
        match &self.initial {
            InitialData::Explicit { x, .. } => x.len(),
            InitialData::Blocks { n, .. } => *n,
        }
    }

    /// Initial particles; `n` is ignored for explicit data.
    pub fn initial_state(&self, n: usize) -> Result<ParticleState, ScenarioError> {
        match &self.initial {
            InitialData::Explicit { x, b } => Ok(ParticleState::new(x.clone(), b.clone())?),
            InitialData::Blocks { placement, blocks, .. } => {
                let (x, b) = expand_blocks(blocks, n, *placement, self.seed)?;
                Ok(ParticleState::new(x, b)?)
            }
        }
    }

    /// Cell averages of the block densities on the continuum grid, scaled so
    /// that each species carries exactly its block mass.
    pub fn initial_density(&self, cells: Option<usize>) -> Result<GridDensityPair, ScenarioError> {
        let InitialData::Blocks { blocks, .. } = &self.initial else {
            return Err(ScenarioError::Invalid("continuum runs need block initial data".into()));
        };
        let c = &self.continuum;
        let grid = Grid::new(c.x_min, c.x_max, cells.unwrap_or(c.cells))?;
        let density = |sign: i8| {
            move |x: f64| {
                blocks
                    .iter()
                    .filter(|b| b.charge == sign)
                    .map(|b| b.density(x))
                    .sum::<f64>()
            }
        };
        let mut dens = GridDensityPair::from_profiles(grid, density(1), density(-1))?;
        for (sign, rho) in [(1i8, &mut dens.rho_plus), (-1, &mut dens.rho_minus)] {
            let target: f64 = blocks.iter().filter(|b| b.charge == sign).map(|b| b.mass).sum();
            let have = rho.iter().sum::<f64>() * grid.dx();
            if have > 0.0 {
                rho.iter_mut().for_each(|r| *r *= target / have);
            }
        }
        Ok(dens)
    }
}

/// Splits `n` particles over the blocks in proportion to their masses
/// (largest remainder) and places them.
fn expand_blocks(
    blocks: &[Block],
    n: usize,
    placement: Placement,
    seed: u64,
) -> Result<(Vec<f64>, Vec<i8>), ScenarioError> {
    if n < blocks.len() {
        return Err(ScenarioError::Invalid(format!("{n} particles for {} blocks", blocks.len())));
    }
    let total: f64 = blocks.iter().map(|b| b.mass).sum();
    let exact: Vec<f64> = blocks.iter().map(|b| n as f64 * b.mass / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in &order {
        if rest == 0 {
            break;
        }
        counts[k] += 1;
        rest -= 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut particles: Vec<(f64, i8)> = Vec::with_capacity(n);
    for (block, &m) in blocks.iter().zip(&counts) {
        let mut levels: Vec<f64> = match placement {
            Placement::Quantile => (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect(),
            Placement::Random => (0..m).map(|_| rng.gen_range(1e-12..1.0 - 1e-12)).collect(),
        };
        levels.sort_by(f64::total_cmp);
        particles.extend(levels.into_iter().map(|l| (block.position(l), block.charge)));
    }
    particles.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    Ok(particles.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"
name = "pair"
[kernels]
V = "log"
W = "zero"
[initial]
kind = "explicit"
x = [0.0, 1.0]
b = [1, 1]
[sim]
t_end = 2.0
"#;

    #[test]
    fn minimal_file_loads() {
        let s = Scenario::from_toml_str(TWO).unwrap();
        assert_eq!(s.default_n(), 2);
        assert_eq!(s.sim.t_end, 2.0);
        assert_eq!(s.sim.tol_step, SimConfig::default().tol_step);
        let st = s.initial_state(0).unwrap();
        assert_eq!(st.x, vec![0.0, 1.0]);
        let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn coincident_opposite_pair_is_rejected() {
        let text = TWO.replace("x = [0.0, 1.0]", "x = [0.5, 0.5]").replace("b = [1, 1]", "b = [1, -1]");
        let err = Scenario::from_toml_str(&text).unwrap_err();
        assert!(
            matches!(err, ScenarioError::Sim(SimError::OppositeCoincidence { i: 0, j: 1, .. })),
            "{err}"
        );
    }

    #[test]
    fn parse_errors_carry_line_information() {
        let err = Scenario::from_toml_str("name = \"x\"\n[kernels]\nV = \"cubic\"\nW = \"zero\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let err = Scenario::from_toml_str("name = \n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn invalid_kernel_role_is_rejected() {
        let text = TWO.replace("V = \"log\"", "V = \"zero\"");
        assert!(matches!(Scenario::from_toml_str(&text), Err(ScenarioError::Kernel(_))));
    }

    const BLOCKS: &str = r#"
name = "two blocks"
seed = 3
[kernels]
V = "log"
W = "reglog(0.2)"
[initial]
kind = "blocks"
n = 8
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
mass = 0.25
profile = "parabolic"
[[initial.blocks]]
charge = 1
lo = 1.0
hi = 2.0
mass = 0.25
profile = "uniform"
"#;

    #[test]
    fn blocks_expand_to_quantiles() {
        let s = Scenario::from_toml_str(BLOCKS).unwrap();
        let st = s.initial_state(8).unwrap();
        assert_eq!(st.b, vec![1, 1, 1, 1, -1, -1, 1, 1]);
        let expected_first = [-0.875, -0.625, -0.375, -0.125];
        for (a, b) in st.x.iter().zip(expected_first) {
            assert!((a - b).abs() < 1e-14);
        }
        // parabolic quantile at level 1/4 solves z^3 - 3z - 1 = 0 on [-1, 1],
        // z = 2 cos(260 deg)
        let z = -0.347_296_355_333_860_7;
        assert!((st.x[4] - (0.5 + 0.5 * z)).abs() < 1e-12);
        assert!((st.x[5] - (0.5 - 0.5 * z)).abs() < 1e-12);
        assert_eq!(crate::measures::block_structure(&st).l, 2);
    }

    #[test]
    fn random_placement_is_seeded() {
        let text = BLOCKS.replace("n = 8", "n = 40\nplacement = \"random\"");
        let s = Scenario::from_toml_str(&text).unwrap();
        let a = s.initial_state(40).unwrap();
        let b = s.initial_state(40).unwrap();
        assert_eq!(a, b);
        let mut other = s.clone();
        other.seed = 4;
        assert_ne!(other.initial_state(40).unwrap().x, a.x);
    }

    #[test]
    fn masses_must_sum_to_one() {
        let text = BLOCKS.replace("mass = 0.5", "mass = 0.6");
        assert!(matches!(Scenario::from_toml_str(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn initial_density_has_block_masses() {
        let s = Scenario::from_toml_str(BLOCKS).unwrap();
        let d = s.initial_density(Some(600)).unwrap();
        use crate::continuum::Species;
        assert!((d.mass(Species::Plus) - 0.75).abs() < 1e-12);
        assert!((d.mass(Species::Minus) - 0.25).abs() < 1e-12);
    }
}
