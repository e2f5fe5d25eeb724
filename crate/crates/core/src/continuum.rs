//! Finite-volume upwind solver for the two-species transport system in which
//! only the non-annihilated parts `[kappa]_+` and `[kappa]_-` move.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::KernelPair;
use crate::measures::WeightedAtoms;

#[derive(Debug, Error, PartialEq)]
pub enum ContinuumError {
    #[error("time step {dt:e} violates the CFL bound {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid density: {0}")]
    Density(String),
}

/// Uniform grid of `cells` cells on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, cells: usize) -> Result<Self, ContinuumError> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() || cells == 0 {
            return Err(ContinuumError::Grid(format!("[{x_min}, {x_max}] with {cells} cells")));
        }
        Ok(Self { x_min, x_max, cells })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    /// Same domain with twice as many cells.
    pub fn refined(&self) -> Self {
        Self { cells: 2 * self.cells, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Species {
    Plus,
    Minus,
}

/// Cell averages of the two species densities at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensityPair {
    pub grid: Grid,
    pub rho_plus: Vec<f64>,
    pub rho_minus: Vec<f64>,
    pub t: f64,
}

impl GridDensityPair {
    pub fn new(grid: Grid, rho_plus: Vec<f64>, rho_minus: Vec<f64>) -> Result<Self, ContinuumError> {
        if rho_plus.len() != grid.cells || rho_minus.len() != grid.cells {
            return Err(ContinuumError::Density(format!(
                "{} cells but {} and {} values",
                grid.cells,
                rho_plus.len(),
                rho_minus.len()
            )));
        }
        if rho_plus.iter().chain(&rho_minus).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(ContinuumError::Density("densities must be finite and nonnegative".into()));
        }
        Ok(Self { grid, rho_plus, rho_minus, t: 0.0 })
    }

    /// Cell averages of the given density profiles (five-point Gauss rule
    /// per cell).
    pub fn from_profiles(
        grid: Grid,
        plus: impl Fn(f64) -> f64,
        minus: impl Fn(f64) -> f64,
    ) -> Result<Self, ContinuumError> {
        Self::new(grid, cell_averages(&grid, plus), cell_averages(&grid, minus))
    }

    pub fn species(&self, s: Species) -> &[f64] {
        match s {
            Species::Plus => &self.rho_plus,
            Species::Minus => &self.rho_minus,
        }
    }

    pub fn mass(&self, s: Species) -> f64 {
        self.species(s).iter().sum::<f64>() * self.grid.dx()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass(Species::Plus) + self.mass(Species::Minus)
    }

    /// Cellwise `kappa = rho+ - rho-`.
    pub fn kappa(&self) -> Vec<f64> {
        self.rho_plus.iter().zip(&self.rho_minus).map(|(p, m)| p - m).collect()
    }

    /// Cellwise `([kappa]_+, [kappa]_-)`.
    pub fn kappa_parts(&self) -> (Vec<f64>, Vec<f64>) {
        self.rho_plus
            .iter()
            .zip(&self.rho_minus)
            .map(|(p, m)| ((p - m).max(0.0), (m - p).max(0.0)))
            .unzip()
    }

    /// `int |kappa|`.
    pub fn kappa_mass(&self) -> f64 {
        self.kappa().iter().map(|k| k.abs()).sum::<f64>() * self.grid.dx()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "rho_plus", "rho_minus", "kappa"])?;
        for i in 0..self.grid.cells {
            w.write_record([
                self.grid.center(i).to_string(),
                self.rho_plus[i].to_string(),
                self.rho_minus[i].to_string(),
                (self.rho_plus[i] - self.rho_minus[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cell_averages(grid: &Grid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    const NODES: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let h = 0.5 * grid.dx();
    (0..grid.cells)
        .map(|i| {
            let c = grid.center(i);
            NODES
                .iter()
                .zip(WEIGHTS)
                .map(|(z, w)| w * f(c + h * z))
                .sum::<f64>()
                * 0.5
        })
        .collect()
}

/// `K'(k dx)` for `k = -(N-1)..=N-1`, stored at offset `k + N - 1`.
fn derivative_table(grid: &Grid, k: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = grid.cells as i64;
    let dx = grid.dx();
    (-(n - 1)..n).map(|d| k(d as f64 * dx)).collect()
}

/// Precomputed kernel derivatives on the grid offsets.
#[derive(Debug, Clone)]
pub struct FieldOperator {
    grid: Grid,
    v_prime: Vec<f64>,
    w_prime: Vec<f64>,
}

impl FieldOperator {
    pub fn new(grid: Grid, pair: &KernelPair) -> Self {
        Self {
            grid,
            v_prime: derivative_table(&grid, |r| pair.v_prime(r)),
            w_prime: derivative_table(&grid, |r| pair.w_prime(r)),
        }
    }

    /// Velocity of `species` at the cell centres:
    /// `-sum_j [kappa]_same(x_j) V'(x_i - x_j) dx - sum_j [kappa]_other(x_j) W'(x_i - x_j) dx`,
    /// the diagonal using `V'(0) = 0`.
    pub fn center_velocity(&self, same: &[f64], other: &[f64]) -> Vec<f64> {
        let n = self.grid.cells;
        let dx = self.grid.dx();
        let one = |i: usize| {
            let mut s = 0.0;
            for j in 0..n {
                let d = i + n - 1 - j;
                s += same[j] * self.v_prime[d] + other[j] * self.w_prime[d];
            }
            -s * dx
        };
        if n >= 256 {
            (0..n).into_par_iter().map(one).collect()
        } else {
            (0..n).map(one).collect()
        }
    }

    /// Face velocities (`cells + 1` values), averages of the neighbouring
    /// centre values and zero on the two boundary faces.
    pub fn face_velocity(&self, dens: &GridDensityPair, species: Species) -> Vec<f64> {
        let (kp, km) = dens.kappa_parts();
        let u = match species {
            Species::Plus => self.center_velocity(&kp, &km),
            Species::Minus => self.center_velocity(&km, &kp),
        };
        faces_from_centers(&u)
    }
}

fn faces_from_centers(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut f = vec![0.0; n + 1];
    for i in 1..n {
        f[i] = 0.5 * (u[i - 1] + u[i]);
    }
    f
}

/// Face velocities of `species`; see [`FieldOperator::face_velocity`].
pub fn force_field(dens: &GridDensityPair, pair: &KernelPair, species: Species) -> Vec<f64> {
    FieldOperator::new(dens.grid, pair).face_velocity(dens, species)
}

fn max_speed(faces: &[f64]) -> f64 {
    faces.iter().fold(0.0, |m, u| m.max(u.abs()))
}

/// Largest stable step for the current densities.
pub fn cfl_limit(op: &FieldOperator, dens: &GridDensityPair, cfl: f64) -> f64 {
    let up = op.face_velocity(dens, Species::Plus);
    let um = op.face_velocity(dens, Species::Minus);
    let s = max_speed(&up).max(max_speed(&um));
    if s == 0.0 {
        f64::INFINITY
    } else {
        cfl * dens.grid.dx() / s
    }
}

/// Upwind update of one species with flux `[kappa]_upwind * u` on interior
/// faces.
fn transport(rho: &[f64], part: &[f64], faces: &[f64], dt: f64, dx: f64) -> Vec<f64> {
    let n = rho.len();
    let mut flux = vec![0.0; n + 1];
    for i in 1..n {
        let u = faces[i];
        flux[i] = if u > 0.0 { part[i - 1] * u } else { part[i] * u };
    }
    (0..n)
        .map(|i| (rho[i] - dt / dx * (flux[i + 1] - flux[i])).max(0.0))
        .collect()
}

fn step_with(
    op: &FieldOperator,
    dens: &GridDensityPair,
    dt: f64,
    cfl: f64,
) -> Result<GridDensityPair, ContinuumError> {
    let dx = dens.grid.dx();
    let (kp, km) = dens.kappa_parts();
    let up = faces_from_centers(&op.center_velocity(&kp, &km));
    let um = faces_from_centers(&op.center_velocity(&km, &kp));
    let s = max_speed(&up).max(max_speed(&um));
    let limit = if s == 0.0 { f64::INFINITY } else { cfl * dx / s };
    if !(dt <= limit * (1.0 + 1e-12)) {
        return Err(ContinuumError::Cfl { dt, limit });
    }
    Ok(GridDensityPair {
        grid: dens.grid,
        rho_plus: transport(&dens.rho_plus, &kp, &up, dt, dx),
        rho_minus: transport(&dens.rho_minus, &km, &um, dt, dx),
        t: dens.t + dt,
    })
}

/// One explicit Euler upwind step; `dt` must satisfy `dt <= 0.5 dx / max|u|`.
pub fn step_fv(dens: &GridDensityPair, pair: &KernelPair, dt: f64) -> Result<GridDensityPair, ContinuumError> {
    step_with(&FieldOperator::new(dens.grid, pair), dens, dt, 0.5)
}

/// Integrates to every time in `snapshot_times` (sorted, within `[t, T]`)
/// with the largest step allowed by `cfl`, returning the densities there.
pub fn run_continuum(
    init: &GridDensityPair,
    pair: &KernelPair,
    snapshot_times: &[f64],
    cfl: f64,
) -> Result<Vec<GridDensityPair>, ContinuumError> {
    if !(cfl > 0.0 && cfl <= 0.5) {
        return Err(ContinuumError::Grid(format!("cfl = {cfl} outside (0, 0.5]")));
    }
    let op = FieldOperator::new(init.grid, pair);
    let mut cur = init.clone();
    let mut out = Vec::with_capacity(snapshot_times.len());
    let mut steps = 0usize;
    for &target in snapshot_times {
        while cur.t < target {
            let limit = cfl_limit(&op, &cur, cfl);
            let remaining = target - cur.t;
            let dt = limit.min(remaining);
            cur = step_with(&op, &cur, dt, cfl)?;
            if dt == remaining {
                cur.t = target;
            }
            steps += 1;
        }
        out.push(cur.clone());
    }
    log::info!("continuum run: {} cells, {steps} steps", init.grid.cells);
    Ok(out)
}

/// Cell centres as atoms with weight `rho dx` (empty cells omitted).
pub fn to_measure(dens: &GridDensityPair, species: Species) -> WeightedAtoms {
    atoms_of(&dens.grid, dens.species(species))
}

/// `[kappa]_+` or `[kappa]_-` as atoms.
pub fn kappa_part_measure(dens: &GridDensityPair, species: Species) -> WeightedAtoms {
    let (kp, km) = dens.kappa_parts();
    atoms_of(&dens.grid, if species == Species::Plus { &kp } else { &km })
}

fn atoms_of(grid: &Grid, rho: &[f64]) -> WeightedAtoms {
    let dx = grid.dx();
    WeightedAtoms {
        atoms: rho
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 0.0)
            .map(|(i, r)| (grid.center(i), r * dx))
            .collect(),
    }
}
