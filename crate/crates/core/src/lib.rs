//! Signed particles on the line with pairwise interactions and annihilation
//! of colliding opposite charges, together with the measure-theoretic
//! diagnostics and a finite-volume solver of the limiting transport system.

pub mod analysis;
pub mod continuum;
pub mod dynamics;
pub mod kernels;
pub mod measures;
pub mod scenario;
