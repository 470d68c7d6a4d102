//! wolffkit: a numerical toolkit for nonlinear potential theory with
//! measure data. Evaluates truncated Wolff and Riesz potentials and
//! fractional maximal functions of measures, estimates Riesz and Bessel
//! capacities variationally, tests the chain of equivalent capacity and
//! potential conditions, solves the coupled nonlinear Wolff integral
//! system by monotone iteration, and verifies pointwise solution bounds
//! on a radial quasilinear PDE bench.

pub mod capacity;
pub mod criteria;
pub mod error;
pub mod geom;
pub mod grid;
pub mod io;
pub mod field;
pub mod measure;
pub mod potential;
pub mod profile;
pub mod radial_pde;
pub mod special;
pub mod wolff_system;

pub use error::{Result, WolffError};
pub use grid::GridSpec;
pub use measure::{Measure, SignedMeasure};
