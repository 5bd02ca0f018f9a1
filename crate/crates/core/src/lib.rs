//! Elastic band structures of anisotropic C-shape/snowflake optomechanical
//! crystals, and the measurement-side analysis that goes with them.
//!
//! The crate is `no_std` (it needs `alloc`). The default `std` feature only
//! enables parallel band sweeps through rayon.
//!
//! Modules, bottom-up:
//!
//! - [`materials`]: Voigt stiffness, rotation about the wafer normal, the
//!   in-plane reduction and Christoffel velocities.
//! - [`geometry`]: C-shape and snowflake unit cells, the defect taper and
//!   rasterization to a [`geometry::MaterialGrid`].
//! - [`bloch`]: plane-wave assembly and dense solution of the Floquet-Bloch
//!   generalized eigenproblem, plus band sweeps over `k` and orientation.
//! - [`modes`]: parity scores, region energy fractions, gap extraction and
//!   anti-crossing detection.
//! - [`calibration`]: multi-Lorentzian PSD fits, phase-modulator calibration
//!   and `g0` extraction.
//! - [`thermometry`]: sideband-asymmetry phonon occupancy.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bloch;
pub mod calibration;
pub mod geometry;
pub mod lsq;
pub mod materials;
pub mod modes;
pub mod symmetry;
pub mod thermometry;

mod linalg;

pub use num_complex::Complex64;

/// Nanometres to metres.
pub const NM: f64 = 1e-9;
