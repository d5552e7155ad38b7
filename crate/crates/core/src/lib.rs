//! Key-frame interpolation of triangle-mesh shells via a variational
//! time-discrete geodesic calculus.
//!
//! The shape space is the set of shells sharing one [`mesh::Topology`],
//! metrized by an elastic deformation energy ([`energy`]). On top of the
//! discrete geodesic operators ([`geodesics`]) sit Bézier and cardinal
//! spline constructors ([`curves`]) and three interpolatory subdivision
//! schemes ([`subdivision`]).
//!
//! Everything is generic over the scalar type through [`scalar::Real`];
//! concrete `f64` aliases live at the crate root.

pub mod curves;
pub mod energy;
pub mod error;
pub mod geodesics;
pub mod mesh;
pub mod meshgen;
pub mod obj;
pub mod oracle;
pub mod scalar;
pub mod solver;
pub mod subdivision;
pub mod surface;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Shell64 = mesh::Shell<f64>;
pub type Displacement64 = mesh::Displacement<f64>;
pub type DiscretePath64 = mesh::DiscretePath<f64>;
pub type EnergyBackend64 = energy::EnergyBackend<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;

pub type Shell32 = mesh::Shell<f32>;
pub type Displacement32 = mesh::Displacement<f32>;
