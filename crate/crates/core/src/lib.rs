//! Front propagation for KPP reaction-diffusion equations with periodic
//! incompressible advection: effective diffusivity, principal eigenvalues,
//! minimal front speeds, their large-amplitude limits and direct simulation.

pub mod acceptance;
pub mod cell;
pub mod eigen;
pub mod error;
pub mod flow;
pub mod krylov;
pub mod limits;
pub mod minimize;
pub mod oracle;
pub mod sim;
pub mod speed;
pub mod torus;

pub use error::{Error, Result};
