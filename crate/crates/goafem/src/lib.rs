//! Goal-oriented adaptive finite elements for convection-diffusion-reaction
//! problems on planar triangulations.

pub mod cli;
pub mod driver;
pub mod estimator;
pub mod fem;
pub mod jet;
pub mod marking;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod solver;
