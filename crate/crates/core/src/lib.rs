//! Ultra-weak space-time DPG discretization of the 1D heat equation on
//! adaptively refined, anisotropic rectangular meshes.

pub mod basis;
pub mod dofmap;
pub mod dyadic;
pub mod mesh;
pub mod quadrature;
pub mod assembly;
pub mod experiments;
pub mod solver;
pub mod adaptivity;
