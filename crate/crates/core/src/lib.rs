//! Spectral objects governing the bifurcation of doubly connected rotating
//! patches of the 3D quasi-geostrophic model: hypergeometric kernels, the
//! angular-velocity window, largest eigenvalues of the linearized contour
//! operator, bifurcation thresholds, transversality quantities, and the
//! nonlinear contour functional with its analytic linearization.
//!
//! Surfaces are indexed 0 (outer boundary) and 1 (inner boundary).

pub mod bifurcation;
pub mod eigen;
pub mod kernels;
pub mod nonlinear;
pub mod profiles;
pub mod quad;
pub mod specfun;
pub mod spectral;

pub use kernels::{KernelContext, OmegaWindow};
pub use profiles::{make_ellipsoid_sphere_config, PatchPairConfig, RevolutionProfile};
pub use quad::QuadratureGrid;
