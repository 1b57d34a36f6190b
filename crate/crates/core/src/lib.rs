//! Curvature of Hamiltonian vector fields through Jacobi curves, and
//! Monte Carlo checks of the entropy lower bound `h_μ ≥ ∫ Tr √(−R̂) dμ`.
//!
//! Layout:
//! - [`symplin`]: symplectic linear algebra, Lagrangian subspaces, the form `g_z^h`.
//! - [`systems`]: Hamiltonians (mechanical, 2D metric families, custom) and Liouville sampling.
//! - [`flow`]: symplectic integrators, tangent flow, reduction to `ker dh / span{ẍh}`.
//! - [`jacobi`]: Jacobi curves, derivative curves, curvature and reduced curvature.
//! - [`entropy`]: Lyapunov spectra, Riccati equation, bound and Pesin estimates.

pub mod entropy;
pub mod error;
pub mod linalg;
pub mod flow;
pub mod jacobi;
pub mod symplin;
pub mod systems;

pub use error::{Error, Result};
pub use symplin::{standard_form, GramForm, LagrangianSubspace, SymplecticSpace};
pub use systems::{FamilyTag, HamiltonianSystem, LevelSet, Metric2D, PhasePoint, ScalarField, Topology};
