//! Non-Hermitian spectra of discrete levels coupled to a single decay channel.
//!
//! The Hamiltonian is `H = diag(E) - iκ v vᵀ` with real levels `E_k`, a
//! nonnegative coupling vector `v` and a complex coupling strength
//! `κ = α + iβ`. Everything in this crate is built around the rank-one
//! structure of that matrix:
//!
//! - [`model`] constructs the level/coupling families (picket fences,
//!   power-law spectra, unfolded GOE draws),
//! - [`secular`] evaluates the secular function
//!   `F(λ) = 1 - iκ Σ v_k²/(E_k - λ)` and follows all eigenvalue
//!   trajectories as the coupling is ramped up,
//! - [`eigens`] builds right eigenvectors in closed form, the bi-orthogonal
//!   norms `⟨Φ|Φ⟩`, the participation numbers `Nᵖ`, and a dense LAPACK
//!   eigensolver used as an independent cross-check,
//! - [`analytic`] holds the closed-form width laws and critical couplings,
//! - [`scattering`] computes the one-channel S-matrix and cross sections,
//! - [`sweep`] orchestrates coupling sweeps and estimates critical points.

pub mod analytic;
pub mod eigens;
pub mod model;
pub mod scattering;
pub mod secular;
pub mod sweep;

pub use model::{build_model, unfold_goe, CouplingParam, Family, ModelInstance, SpectrumSpec};
