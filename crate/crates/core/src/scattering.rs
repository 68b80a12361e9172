//! One-channel S-matrix, residues and cross-section profiles.
//!
//! With `K(E) = Σ v_k²/(E - E_k)` the S-matrix element is the Cayley form
//!
//! ```text
//! S(E) = (1 - iκK)/(1 + iκK)
//! ```
//!
//! which equals `1 - 2iκ·vᵀ(E - H)⁻¹v` by the rank-one resolvent identity,
//! so its poles sit exactly at the eigenvalues of `H` and `|S| = 1` on the
//! real axis for real κ.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::eigens::EigenSolution;
use crate::model::{CouplingParam, ModelInstance};

#[derive(Debug, Error)]
pub enum ScatteringError {
    #[error("energy {energy} lies within {tol} of the coupled level E_{index}")]
    PoleProximity {
        energy: f64,
        index: usize,
        tol: f64,
    },
    #[error("state {index} is self-orthogonal; its residue is undefined")]
    SelfOrthogonalState { index: usize },
}

const POLE_TOL: f64 = 1e-12;

/// `S₁₁(E)` for real scattering energy `E`.
pub fn s_matrix_element(
    model: &ModelInstance,
    kappa: CouplingParam,
    energy: f64,
) -> Result<Complex64, ScatteringError> {
    let mut k_sum = 0.0f64;
    for (i, (&e, &v)) in model
        .energies()
        .iter()
        .zip(model.couplings())
        .enumerate()
    {
        if v == 0.0 {
            continue;
        }
        let d = energy - e;
        let tol = POLE_TOL * e.abs().max(1.0);
        if d.abs() <= tol {
            return Err(ScatteringError::PoleProximity {
                energy,
                index: i,
                tol,
            });
        }
        k_sum += v * v / d;
    }
    let ikk = Complex64::i() * kappa.kappa() * k_sum;
    Ok((1.0 - ikk) / (1.0 + ikk))
}

/// Residue data of one resonance pole.
#[derive(Debug, Clone, Copy)]
pub struct Residue {
    /// `γ̃² = -2κ·(Σ_j a_j v_j)²`, the residue of `S` at `λ` divided by `i`,
    /// so that `S(E) - 1 = Σ_k iγ̃_k²/(E - λ_k)` exactly.
    pub gamma_sq: Complex64,
    /// Diagnostic ratio `Γ·⟨Φ|Φ⟩/|γ̃²|` (dimension probe, not asserted).
    pub diagnostic_ratio: f64,
}

/// Pole residues of `S` from a complete bi-orthonormal eigenpair set.
pub fn residues(
    model: &ModelInstance,
    kappa: CouplingParam,
    eigenpairs: &[EigenSolution],
) -> Result<Vec<Residue>, ScatteringError> {
    eigenpairs
        .iter()
        .enumerate()
        .map(|(i, sol)| {
            let bil: Complex64 = sol.coeffs.iter().map(|c| c * c).sum();
            if (bil - 1.0).norm() > 1e-6 {
                return Err(ScatteringError::SelfOrthogonalState { index: i });
            }
            let overlap: Complex64 = sol
                .coeffs
                .iter()
                .zip(model.couplings())
                .map(|(c, &v)| c * v)
                .sum();
            let gamma_sq = -2.0 * kappa.kappa() * overlap * overlap;
            let width = 2.0 * sol.gamma_half();
            let diagnostic_ratio = if gamma_sq.norm() > 0.0 {
                width * sol.norm_sq / gamma_sq.norm()
            } else {
                f64::NAN
            };
            Ok(Residue {
                gamma_sq,
                diagnostic_ratio,
            })
        })
        .collect()
}

/// Raw and window-averaged `|1 - S₁₁(E)|²` profiles.
#[derive(Debug, Clone)]
pub struct CrossSectionProfile {
    pub energy_grid: Vec<f64>,
    pub raw: Vec<f64>,
    pub averaged: Vec<f64>,
    pub window_width: f64,
}

/// Uniform energy grid over the spectrum plus a two-spacing margin,
/// `points_per_spacing` points per mean level distance, phase-shifted half a
/// step so fence-like levels never coincide with a grid point.
pub fn default_energy_grid(model: &ModelInstance, points_per_spacing: usize) -> Vec<f64> {
    let spacing = model.mean_spacing();
    let lo = model.energies()[0] - 2.0 * spacing;
    let hi = model.energies()[model.len() - 1] + 2.0 * spacing;
    let step = spacing / points_per_spacing.max(1) as f64;
    let n = ((hi - lo) / step).ceil() as usize;
    (0..n)
        .map(|i| lo + (i as f64 + 0.5) * step)
        .map(|e| {
            // nudge anything that still lands on a bare level
            let near_pole = model
                .energies()
                .iter()
                .zip(model.couplings())
                .any(|(&ek, &v)| v != 0.0 && (e - ek).abs() < 1e-9 * ek.abs().max(1.0));
            if near_pole {
                e + 0.5 * step
            } else {
                e
            }
        })
        .collect()
}

/// `|1 - S|²` over a grid, with an optional moving-window mean
/// (`window_width` in energy units; 0 disables averaging).
pub fn cross_section(
    model: &ModelInstance,
    kappa: CouplingParam,
    energy_grid: &[f64],
    window_width: f64,
) -> Result<CrossSectionProfile, ScatteringError> {
    let raw: Vec<f64> = energy_grid
        .par_iter()
        .map(|&e| s_matrix_element(model, kappa, e).map(|s| (1.0 - s).norm_sqr()))
        .collect::<Result<_, _>>()?;
    let averaged = if window_width > 0.0 {
        moving_mean(energy_grid, &raw, window_width)
    } else {
        raw.clone()
    };
    Ok(CrossSectionProfile {
        energy_grid: energy_grid.to_vec(),
        raw,
        averaged,
        window_width,
    })
}

fn moving_mean(grid: &[f64], values: &[f64], width: f64) -> Vec<f64> {
    let half = 0.5 * width;
    let n = grid.len();
    let mut out = Vec::with_capacity(n);
    let mut lo = 0usize;
    let mut hi = 0usize;
    let mut sum = 0.0f64;
    for i in 0..n {
        while hi < n && grid[hi] <= grid[i] + half {
            sum += values[hi];
            hi += 1;
        }
        while lo < hi && grid[lo] < grid[i] - half {
            sum -= values[lo];
            lo += 1;
        }
        out.push(sum / (hi - lo) as f64);
    }
    out
}
