//! Right eigenvectors, bi-orthogonal norms and collectivity measures.
//!
//! For the rank-one coupled Hamiltonian a right eigenvector of eigenvalue
//! `λ` is, componentwise, `u_j = v_j/(E_j - λ)` up to one overall factor.
//! Left eigenvectors are the transposes of the right ones, so the
//! bi-orthogonal normalization fixes the complex bilinear square
//! `Σ_j a_j² = 1` (not the modulus). The ordinary norm `⟨Φ|Φ⟩ = Σ|a_j|²`
//! is then ≥ 1 and measures how non-orthogonal the eigenbasis has become.

use ndarray::Array2;
use ndarray_linalg::Eig;
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{CouplingParam, ModelInstance};

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("state at lambda = {lambda} is self-orthogonal (bilinear square {norm})")]
    SelfOrthogonal { lambda: Complex64, norm: f64 },
    #[error("lambda = {lambda} is not an eigenvalue: |F| = {residual}")]
    NotAnEigenvalue { lambda: Complex64, residual: f64 },
    #[error("dense oracle limited to M <= {limit}, got {got}")]
    TooLarge { limit: usize, got: usize },
    #[error("dense eigensolver failed: {0}")]
    OracleFailure(String),
}

/// Acceptable secular residual for a value claimed to be an eigenvalue.
const EIGENVALUE_RESIDUAL_TOL: f64 = 1e-6;
/// Relative bilinear-square threshold below which a state counts as
/// self-orthogonal (the norm genuinely diverges at an exceptional point).
const SELF_ORTHOGONAL_TOL: f64 = 1e-12;

/// One normalized right eigenvector with its observables.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub lambda: Complex64,
    /// Expansion coefficients in the unperturbed basis, `Σ a_j² = 1`.
    pub coeffs: Vec<Complex64>,
    /// `⟨Φ|Φ⟩ = Σ |a_j|²`.
    pub norm_sq: f64,
    /// Number of principal components, in `[1/M, 1]`.
    pub npc: f64,
}

impl EigenSolution {
    pub fn gamma_half(&self) -> f64 {
        -self.lambda.im
    }
}

/// Build the normalized eigenvector for a known eigenvalue.
pub fn eigenvector(
    model: &ModelInstance,
    kappa: CouplingParam,
    lambda: Complex64,
) -> Result<EigenSolution, EigenError> {
    let m = model.len();

    // decoupled level: the bare basis vector is exact
    if let Some(j) = model
        .energies()
        .iter()
        .zip(model.couplings())
        .position(|(&e, &v)| v == 0.0 && (e - lambda).norm_sqr() == 0.0)
    {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); m];
        coeffs[j] = Complex64::new(1.0, 0.0);
        return Ok(EigenSolution {
            lambda,
            coeffs,
            norm_sq: 1.0,
            npc: 1.0 / m as f64,
        });
    }

    let mut residual = match crate::secular::secular_value(model, kappa, lambda) {
        Ok(eval) => eval.value.norm(),
        Err(_) => f64::INFINITY,
    };
    if kappa.magnitude() == 0.0 {
        // bare spectrum: F ≡ 1 but every E_k is an eigenvalue
        residual = if model.energies().iter().any(|&e| (e - lambda).norm_sqr() == 0.0) {
            0.0
        } else {
            f64::INFINITY
        };
        if residual == 0.0 {
            let j = model
                .energies()
                .iter()
                .position(|&e| (e - lambda).norm_sqr() == 0.0)
                .unwrap();
            let mut coeffs = vec![Complex64::new(0.0, 0.0); m];
            coeffs[j] = Complex64::new(1.0, 0.0);
            return Ok(EigenSolution {
                lambda,
                coeffs,
                norm_sq: 1.0,
                npc: 1.0 / m as f64,
            });
        }
    }
    if residual > EIGENVALUE_RESIDUAL_TOL {
        return Err(EigenError::NotAnEigenvalue { lambda, residual });
    }

    let mut u = vec![Complex64::new(0.0, 0.0); m];
    let mut bilinear = Complex64::new(0.0, 0.0);
    let mut abs_sq = 0.0f64;
    for (j, (&e, &v)) in model
        .energies()
        .iter()
        .zip(model.couplings())
        .enumerate()
    {
        if v == 0.0 {
            continue;
        }
        let c = v * (e - lambda).finv();
        u[j] = c;
        bilinear += c * c;
        abs_sq += c.norm_sqr();
    }
    if bilinear.norm() < SELF_ORTHOGONAL_TOL * abs_sq {
        return Err(EigenError::SelfOrthogonal {
            lambda,
            norm: bilinear.norm(),
        });
    }
    let scale = bilinear.sqrt().finv();
    let coeffs: Vec<Complex64> = u.into_iter().map(|c| c * scale).collect();
    let norm_sq: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let quart: f64 = coeffs.iter().map(|c| c.norm_sqr() * c.norm_sqr()).sum();
    // b_j = |a_j|/√(Σ|a|²) so that Σ b² = 1; Nᵖ = 1/(M·Σ b⁴)
    let npc = norm_sq * norm_sq / (m as f64 * quart);
    Ok(EigenSolution {
        lambda,
        coeffs,
        norm_sq,
        npc,
    })
}

/// Mean bi-orthogonality norm and the per-state observables.
#[derive(Debug, Clone)]
pub struct Observables {
    /// `B = (1/M) Σ ⟨Φ_i|Φ_i⟩ ≥ 1`.
    pub b_mean: f64,
    pub norms: Vec<f64>,
    pub npcs: Vec<f64>,
}

pub fn observables(solutions: &[EigenSolution]) -> Observables {
    let norms: Vec<f64> = solutions.iter().map(|s| s.norm_sq).collect();
    let npcs: Vec<f64> = solutions.iter().map(|s| s.npc).collect();
    let b_mean = norms.iter().sum::<f64>() / norms.len().max(1) as f64;
    Observables {
        b_mean,
        norms,
        npcs,
    }
}

/// Partial mean `B⁽ⁿ⁾` over a subset of states.
pub fn partial_b(solutions: &[EigenSolution], subset: &[usize]) -> f64 {
    if subset.is_empty() {
        return f64::NAN;
    }
    subset.iter().map(|&i| solutions[i].norm_sq).sum::<f64>() / subset.len() as f64
}

/// Independent dense eigendecomposition of `H = diag(E) - iκ v vᵀ`.
///
/// Goes through a general complex eigensolver (LAPACK's Hessenberg + shifted
/// QR), sharing nothing with the secular-function path; used to cross-check
/// the tracker. Eigenpairs are returned sorted by real part.
pub fn dense_oracle(
    model: &ModelInstance,
    kappa: CouplingParam,
) -> Result<Vec<(Complex64, Vec<Complex64>)>, EigenError> {
    const LIMIT: usize = 2000;
    let m = model.len();
    if m > LIMIT {
        return Err(EigenError::TooLarge { limit: LIMIT, got: m });
    }
    let ik = Complex64::i() * kappa.kappa();
    let mut h = Array2::<Complex64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let mut x = -ik * model.couplings()[i] * model.couplings()[j];
            if i == j {
                x += model.energies()[i];
            }
            h[(i, j)] = x;
        }
    }
    let (vals, vecs) = h
        .eig()
        .map_err(|e| EigenError::OracleFailure(e.to_string()))?;
    let mut out: Vec<(Complex64, Vec<Complex64>)> = vals
        .iter()
        .enumerate()
        .map(|(j, &l)| (l, vecs.column(j).to_vec()))
        .collect();
    out.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    Ok(out)
}

/// Largest pairwise distance of a minimal-weight matching between two
/// eigenvalue multisets. Greedy globally-shortest-pair matching: if the
/// result is below a tolerance it certifies the multisets agree to that
/// tolerance.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; n];
    let mut used_b = vec![false; n];
    let mut max_d = 0.0f64;
    let mut matched = 0;
    for (d, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        max_d = max_d.max(d);
        matched += 1;
        if matched == n {
            break;
        }
    }
    max_d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpectrumSpec;
    use crate::secular::solve_at;
    use crate::{build_model, ModelInstance};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, m: usize) -> ModelInstance {
        let mut e = 0.0;
        let mut energies = Vec::with_capacity(m);
        let mut couplings = Vec::with_capacity(m);
        for _ in 0..m {
            e += rng.gen_range(0.5..1.5);
            energies.push(e);
            couplings.push(rng.gen_range(0.2..1.5));
        }
        let mean = energies.iter().sum::<f64>() / m as f64;
        for e in &mut energies {
            *e -= mean;
        }
        ModelInstance::new(energies, couplings, "random", 0).unwrap()
    }

    #[test]
    fn decoupled_limit_is_bare_basis() {
        let m = build_model(&SpectrumSpec::ideal(3)).unwrap();
        let kappa = CouplingParam::real(1e-9);
        let roots = solve_at(&m, kappa).unwrap();
        for (j, &l) in roots.iter().enumerate() {
            let sol = eigenvector(&m, kappa, l).unwrap();
            assert!(sol.coeffs[j].norm() > 0.999999);
            assert_abs_diff_eq!(sol.npc, 1.0 / 7.0, epsilon = 1e-6);
            assert_abs_diff_eq!(sol.norm_sq, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn equal_mixing_has_full_npc() {
        // a synthetic state with b_j = 1/√M has Nᵖ = 1
        let m = 8;
        let coeffs: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(1.0 / (m as f64).sqrt(), 0.0))
            .collect();
        let norm_sq: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        let quart: f64 = coeffs.iter().map(|c| c.norm_sqr() * c.norm_sqr()).sum();
        let npc = norm_sq * norm_sq / (m as f64 * quart);
        assert_abs_diff_eq!(npc, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn exceptional_point_is_self_orthogonal() {
        let m = ModelInstance::new(vec![-0.5, 0.5], vec![1.0, 1.0], "two-level", 0).unwrap();
        let res = eigenvector(
            &m,
            CouplingParam::real(0.5),
            Complex64::new(0.0, -0.5),
        );
        assert!(matches!(res, Err(EigenError::SelfOrthogonal { .. })));
    }

    #[test]
    fn non_eigenvalue_is_rejected() {
        let m = build_model(&SpectrumSpec::ideal(3)).unwrap();
        let res = eigenvector(
            &m,
            CouplingParam::real(0.5),
            Complex64::new(0.25, -0.1),
        );
        assert!(matches!(res, Err(EigenError::NotAnEigenvalue { .. })));
    }

    #[test]
    fn bilinear_normalization_and_biorthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, 14);
        let kappa = CouplingParam::real(0.45);
        let roots = solve_at(&m, kappa).unwrap();
        let sols: Vec<EigenSolution> = roots
            .iter()
            .map(|&l| eigenvector(&m, kappa, l).unwrap())
            .collect();
        for s in &sols {
            let bil: Complex64 = s.coeffs.iter().map(|c| c * c).sum();
            assert!((bil - 1.0).norm() < 1e-10);
            assert!(s.norm_sq >= 1.0 - 1e-12);
            assert!(s.npc >= 1.0 / 14.0 - 1e-12 && s.npc <= 1.0 + 1e-12);
        }
        for i in 0..sols.len() {
            for l in 0..i {
                let dot: Complex64 = sols[i]
                    .coeffs
                    .iter()
                    .zip(&sols[l].coeffs)
                    .map(|(a, b)| a * b)
                    .sum();
                assert!(dot.norm() <= 1e-8, "states {i},{l} overlap {}", dot.norm());
            }
        }
    }

    #[test]
    fn residual_of_reconstructed_eigenvectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_model(&mut rng, 11);
        let kappa = CouplingParam::new(0.6, 0.2).unwrap();
        let roots = solve_at(&m, kappa).unwrap();
        let ik = Complex64::i() * kappa.kappa();
        let h_norm = m
            .energies()
            .iter()
            .map(|e| e.abs())
            .fold(0.0f64, f64::max)
            + kappa.magnitude() * m.coupling_norm_sq();
        for &l in &roots {
            let sol = eigenvector(&m, kappa, l).unwrap();
            let vdot: Complex64 = m
                .couplings()
                .iter()
                .zip(&sol.coeffs)
                .map(|(&v, c)| v * c)
                .sum();
            let mut worst = 0.0f64;
            let mut norm = 0.0f64;
            for j in 0..m.len() {
                let r = (m.energies()[j] - l) * sol.coeffs[j] - ik * m.couplings()[j] * vdot;
                worst += r.norm_sqr();
                norm += sol.coeffs[j].norm_sqr();
            }
            let resid = worst.sqrt() / norm.sqrt();
            assert!(resid <= 1e-8 * h_norm, "residual {resid}");
        }
    }

    #[test]
    fn observables_hermitian_limit() {
        let m = build_model(&SpectrumSpec::ideal(10)).unwrap();
        let kappa = CouplingParam::real(1e-9);
        let roots = solve_at(&m, kappa).unwrap();
        let sols: Vec<EigenSolution> = roots
            .iter()
            .map(|&l| eigenvector(&m, kappa, l).unwrap())
            .collect();
        let obs = observables(&sols);
        assert_abs_diff_eq!(obs.b_mean, 1.0, epsilon = 1e-9);
        let sub = partial_b(&sols, &[0, 1, 2]);
        assert_abs_diff_eq!(sub, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn oracle_single_state() {
        let m = ModelInstance::new(vec![0.25], vec![0.9], "single", 0).unwrap();
        let alpha = 0.7;
        let got = dense_oracle(&m, CouplingParam::real(alpha)).unwrap();
        let want = Complex64::new(0.25, -alpha * 0.81);
        assert!((got[0].0 - want).norm() < 1e-12);
    }

    #[test]
    fn oracle_two_level_closed_form() {
        let m = ModelInstance::new(vec![-0.5, 0.5], vec![1.0, 1.0], "two-level", 0).unwrap();
        let got = dense_oracle(&m, CouplingParam::real(0.4)).unwrap();
        assert!((got[0].0 - Complex64::new(-0.3, -0.4)).norm() < 1e-10);
        assert!((got[1].0 - Complex64::new(0.3, -0.4)).norm() < 1e-10);
    }

    #[test]
    fn oracle_matches_tracker_on_random_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m = random_model(&mut rng, 11);
        let kappa = CouplingParam::real(0.8);
        let tracked = solve_at(&m, kappa).unwrap();
        let oracle: Vec<Complex64> = dense_oracle(&m, kappa)
            .unwrap()
            .into_iter()
            .map(|(l, _)| l)
            .collect();
        assert!(multiset_distance(&tracked, &oracle) < 1e-7);
    }

    #[test]
    fn oracle_rejects_oversized_models() {
        let energies: Vec<f64> = (0..2001).map(|i| i as f64).collect();
        let couplings = vec![1.0; 2001];
        let m = ModelInstance::new(energies, couplings, "big", 0).unwrap();
        assert!(matches!(
            dense_oracle(&m, CouplingParam::real(0.1)),
            Err(EigenError::TooLarge { .. })
        ));
    }
}
