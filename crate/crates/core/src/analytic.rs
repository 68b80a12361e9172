//! Closed-form width laws and critical couplings of the infinite and
//! finite fences.
//!
//! Divergences are reported as typed errors rather than infinities so
//! callers can tell "the formula blows up here" from overflow.

use thiserror::Error;

use std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("formula diverges at {what} = {value}")]
    Divergence { what: &'static str, value: f64 },
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error("no solution on the requested branch: {0}")]
    NoSolution(String),
}

/// Width of the fence states versus real coupling (infinite fence).
///
/// Below `1/π` every width grows like `(1/π)ln((1+πα)/(1-πα))`; above it the
/// trapped states follow `(1/π)ln((πα+1)/(πα-1))`. Both sides diverge
/// logarithmically at `α = 1/π`.
pub fn ideal_width(alpha: f64) -> Result<f64, AnalyticError> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(AnalyticError::OutOfDomain(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    let x = PI * alpha;
    if x == 1.0 {
        return Err(AnalyticError::Divergence {
            what: "alpha",
            value: alpha,
        });
    }
    if x < 1.0 {
        Ok(((1.0 + x) / (1.0 - x)).ln() / PI)
    } else {
        Ok(((x + 1.0) / (x - 1.0)).ln() / PI)
    }
}

/// Finite-fence estimates at the critical coupling.
#[derive(Debug, Clone, Copy)]
pub struct FiniteNEstimates {
    /// Per-state half-width envelope `(1/2π)·ln(Nπ/|ℰ|)`, valid in the
    /// spectrum centre.
    pub envelope_gamma_half: f64,
    /// Broad-state half width `(1/2π)(1 + ln 2πN)`.
    pub broad_width_at_crit: f64,
    /// Total half width `(2N+1)/π`.
    pub trace_sum_at_crit: f64,
}

pub fn finite_n_estimates(n: usize, energy: f64) -> Result<FiniteNEstimates, AnalyticError> {
    if n == 0 {
        return Err(AnalyticError::OutOfDomain("need N >= 1".into()));
    }
    let nf = n as f64;
    if energy == 0.0 {
        return Err(AnalyticError::Divergence {
            what: "energy",
            value: 0.0,
        });
    }
    if energy.abs() > nf {
        return Err(AnalyticError::OutOfDomain(format!(
            "|energy| must be <= N = {n}, got {energy}"
        )));
    }
    Ok(FiniteNEstimates {
        envelope_gamma_half: (nf * PI / energy.abs()).ln() / (2.0 * PI),
        broad_width_at_crit: (1.0 + (2.0 * PI * nf).ln()) / (2.0 * PI),
        trace_sum_at_crit: (2.0 * nf + 1.0) / PI,
    })
}

fn coth(x: f64) -> f64 {
    if x.abs() > 19.0 {
        // tanh has rounded to ±1 here; use the exponential tail
        x.signum() * (1.0 + 2.0 * (-2.0 * x.abs()).exp())
    } else {
        1.0 / x.tanh()
    }
}

/// Coupling of the centre state of the disturbed fence at imaginary
/// eigenvalue `λ = -iμ`: `α = (1/π)/(D/(πμ) + coth(πμ))`.
pub fn disturbed_alpha_of_mu(mu: f64, d: f64) -> Result<f64, AnalyticError> {
    if mu <= 0.0 || !mu.is_finite() {
        return Err(AnalyticError::OutOfDomain(format!(
            "mu must be positive, got {mu}"
        )));
    }
    let den = d / (PI * mu) + coth(PI * mu);
    if den <= 0.0 {
        return Err(AnalyticError::NoSolution(format!(
            "denominator D/(πμ) + coth(πμ) = {den} <= 0"
        )));
    }
    Ok(1.0 / (PI * den))
}

/// Which monotone branch of `μ(α)` to invert for the disturbed fence.
///
/// For `D >= 0` the map `α(μ)` is strictly increasing: only `Lower` exists.
/// For `-1 < D < 0` it rises to a maximum `α_max > 1/π` at finite `μ*` and
/// then falls back to `1/π`; `Lower` is the branch left of `μ*`, `Upper`
/// the branch right of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Lower,
    Upper,
}

/// Invert `disturbed_alpha_of_mu` by bisection on one monotone branch.
pub fn disturbed_mu_of_alpha(alpha: f64, d: f64, branch: Branch) -> Result<f64, AnalyticError> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(AnalyticError::OutOfDomain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if d <= -1.0 {
        return Err(AnalyticError::OutOfDomain(format!(
            "need D > -1, got {d}"
        )));
    }
    const MU_LO: f64 = 1e-9;
    const MU_HI: f64 = 1e9;
    let alpha_of = |mu: f64| disturbed_alpha_of_mu(mu, d).unwrap_or(f64::NAN);

    let (lo, hi, increasing) = if d >= 0.0 {
        match branch {
            Branch::Lower => (MU_LO, MU_HI, true),
            Branch::Upper => {
                return Err(AnalyticError::NoSolution(
                    "alpha(mu) is single-branched for D >= 0".into(),
                ))
            }
        }
    } else {
        // locate the maximum of alpha(mu) by ternary search on log(mu)
        let mut a = MU_LO.ln();
        let mut b = MU_HI.ln();
        for _ in 0..300 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if alpha_of(m1.exp()) < alpha_of(m2.exp()) {
                a = m1;
            } else {
                b = m2;
            }
        }
        let mu_star = (0.5 * (a + b)).exp();
        let alpha_max = alpha_of(mu_star);
        if alpha > alpha_max {
            return Err(AnalyticError::NoSolution(format!(
                "alpha = {alpha} exceeds the branch maximum {alpha_max}"
            )));
        }
        match branch {
            Branch::Lower => (MU_LO, mu_star, true),
            Branch::Upper => (mu_star, MU_HI, false),
        }
    };

    let f_lo = alpha_of(lo);
    let f_hi = alpha_of(hi);
    let bracket_ok = if increasing {
        f_lo <= alpha && alpha <= f_hi
    } else {
        f_hi <= alpha && alpha <= f_lo
    };
    if !bracket_ok {
        return Err(AnalyticError::NoSolution(format!(
            "alpha = {alpha} is outside [{:.6}, {:.6}] on this branch",
            f_lo.min(f_hi),
            f_lo.max(f_hi)
        )));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let f = alpha_of(mid);
        let go_right = if increasing { f < alpha } else { f > alpha };
        if go_right {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a) <= 1e-14 * b.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Least-squares fit of the algebraic singularity `πμ ≈ c·|ε|^{-s}` with
/// `ε = 1 - πα`, over `|ε| ∈ [1e-4, 1e-2]`.
#[derive(Debug, Clone, Copy)]
pub struct SingularityFit {
    pub exponent: f64,
    pub prefactor: f64,
}

pub fn singularity_exponent_fit(d: f64) -> Result<SingularityFit, AnalyticError> {
    if d == 0.0 {
        return Err(AnalyticError::OutOfDomain(
            "D = 0 has no algebraic singularity".into(),
        ));
    }
    let n_pts = 25;
    let mut logs_eps = Vec::with_capacity(n_pts);
    let mut logs_mu = Vec::with_capacity(n_pts);
    for i in 0..n_pts {
        let t = i as f64 / (n_pts - 1) as f64;
        let eps = 1e-4 * (1e-2f64 / 1e-4).powf(t);
        // the singular branch sits below 1/π for D > 0 and above it for D < 0
        let (alpha, branch) = if d > 0.0 {
            ((1.0 - eps) / PI, Branch::Lower)
        } else {
            ((1.0 + eps) / PI, Branch::Upper)
        };
        let mu = disturbed_mu_of_alpha(alpha, d, branch)?;
        logs_eps.push(eps.ln());
        logs_mu.push((PI * mu).ln());
    }
    // log(πμ) = log c - s·log ε
    let (slope, intercept) = least_squares(&logs_eps, &logs_mu);
    Ok(SingularityFit {
        exponent: -slope,
        prefactor: intercept.exp(),
    })
}

pub(crate) fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx = x.iter().sum::<f64>();
    let sy = y.iter().sum::<f64>();
    let sxx = x.iter().map(|v| v * v).sum::<f64>();
    let sxy = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Centre-state coupling of the diluted spectrum (`E_k = sign(k)k²`)
/// at `λ = -iμ`. Strictly increasing in `μ`, so no finite accumulation
/// point exists and the reorganization has no critical coupling.
pub fn diluted_alpha_of_mu(mu: f64) -> f64 {
    let x = PI * (2.0 * mu).sqrt();
    let ratio = if x < 1.0 {
        (x.cosh() - x.cos()) / (x.sinh() + x.sin())
    } else {
        // divide through by e^x/2 to avoid overflow
        let e = (-x).exp();
        let e2 = e * e;
        (1.0 + e2 - 2.0 * e * x.cos()) / (1.0 - e2 + 2.0 * e * x.sin())
    };
    (2.0 * mu).sqrt() / PI * ratio
}

/// Critical coupling of the power-law family `E² ~ x^t`, `v² ~ x^r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalValue {
    /// Compensated case `2(r+1) = t`: sharp transition at `(r+1)/π`.
    Finite(f64),
    /// Overcritical for every coupling (`2(r+1) > t`).
    Zero,
    /// Undercritical for every coupling (`2(r+1) < t`).
    Infinity,
}

pub fn power_law_critical(r: f64, t: f64) -> CriticalValue {
    let lhs = 2.0 * (r + 1.0);
    if lhs == t {
        CriticalValue::Finite((r + 1.0) / PI)
    } else if lhs > t {
        CriticalValue::Zero
    } else {
        CriticalValue::Infinity
    }
}

/// Broad-state width of the compensated family above its critical coupling:
/// `Γ = 2N^{r+1}/tan((r+1)/(2α))`.
pub fn compensated_broad_width(n: usize, r: f64, alpha: f64) -> Result<f64, AnalyticError> {
    let crit = (r + 1.0) / PI;
    if alpha <= crit {
        return Err(AnalyticError::OutOfDomain(format!(
            "alpha = {alpha} is not above the critical coupling {crit}"
        )));
    }
    let arg = (r + 1.0) / (2.0 * alpha);
    Ok(2.0 * (n as f64).powf(r + 1.0) / arg.tan())
}

/// Trapped-state width of the fence at complex coupling `κ = α + iβ`:
/// `Γ = (1/2π)·ln(((πα+1)² + (πβ)²)/((πα-1)² + (πβ)²))`.
///
/// Finite for every `β ≠ 0`; reduces to [`ideal_width`] on the real axis.
pub fn complex_coupling_width(alpha: f64, beta: f64) -> Result<f64, AnalyticError> {
    let a = PI * alpha;
    let b = PI * beta;
    let den = (a - 1.0) * (a - 1.0) + b * b;
    if den == 0.0 {
        return Err(AnalyticError::Divergence {
            what: "alpha",
            value: alpha,
        });
    }
    let num = (a + 1.0) * (a + 1.0) + b * b;
    Ok((num / den).ln() / (2.0 * PI))
}
