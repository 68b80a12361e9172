//! Secular function of the rank-one coupled Hamiltonian and eigenvalue
//! continuation in the coupling strength.
//!
//! For `H = diag(E) - iκ v vᵀ` the characteristic polynomial factors as
//! `P(λ) = Π_k (E_k - λ) · F(λ)` with the secular function
//!
//! ```text
//! F(λ) = 1 - iκ Σ_k v_k² / (E_k - λ)
//! ```
//!
//! so away from decoupled levels the eigenvalues are exactly the roots of
//! `F`. Each evaluation is O(M), which is what makes tracking all `M`
//! trajectories over hundreds of coupling values cheap even for `M ~ 10³`.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{CouplingParam, ModelInstance};

/// Run the per-root corrections in parallel above this state count.
const PAR_THRESHOLD: usize = 256;
/// Corrector sweeps allowed before the step size is halved.
const MAX_SWEEPS_PER_STEP: usize = 8;
/// Convergence for one corrector update, relative to `max(1, |λ|)`.
const NEWTON_TOL: f64 = 1e-13;
/// Roots closer than this (in units of the mean spacing) are a collision.
const COLLISION_TOL: f64 = 1e-6;
/// Corrections larger than this (in units of the mean spacing) reject a step.
const MAX_CORRECTION: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SecularError {
    #[error("lambda = {lambda} coincides with the coupled level E_{index} = {energy}")]
    PoleHit {
        lambda: Complex64,
        index: usize,
        energy: f64,
    },
    #[error("root refinement did not converge; last iterate {last}")]
    Diverged { last: Complex64 },
    #[error("derivative vanished near {lambda}; two roots are about to merge")]
    CollisionSuspected { lambda: Complex64 },
    #[error(
        "first grid point {alpha0} is too large to seed the trajectories; \
         need alpha <= {bound} = 0.1·(min spacing)/(max v²)"
    )]
    GridPrecondition { alpha0: f64, bound: f64 },
    #[error("grid must be strictly increasing and positive")]
    BadGrid,
    #[error("lost a root at alpha = {alpha}: labels {} and {} converged to the same value", labels.0, labels.1)]
    LostRoot { alpha: f64, labels: (usize, usize) },
    #[error("model needs at least {need} coupled levels, got {got}")]
    TooFewLevels { need: usize, got: usize },
    #[error("trajectory step size underflowed at alpha = {alpha}")]
    StepUnderflow { alpha: f64 },
}

/// Value and derivative of the secular function at one point.
#[derive(Debug, Clone, Copy)]
pub struct SecularEval {
    pub value: Complex64,
    pub derivative: Complex64,
}

/// `F(λ)` and `F'(λ)` for the given model and coupling.
pub fn secular_value(
    model: &ModelInstance,
    kappa: CouplingParam,
    lambda: Complex64,
) -> Result<SecularEval, SecularError> {
    let (s, sp) = resolvent_sums_checked(model, lambda)?;
    let ik = Complex64::i() * kappa.kappa();
    Ok(SecularEval {
        value: 1.0 - ik * s,
        derivative: -ik * sp,
    })
}

/// `Σ v²/(E-λ)` and `Σ v²/(E-λ)²`, failing on an exact pole hit.
fn resolvent_sums_checked(
    model: &ModelInstance,
    lambda: Complex64,
) -> Result<(Complex64, Complex64), SecularError> {
    let mut s = Complex64::new(0.0, 0.0);
    let mut sp = Complex64::new(0.0, 0.0);
    for (i, (&e, &v)) in model
        .energies()
        .iter()
        .zip(model.couplings())
        .enumerate()
    {
        if v == 0.0 {
            continue;
        }
        let d = e - lambda;
        if d.norm_sqr() == 0.0 {
            return Err(SecularError::PoleHit {
                lambda,
                index: i,
                energy: e,
            });
        }
        let inv = d.finv();
        let w = v * v;
        s += w * inv;
        sp += w * inv * inv;
    }
    Ok((s, sp))
}

fn resolvent_sums(energies: &[f64], weights: &[f64], lambda: Complex64) -> (Complex64, Complex64) {
    let mut s = Complex64::new(0.0, 0.0);
    let mut sp = Complex64::new(0.0, 0.0);
    for (&e, &w) in energies.iter().zip(weights) {
        let inv = (e - lambda).finv();
        s += w * inv;
        sp += w * inv * inv;
    }
    (s, sp)
}

fn resolvent_sums3(
    energies: &[f64],
    weights: &[f64],
    lambda: Complex64,
) -> (Complex64, Complex64, Complex64) {
    let mut s = Complex64::new(0.0, 0.0);
    let mut sp = Complex64::new(0.0, 0.0);
    let mut spp = Complex64::new(0.0, 0.0);
    for (&e, &w) in energies.iter().zip(weights) {
        let inv = (e - lambda).finv();
        let w1 = w * inv;
        s += w1;
        sp += w1 * inv;
        spp += w1 * inv * inv;
    }
    (s, sp, spp)
}

/// `log|P(λ)|` and `arg P(λ)` of the characteristic polynomial, evaluated in
/// the log domain so products over thousands of levels cannot overflow.
///
/// A root returns `(-∞, 0)`.
pub fn charpoly_logeval(
    model: &ModelInstance,
    kappa: CouplingParam,
    lambda: Complex64,
) -> (f64, f64) {
    // exact pole hit: P(E_m) = -iκ v_m² Π_{j≠m}(E_j - E_m)
    if let Some(m) = model
        .energies()
        .iter()
        .zip(model.couplings())
        .position(|(&e, &v)| v != 0.0 && (e - lambda).norm_sqr() == 0.0)
    {
        let factor = -Complex64::i() * kappa.kappa() * model.couplings()[m] * model.couplings()[m];
        if factor.norm_sqr() == 0.0 {
            return (f64::NEG_INFINITY, 0.0);
        }
        let mut log_mag = factor.norm().ln();
        let mut phase = factor.arg();
        for (j, &e) in model.energies().iter().enumerate() {
            if j == m {
                continue;
            }
            let d = e - lambda;
            log_mag += d.norm().ln();
            phase += d.arg();
        }
        return (log_mag, wrap_phase(phase));
    }

    let mut log_mag = 0.0;
    let mut phase = 0.0;
    for &e in model.energies() {
        let d = e - lambda;
        if d.norm_sqr() == 0.0 {
            // decoupled level: P has an exact root here
            return (f64::NEG_INFINITY, 0.0);
        }
        log_mag += d.norm().ln();
        phase += d.arg();
    }
    let (s, _) = resolvent_sums_checked(model, lambda).expect("pole case handled above");
    let f = 1.0 - Complex64::i() * kappa.kappa() * s;
    if f.norm_sqr() == 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    (log_mag + f.norm().ln(), wrap_phase(phase + f.arg()))
}

fn wrap_phase(p: f64) -> f64 {
    let mut x = p.rem_euclid(2.0 * std::f64::consts::PI);
    if x > std::f64::consts::PI {
        x -= 2.0 * std::f64::consts::PI;
    }
    x
}

/// Newton refinement of a single root of `F`.
///
/// Converges quadratically from good seeds; a vanishing derivative or a
/// step that runs away signals a nearly-degenerate pair.
pub fn refine_root(
    model: &ModelInstance,
    kappa: CouplingParam,
    lambda0: Complex64,
    tol: f64,
) -> Result<Complex64, SecularError> {
    let spacing = model.mean_spacing();
    let mut lam = lambda0;
    for _ in 0..60 {
        let eval = secular_value(model, kappa, lam)?;
        if eval.derivative.norm_sqr() == 0.0 {
            return Err(SecularError::CollisionSuspected { lambda: lam });
        }
        let step = -eval.value / eval.derivative;
        if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 5.0 * spacing {
            return Err(SecularError::CollisionSuspected { lambda: lam });
        }
        lam += step;
        if step.norm() <= tol * lam.norm().max(1.0) {
            return Ok(lam);
        }
    }
    Err(SecularError::Diverged { last: lam })
}

/// One collision between two tracked roots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub alpha: f64,
    /// Storage indices of the colliding states.
    pub labels: (usize, usize),
}

/// All `M` eigenvalue trajectories over an increasing coupling grid.
///
/// `states[g][k]` is the eigenvalue of the state with storage label `k` at
/// grid point `g`; labels are persistent along the sweep.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub alpha_grid: Vec<f64>,
    pub phi: f64,
    states: Vec<Vec<Complex64>>,
    pub collision_events: Vec<CollisionEvent>,
}

impl TrajectorySet {
    pub fn state_count(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn grid_len(&self) -> usize {
        self.alpha_grid.len()
    }

    pub fn lambda(&self, grid: usize, state: usize) -> Complex64 {
        self.states[grid][state]
    }

    pub fn lambdas_at(&self, grid: usize) -> &[Complex64] {
        &self.states[grid]
    }

    /// Half width `Γ/2 = -Im λ` of one state at one grid point.
    pub fn gamma_half(&self, grid: usize, state: usize) -> f64 {
        -self.states[grid][state].im
    }

    /// State with the largest width at the last grid point, plus the runner-up
    /// ratio used to flag ambiguous identifications.
    pub fn final_broadest(&self) -> (usize, f64) {
        let last = self.states.last().expect("non-empty trajectory");
        let mut best = 0;
        let mut second = f64::NEG_INFINITY;
        for (i, l) in last.iter().enumerate() {
            if -l.im > -last[best].im {
                second = -last[best].im;
                best = i;
            } else if -l.im > second {
                second = -l.im;
            }
        }
        let ratio = if -last[best].im > 0.0 {
            second / -last[best].im
        } else {
            0.0
        };
        (best, ratio)
    }
}

/// Limit position and `1/α` width coefficient of one trapped state.
#[derive(Debug, Clone, Copy)]
pub struct TrappedAsymptote {
    /// Real limit position `ℰ_k` (a zero of `Σ v²/(E - ℰ)`).
    pub position: f64,
    /// Width coefficient: `λ_k(α) → ℰ_k - i g_k/α`.
    pub g: f64,
}

/// Strong-coupling limits of the trapped states.
///
/// Between each pair of adjacent coupled levels the weighted resolvent sum
/// `Σ v²/(E - ℰ)` crosses zero exactly once; that zero is the limit position
/// and the width coefficient follows from the residue of the characteristic
/// polynomial there, evaluated in the log domain:
///
/// ```text
/// g_k = -Π_j (E_j - ℰ_k) / (Σ_l v_l² · Π_{j≠k} (ℰ_j - ℰ_k))
/// ```
pub fn trapped_asymptotes(model: &ModelInstance) -> Result<Vec<TrappedAsymptote>, SecularError> {
    let active: Vec<(f64, f64)> = model
        .energies()
        .iter()
        .zip(model.couplings())
        .filter(|(_, &v)| v != 0.0)
        .map(|(&e, &v)| (e, v * v))
        .collect();
    if active.len() < 2 {
        return Err(SecularError::TooFewLevels {
            need: 2,
            got: active.len(),
        });
    }
    let sum_at = |x: f64| -> f64 { active.iter().map(|&(e, w)| w / (e - x)).sum() };

    let mut positions = Vec::with_capacity(active.len() - 1);
    for w in active.windows(2) {
        let (el, er) = (w[0].0, w[1].0);
        let gap = er - el;
        // S runs from -∞ at the left pole to +∞ at the right pole
        let mut eps = 1e-9 * gap;
        let (mut lo, mut hi) = (el + eps, er - eps);
        while sum_at(lo) >= 0.0 && eps > f64::EPSILON * gap {
            eps *= 0.1;
            lo = el + eps;
        }
        let mut eps_r = 1e-9 * gap;
        while sum_at(hi) <= 0.0 && eps_r > f64::EPSILON * gap {
            eps_r *= 0.1;
            hi = er - eps_r;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sum_at(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * gap.max(1.0) {
                break;
            }
        }
        positions.push(0.5 * (lo + hi));
    }

    let weight_sum: f64 = active.iter().map(|&(_, w)| w).sum();
    let mut out = Vec::with_capacity(positions.len());
    for (k, &pos) in positions.iter().enumerate() {
        let mut log_mag = -weight_sum.ln();
        let mut sign = -1.0f64;
        for &e in model.energies() {
            let d = e - pos;
            log_mag += d.abs().ln();
            if d < 0.0 {
                sign = -sign;
            }
        }
        for (j, &pj) in positions.iter().enumerate() {
            if j == k {
                continue;
            }
            let d = pj - pos;
            log_mag -= d.abs().ln();
            if d < 0.0 {
                sign = -sign;
            }
        }
        out.push(TrappedAsymptote {
            position: pos,
            g: sign * log_mag.exp(),
        });
    }
    Ok(out)
}

/// Follow every eigenvalue from the first grid coupling to the last along
/// the ray `κ = α·e^{iφ}`.
///
/// Each grid interval is covered by an adaptive predictor/corrector march:
/// an explicit Euler step of `dλ/dα = -S/(α S')` predicts, simultaneous
/// Newton with pairwise deflation corrects, and the sub-step is halved
/// whenever the corrector works too hard or jumps too far. Decoupled states
/// are emitted at exactly `λ = E_k`. The first grid coupling must satisfy
/// `α₁ ≤ 0.1·(min spacing)/(max v²)` so the linear seeds
/// `λ_k ≈ E_k - iκ v_k²` converge.
pub fn track_trajectories(
    model: &ModelInstance,
    alpha_grid: &[f64],
    phi: f64,
) -> Result<TrajectorySet, SecularError> {
    if alpha_grid.len() < 2
        || alpha_grid[0] <= 0.0
        || alpha_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(SecularError::BadGrid);
    }
    let bound = 0.1 * model.min_spacing() / model.max_coupling_sq();
    if alpha_grid[0] > bound {
        return Err(SecularError::GridPrecondition {
            alpha0: alpha_grid[0],
            bound,
        });
    }

    let tracker = Tracker::new(model, phi);
    let mut roots = tracker.seed(alpha_grid[0])?;
    let mut out = TrajectorySet {
        alpha_grid: alpha_grid.to_vec(),
        phi,
        states: Vec::with_capacity(alpha_grid.len()),
        collision_events: Vec::new(),
    };
    let mut log = CollisionLog::new(tracker.active.len());
    tracker.record(alpha_grid[0], &roots, &mut out, &mut log)?;
    for w in alpha_grid.windows(2) {
        tracker.march(w[0], w[1], &mut roots, &mut log)?;
        tracker.record(w[1], &roots, &mut out, &mut log)?;
    }
    out.collision_events = log.events;
    Ok(out)
}

/// Eigenvalues of `H` at a single coupling, by ramping the tracker up from
/// a seedable coupling. Returns one eigenvalue per state, in storage order.
pub fn solve_at(
    model: &ModelInstance,
    kappa: CouplingParam,
) -> Result<Vec<Complex64>, SecularError> {
    let target = kappa.magnitude();
    if target <= 0.0 {
        // decoupled limit: bare spectrum
        return Ok(model.energies().iter().map(|&e| e.into()).collect());
    }
    let phi = kappa.phi();
    let bound = 0.1 * model.min_spacing() / model.max_coupling_sq();
    let tracker = Tracker::new(model, phi);
    let start = target.min(0.9 * bound);
    let mut roots = tracker.seed(start)?;
    if start < target {
        // geometric ramp, ~12 points per decade
        let decades = (target / start).log10();
        let steps = (12.0 * decades).ceil().max(1.0) as usize;
        let ratio = (target / start).powf(1.0 / steps as f64);
        let mut a = start;
        let mut log = CollisionLog::new(tracker.active.len());
        for i in 0..steps {
            let b = if i + 1 == steps { target } else { a * ratio };
            tracker.march(a, b, &mut roots, &mut log)?;
            a = b;
        }
    }
    Ok(tracker.assemble(&roots))
}

struct CollisionLog {
    events: Vec<CollisionEvent>,
    /// Hysteresis flag per active root: set while it takes part in a
    /// collision, cleared once it has clearly separated again.
    engaged: Vec<bool>,
}

impl CollisionLog {
    fn new(n: usize) -> Self {
        Self {
            events: Vec::new(),
            engaged: vec![false; n],
        }
    }

    fn note_pair(&mut self, alpha: f64, i: usize, j: usize, labels: (usize, usize)) {
        if !(self.engaged[i] && self.engaged[j]) {
            self.events.push(CollisionEvent { alpha, labels });
        }
        self.engaged[i] = true;
        self.engaged[j] = true;
    }
}

struct Tracker<'m> {
    model: &'m ModelInstance,
    phi: f64,
    /// Storage indices of coupled states.
    active: Vec<usize>,
    /// Energies and squared couplings of the active states.
    energies: Vec<f64>,
    weights: Vec<f64>,
    weight_sum: f64,
    spacing: f64,
}

struct SweepOutcome {
    converged: bool,
    max_move: f64,
    rescued: Vec<(usize, usize)>,
}

impl<'m> Tracker<'m> {
    fn new(model: &'m ModelInstance, phi: f64) -> Self {
        let active: Vec<usize> = model
            .couplings()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let energies: Vec<f64> = active.iter().map(|&i| model.energies()[i]).collect();
        let weights: Vec<f64> = active
            .iter()
            .map(|&i| model.couplings()[i] * model.couplings()[i])
            .collect();
        let weight_sum = weights.iter().sum();
        Self {
            model,
            phi,
            active,
            energies,
            weights,
            weight_sum,
            spacing: model.mean_spacing(),
        }
    }

    fn kappa(&self, alpha: f64) -> Complex64 {
        Complex64::from_polar(alpha, self.phi)
    }

    fn seed(&self, alpha0: f64) -> Result<Vec<Complex64>, SecularError> {
        let k = self.kappa(alpha0);
        let mut roots: Vec<Complex64> = self
            .energies
            .iter()
            .zip(&self.weights)
            .map(|(&e, &w)| e - Complex64::i() * k * w)
            .collect();
        let outcome = self.correct(alpha0, &mut roots);
        if !outcome.converged {
            return Err(SecularError::Diverged {
                last: roots.first().copied().unwrap_or_default(),
            });
        }
        Ok(roots)
    }

    /// March all roots from `alpha_from` to `alpha_to` with adaptive substeps.
    fn march(
        &self,
        alpha_from: f64,
        alpha_to: f64,
        roots: &mut Vec<Complex64>,
        log: &mut CollisionLog,
    ) -> Result<(), SecularError> {
        let mut a = alpha_from;
        let mut h = alpha_to - alpha_from;
        let mut reseeded_broad = false;
        while a < alpha_to {
            let target = (a + h).min(alpha_to);
            let mut trial: Vec<Complex64> = self.predict(a, target, roots);
            let outcome = self.correct(target, &mut trial);
            let ok = outcome.converged && outcome.max_move <= MAX_CORRECTION * self.spacing;
            if ok {
                for &(i, j) in &outcome.rescued {
                    log.note_pair(target, i, j, (self.active[i], self.active[j]));
                }
                *roots = trial;
                a = target;
                h *= 1.5;
            } else {
                h *= 0.5;
                if h < 1e-9 * alpha_to.max(1.0) && std::env::var_os("RT_TRACE").is_some() {
                    eprintln!(
                        "[march] target={target:.12} conv={} move={:.3e} rescued={:?}",
                        outcome.converged, outcome.max_move, outcome.rescued
                    );
                    let ik = Complex64::i() * self.kappa(target);
                    for (i, &l) in trial.iter().enumerate() {
                        let d = (l - roots[i]).norm();
                        let (su, _) = resolvent_sums(&self.energies, &self.weights, l);
                        let f = (1.0 - ik * su).norm();
                        if f > 1e-10 || d > 0.01 {
                            eprintln!(
                                "   [{i}] {:+.6e}{:+.6e}i  d={:.2e} |F|={:.2e}",
                                l.re, l.im, d, f
                            );
                        }
                    }
                }
                if h < 1e-12 * alpha_to.max(1.0) {
                    if !reseeded_broad {
                        // re-seed the broad candidate from its strong-coupling
                        // asymptote λ ≈ -iκ Σv² and try once more
                        reseeded_broad = true;
                        let broad = roots
                            .iter()
                            .enumerate()
                            .max_by(|x, y| (-x.1.im).total_cmp(&(-y.1.im)))
                            .map(|(i, _)| i)
                            .unwrap();
                        roots[broad] = -Complex64::i() * self.kappa(a) * self.weight_sum;
                        let outcome = self.correct(a, roots);
                        if outcome.converged {
                            h = alpha_to - a;
                            continue;
                        }
                    }
                    return Err(SecularError::StepUnderflow { alpha: a });
                }
            }
        }
        Ok(())
    }

    fn predict(&self, alpha: f64, target: f64, roots: &[Complex64]) -> Vec<Complex64> {
        let h = target - alpha;
        roots
            .iter()
            .map(|&lam| {
                let (s, sp) = resolvent_sums(&self.energies, &self.weights, lam);
                let denom = alpha * sp;
                if denom.norm_sqr() == 0.0 {
                    lam
                } else {
                    lam - h * s / denom
                }
            })
            .collect()
    }

    /// Simultaneous Newton sweeps with pairwise deflation (Jacobi style, so
    /// results do not depend on scheduling). Roots that stall because a pair
    /// is about to coalesce are rescued by resolving the pair through the
    /// local critical point of `F`. `max_move` reports how far the corrector
    /// dragged the roots from their seeded positions.
    fn correct(&self, alpha: f64, roots: &mut Vec<Complex64>) -> SweepOutcome {
        let ik = Complex64::i() * self.kappa(alpha);
        let start: Vec<Complex64> = roots.clone();
        let mut steps = vec![f64::INFINITY; roots.len()];
        for _sweep in 0..MAX_SWEEPS_PER_STEP {
            let snapshot: Vec<Complex64> = roots.clone();
            let update = |(i, &lam): (usize, &Complex64)| -> (Complex64, f64) {
                let (s, sp) = resolvent_sums(&self.energies, &self.weights, lam);
                let f = 1.0 - ik * s;
                let fp = -ik * sp;
                // P'/P for the deflated polynomial with only coupled levels
                let pole_sum: Complex64 = self
                    .energies
                    .iter()
                    .map(|&e| (lam - e).finv())
                    .sum();
                let newton = fp / f + pole_sum;
                let aberth: Complex64 = snapshot
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &mu)| {
                        let d = lam - mu;
                        if d.norm_sqr() == 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            d.finv()
                        }
                    })
                    .sum();
                let denom = newton - aberth;
                if denom.norm_sqr() == 0.0 || !denom.re.is_finite() || !denom.im.is_finite() {
                    return (lam, 0.0);
                }
                let mut step = -denom.finv();
                let cap = 0.5 * self.spacing;
                if step.norm() > cap {
                    step *= cap / step.norm();
                }
                (lam + step, step.norm())
            };
            let results: Vec<(Complex64, f64)> = if roots.len() >= PAR_THRESHOLD {
                roots.par_iter().enumerate().map(update).collect()
            } else {
                roots.iter().enumerate().map(update).collect()
            };
            let mut max_step = 0.0f64;
            for (i, (lam, step)) in results.into_iter().enumerate() {
                roots[i] = lam;
                steps[i] = step / lam.norm().max(1.0);
                max_step = max_step.max(steps[i]);
            }
            if max_step <= NEWTON_TOL {
                break;
            }
        }

        let mut rescued = Vec::new();
        if steps.iter().any(|&s| s > NEWTON_TOL) {
            rescued = self.rescue_pairs(ik, roots, &steps);
        }
        // a root is accepted either by step size or by meeting the residual
        // bound |F| <= 1e-10 directly (near-coalescent pairs perturb their
        // neighbours' deflation terms without moving them off their roots)
        let converged = roots.iter().enumerate().all(|(i, &lam)| {
            if steps[i] <= NEWTON_TOL {
                true
            } else {
                let (s, _) = resolvent_sums(&self.energies, &self.weights, lam);
                (1.0 - ik * s).norm() <= 1e-10
            }
        });
        let max_move = roots
            .iter()
            .zip(&start)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        SweepOutcome {
            converged,
            max_move,
            rescued,
        }
    }

    /// Resolve stalled near-degenerate pairs through the critical point:
    /// Newton on `F' = 0` locates the branch centre `c`, the two-term
    /// expansion `λ± = c ± √(-2F(c)/F''(c))` splits the pair, and plain
    /// per-root Newton polishes both sides. Plain Newton matters here: the
    /// deflated sweeps preserve a mirror pairing that cannot split along
    /// the imaginary axis. Labels keep continuity by proximity.
    fn rescue_pairs(
        &self,
        ik: Complex64,
        roots: &mut [Complex64],
        steps: &[f64],
    ) -> Vec<(usize, usize)> {
        let mut rescued = Vec::new();
        let stalled: Vec<usize> = (0..roots.len())
            .filter(|&i| steps[i] > NEWTON_TOL)
            .collect();
        let radius = 0.5 * self.spacing;
        let mut used = vec![false; stalled.len()];
        for a in 0..stalled.len() {
            if used[a] {
                continue;
            }
            let i = stalled[a];
            let mut best: Option<(usize, f64)> = None;
            for (b, &j) in stalled.iter().enumerate().skip(a + 1) {
                if used[b] {
                    continue;
                }
                let d = (roots[i] - roots[j]).norm();
                if d < radius && best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((b, d));
                }
            }
            let Some((b, _)) = best else { continue };
            let j = stalled[b];
            let Some((p, q)) = self.solve_pair_cluster(ik, roots, i, j) else {
                continue;
            };
            let direct = (roots[i] - p).norm() + (roots[j] - q).norm();
            let crossed = (roots[i] - q).norm() + (roots[j] - p).norm();
            if direct <= crossed {
                roots[i] = p;
                roots[j] = q;
            } else {
                roots[i] = q;
                roots[j] = p;
            }
            rescued.push((i, j));
            used[a] = true;
            used[b] = true;
        }
        rescued
    }

    /// Solve a two-root cluster exactly from the logarithmic derivative.
    ///
    /// `P'/P = Σ_k 1/(λ-root_k)` over all coupled roots; subtracting the
    /// converged roots leaves `W(λ) = 1/(λ-r₁) + 1/(λ-r₂)`. Matching `W`
    /// and `W'` at the cluster midpoint fixes the pair's elementary
    /// symmetric functions, hence the pair itself, in closed form.
    fn solve_pair_cluster(
        &self,
        ik: Complex64,
        roots: &[Complex64],
        i: usize,
        j: usize,
    ) -> Option<(Complex64, Complex64)> {
        let mut z = 0.5 * (roots[i] + roots[j]);
        let mut pair = (z, z);
        for round in 0..4 {
            let (s, sp, spp) = resolvent_sums3(&self.energies, &self.weights, z);
            let f = 1.0 - ik * s;
            if f.norm_sqr() == 0.0 {
                z += 1e-12 * self.spacing;
                continue;
            }
            let fp = -ik * sp;
            let fpp = -2.0 * ik * spp;
            let lf = fp / f;
            let mut w = lf;
            let mut wp = fpp / f - lf * lf;
            for &e in &self.energies {
                let inv = (z - e).finv();
                w += inv;
                wp -= inv * inv;
            }
            for (k, &mu) in roots.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                let d = z - mu;
                if d.norm_sqr() == 0.0 {
                    return None;
                }
                let inv = d.finv();
                w -= inv;
                wp += inv * inv;
            }
            let denom = wp + w * w;
            if denom.norm_sqr() == 0.0 {
                return None;
            }
            let p_sym = 2.0 * denom.finv();
            let s_sym = w * p_sym;
            let disc = (s_sym * s_sym - 4.0 * p_sym).sqrt();
            let u = 0.5 * (s_sym + disc);
            let v = 0.5 * (s_sym - disc);
            pair = (z - u, z - v);
            let mid = 0.5 * (pair.0 + pair.1);
            if (mid - z).norm() <= 1e-14 * z.norm().max(1.0) {
                break;
            }
            if round < 3 {
                z = mid;
            }
        }
        // polish independently once the pair is safely separated
        if (pair.0 - pair.1).norm() > 1e-4 * self.spacing {
            if let Some(p) = self.newton_polish(ik, pair.0) {
                pair.0 = p;
            }
            if let Some(q) = self.newton_polish(ik, pair.1) {
                pair.1 = q;
            }
        }
        Some(pair)
    }

    fn newton_polish(&self, ik: Complex64, mut lam: Complex64) -> Option<Complex64> {
        for _ in 0..40 {
            let (s, sp) = resolvent_sums(&self.energies, &self.weights, lam);
            let f = 1.0 - ik * s;
            let fp = -ik * sp;
            if fp.norm_sqr() == 0.0 {
                return None;
            }
            let step = -f / fp;
            if !step.re.is_finite() || !step.im.is_finite() || step.norm() > self.spacing {
                return None;
            }
            lam += step;
            if step.norm() <= 1e-14 * lam.norm().max(1.0) {
                return Some(lam);
            }
        }
        None
    }

    /// Merge active roots and decoupled levels back into storage order.
    fn assemble(&self, roots: &[Complex64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = self
            .model
            .energies()
            .iter()
            .map(|&e| Complex64::from(e))
            .collect();
        for (slot, &root) in self.active.iter().zip(roots) {
            out[*slot] = root;
        }
        out
    }

    fn record(
        &self,
        alpha: f64,
        roots: &[Complex64],
        out: &mut TrajectorySet,
        log: &mut CollisionLog,
    ) -> Result<(), SecularError> {
        // collision bookkeeping on the active roots: proximity events are
        // logged on their rising edge, and hysteresis flags set during the
        // march are released once a root has clearly separated again
        let tol = COLLISION_TOL * self.spacing;
        let release = 0.02 * self.spacing;
        let mut nearest = vec![f64::INFINITY; roots.len()];
        for i in 0..roots.len() {
            for j in (i + 1)..roots.len() {
                let d = (roots[i] - roots[j]).norm();
                nearest[i] = nearest[i].min(d);
                nearest[j] = nearest[j].min(d);
                if d < tol {
                    log.note_pair(alpha, i, j, (self.active[i], self.active[j]));
                    if d < 1e-9 * tol {
                        return Err(SecularError::LostRoot {
                            alpha,
                            labels: (self.active[i], self.active[j]),
                        });
                    }
                }
            }
        }
        for i in 0..roots.len() {
            if nearest[i] > release {
                log.engaged[i] = false;
            }
        }

        // trace identity as a cheap corruption tripwire
        let sum: Complex64 = roots.iter().sum();
        let expect = Complex64::from(self.energies.iter().sum::<f64>())
            - Complex64::i() * self.kappa(alpha) * self.weight_sum;
        let scale = expect.norm().max(1.0);
        if (sum - expect).norm() > 1e-6 * scale {
            return Err(SecularError::LostRoot {
                alpha,
                labels: (0, 0),
            });
        }

        out.states.push(self.assemble(roots));
        Ok(())
    }
}
