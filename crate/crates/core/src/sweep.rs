//! Coupling sweeps, order-parameter diagnostics and critical-point
//! estimation.
//!
//! A sweep tracks all trajectories, identifies the broad state (largest
//! final width, traced back by label), and collects per-coupling
//! observables. Two independent estimators locate the critical coupling:
//! the interior maximum of `B(α)` and the change point of a two-segment
//! linear fit to the order parameter `ω = Γ_broad/(2M)`.

use rayon::prelude::*;
use thiserror::Error;

use crate::eigens::{self, EigenError, EigenSolution};
use crate::model::{CouplingParam, ModelInstance};
use crate::secular::{self, SecularError, TrajectorySet};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Secular(#[from] SecularError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("invalid sweep input: {0}")]
    InvalidInput(String),
}

/// How much per-state eigenvector work a sweep performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableMode {
    /// Norms and participation numbers for every state (needed for `B`).
    Full,
    /// Participation number of the broad state only; `O(M)` per grid point.
    BroadOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub observables: ObservableMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            observables: ObservableMode::Full,
        }
    }
}

/// Verdict of the transition diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionVerdict {
    Transition,
    NoTransition,
}

/// Estimates attached to a finished sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepEstimates {
    /// Combined critical-coupling estimate (mean of the two estimators).
    pub alpha_crit_hat: Option<f64>,
    /// Location of the interior `B` maximum (parabolically refined).
    pub alpha_b_peak: Option<f64>,
    pub b_peak_value: Option<f64>,
    /// Change point of the two-segment fit to `ω(α)`.
    pub alpha_changepoint: Option<f64>,
    /// Absolute discrepancy between the two estimators.
    pub confidence: Option<f64>,
    pub slope_below: Option<f64>,
    pub slope_above: Option<f64>,
    /// RMS residual of the local two-segment fit around the change point.
    pub fit_residual_rms: Option<f64>,
}

/// One finished coupling sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub trajectories: TrajectorySet,
    /// Mean bi-orthogonality norm per grid point (Full mode only).
    pub b_mean: Option<Vec<f64>>,
    /// Per-state participation numbers per grid point (Full mode only).
    pub npc: Option<Vec<Vec<f64>>>,
    /// Per-state norms per grid point (Full mode only).
    pub norms: Option<Vec<Vec<f64>>>,
    /// Participation number of the broad state per grid point.
    pub broad_npc: Vec<f64>,
    /// Order parameter `ω = Γ_broad/(2M)` per grid point.
    pub omega: Vec<f64>,
    /// Storage label of the broad state.
    pub broad_label: usize,
    /// Set when the runner-up final width is within 1% of the maximum.
    pub broad_ambiguous: bool,
}

impl SweepResult {
    pub fn alpha_grid(&self) -> &[f64] {
        &self.trajectories.alpha_grid
    }
}

/// Grid-point B-peak threshold separating a transition from smooth
/// reorganization: without a transition `B` stays close to 1.
const B_PEAK_MIN: f64 = 1.15;
/// Window factor of the local change-point refit, matching the transition
/// window `[0.8·α_c, 1.25·α_c]` used by the default grid.
const HINGE_WINDOW_FACTOR: f64 = 1.25;

/// Three-zone coupling grid: geometric approach, linear walk (step 0.005)
/// through the transition window around `crit_guess`, geometric tail.
pub fn default_alpha_grid(start: f64, end: f64, steps: usize, crit_guess: f64) -> Vec<f64> {
    assert!(start > 0.0 && end > start && steps >= 2);
    let lo = 0.8 * crit_guess;
    let hi = 1.25 * crit_guess;
    if !(start < lo && hi < end) {
        // transition window out of range: plain geometric grid
        return geometric(start, end, steps);
    }
    let step = 0.005f64.max((hi - lo) / (steps as f64 * 0.45));
    let mid: Vec<f64> = {
        let n = ((hi - lo) / step).floor() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    };
    let n_below = (steps / 5).max(2);
    let n_above = (2 * steps / 5).max(2);
    let mut grid = Vec::with_capacity(n_below + mid.len() + n_above);
    let below = geometric(start, lo, n_below + 1);
    grid.extend_from_slice(&below[..below.len() - 1]);
    grid.extend_from_slice(&mid);
    let above = geometric(*mid.last().unwrap(), end, n_above + 1);
    grid.extend_from_slice(&above[1..]);
    grid
}

fn geometric(start: f64, end: f64, steps: usize) -> Vec<f64> {
    let n = steps.max(2);
    let ratio = (end / start).powf(1.0 / (n - 1) as f64);
    let mut out: Vec<f64> = (0..n).map(|i| start * ratio.powi(i as i32)).collect();
    out[n - 1] = end;
    out
}

/// Track the spectrum over `alpha_grid` (ray angle `phi`) and assemble the
/// sweep observables.
///
/// If the first grid coupling is too large to seed the tracker, a short
/// geometric ramp is prepended; the returned grid includes those points.
pub fn run_sweep(
    model: &ModelInstance,
    alpha_grid: &[f64],
    phi: f64,
    options: SweepOptions,
) -> Result<SweepResult, SweepError> {
    if alpha_grid.len() < 2 {
        return Err(SweepError::InvalidInput(
            "need at least two grid points".into(),
        ));
    }
    let bound = 0.1 * model.min_spacing() / model.max_coupling_sq();
    let grid: Vec<f64> = if alpha_grid[0] > bound {
        let start = 0.5 * bound;
        let mut g = geometric(start, alpha_grid[0], 9);
        g.pop();
        g.extend_from_slice(alpha_grid);
        g
    } else {
        alpha_grid.to_vec()
    };

    let trajectories = secular::track_trajectories(model, &grid, phi)?;
    let (broad_label, runner_up_ratio) = trajectories.final_broadest();
    let broad_ambiguous = runner_up_ratio > 0.99;
    let m = model.len() as f64;
    let omega: Vec<f64> = (0..grid.len())
        .map(|g| trajectories.gamma_half(g, broad_label) / m)
        .collect();

    let mut result = SweepResult {
        b_mean: None,
        npc: None,
        norms: None,
        broad_npc: Vec::new(),
        omega,
        broad_label,
        broad_ambiguous,
        trajectories,
    };

    match options.observables {
        ObservableMode::Full => {
            let per_grid: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..grid.len())
                .into_par_iter()
                .map(|g| {
                    let kappa = CouplingParam::from_polar(grid[g], phi);
                    let sols: Result<Vec<EigenSolution>, EigenError> = result
                        .trajectories
                        .lambdas_at(g)
                        .iter()
                        .map(|&l| eigens::eigenvector(model, kappa, l))
                        .collect();
                    sols.map(|sols| {
                        let obs = eigens::observables(&sols);
                        (obs.b_mean, obs.norms, obs.npcs)
                    })
                })
                .collect::<Result<_, _>>()?;
            let mut b = Vec::with_capacity(grid.len());
            let mut norms = Vec::with_capacity(grid.len());
            let mut npcs = Vec::with_capacity(grid.len());
            for (bv, nv, pv) in per_grid {
                b.push(bv);
                result.broad_npc.push(pv[broad_label]);
                norms.push(nv);
                npcs.push(pv);
            }
            result.b_mean = Some(b);
            result.norms = Some(norms);
            result.npc = Some(npcs);
        }
        ObservableMode::BroadOnly => {
            let npcs: Vec<f64> = (0..grid.len())
                .into_par_iter()
                .map(|g| {
                    let kappa = CouplingParam::from_polar(grid[g], phi);
                    eigens::eigenvector(model, kappa, result.trajectories.lambda(g, broad_label))
                        .map(|s| s.npc)
                })
                .collect::<Result<_, _>>()?;
            result.broad_npc = npcs;
        }
    }
    Ok(result)
}

/// Locate the critical coupling from a full-observable sweep.
///
/// Returns estimates from the interior `B`-maximum and from the change
/// point of a continuous two-segment least-squares fit to `ω(α)` (global
/// scan refined on a local window). When `B` has no interior maximum above
/// [`B_PEAK_MIN`] the verdict is [`TransitionVerdict::NoTransition`] and no
/// estimate is produced.
pub fn estimate_critical(sweep: &SweepResult) -> Result<(SweepEstimates, TransitionVerdict), SweepError> {
    let b = sweep.b_mean.as_ref().ok_or_else(|| {
        SweepError::InvalidInput("estimate_critical needs a Full-observable sweep".into())
    })?;
    let grid = sweep.alpha_grid();
    let n = grid.len();
    if n < 8 {
        return Err(SweepError::InvalidInput("grid too short".into()));
    }

    let mut estimates = SweepEstimates::default();

    // estimator 1: interior maximum of B
    let (i_max, b_max) = b
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let interior = i_max > 0 && i_max < n - 1;
    if !interior || b_max < B_PEAK_MIN {
        return Ok((estimates, TransitionVerdict::NoTransition));
    }
    let alpha_b = parabolic_peak(
        grid[i_max - 1],
        grid[i_max],
        grid[i_max + 1],
        b[i_max - 1],
        b[i_max],
        b[i_max + 1],
    );
    estimates.alpha_b_peak = Some(alpha_b);
    estimates.b_peak_value = Some(b_max);

    // estimator 2: change point of the two-segment fit to ω(α)
    let (mut cp, _, _) = hinge_fit_scan(grid, &sweep.omega, 2, n - 2);
    for _ in 0..60 {
        let (lo, hi) = window_indices(grid, cp);
        if hi - lo < 8 {
            break;
        }
        let (next, _, _) = hinge_fit_scan(&grid[lo..hi], &sweep.omega[lo..hi], 2, hi - lo - 2);
        if next == cp {
            break;
        }
        cp = next;
    }
    let (lo, hi) = window_indices(grid, cp);
    let (_, coef, sse) = hinge_fit_scan(&grid[lo..hi], &sweep.omega[lo..hi], 2, hi - lo - 2);
    estimates.alpha_changepoint = Some(cp);
    estimates.fit_residual_rms = Some((sse / (hi - lo) as f64).sqrt());

    // slopes over declared windows clear of the kink; the lower window stays
    // at half the change point because the width law already bends upward
    // as 1/(1-(πα)²) on the approach
    let below_end = 0.5 * cp;
    let above_start = 1.25 * cp;
    estimates.slope_below = window_slope(grid, &sweep.omega, grid[0], below_end);
    estimates.slope_above = window_slope(grid, &sweep.omega, above_start, grid[n - 1]);
    let _ = coef;

    estimates.alpha_crit_hat = Some(0.5 * (alpha_b + cp));
    estimates.confidence = Some((alpha_b - cp).abs());
    Ok((estimates, TransitionVerdict::Transition))
}

fn window_indices(grid: &[f64], center: f64) -> (usize, usize) {
    let lo_val = center / HINGE_WINDOW_FACTOR;
    let hi_val = center * HINGE_WINDOW_FACTOR;
    let lo = grid.partition_point(|&a| a < lo_val);
    let hi = grid.partition_point(|&a| a <= hi_val);
    (lo, hi.min(grid.len()))
}

/// Scan every interior grid value as hinge location of the continuous
/// two-segment model `y ≈ c₀ + c₁·x + c₂·max(x-b, 0)`; return the hinge
/// with minimal SSE, its coefficients and that SSE.
fn hinge_fit_scan(x: &[f64], y: &[f64], from: usize, to: usize) -> (f64, [f64; 3], f64) {
    let mut best = (x[from.min(x.len() - 1)], [0.0; 3], f64::INFINITY);
    for b in &x[from..to.max(from + 1)] {
        if let Some((coef, sse)) = hinge_ls(x, y, *b) {
            if sse < best.2 {
                best = (*b, coef, sse);
            }
        }
    }
    best
}

fn hinge_ls(x: &[f64], y: &[f64], b: f64) -> Option<([f64; 3], f64)> {
    // normal equations for the 3-parameter basis {1, x, relu(x-b)}
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let row = [1.0, xi, (xi - b).max(0.0)];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            aty[i] += row[i] * yi;
        }
    }
    let coef = solve3(ata, aty)?;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let fit = coef[0] + coef[1] * xi + coef[2] * (xi - b).max(0.0);
            (yi - fit) * (yi - fit)
        })
        .sum();
    Some((coef, sse))
}

fn solve3(mut a: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for j in col..3 {
                a[row][j] -= f * a[col][j];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut out = [0.0f64; 3];
    for col in (0..3).rev() {
        let mut acc = rhs[col];
        for j in (col + 1)..3 {
            acc -= a[col][j] * out[j];
        }
        out[col] = acc / a[col][col];
    }
    Some(out)
}

fn window_slope(grid: &[f64], y: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let xs: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&a| (lo..=hi).contains(&a))
        .collect();
    if xs.len() < 3 {
        return None;
    }
    let ys: Vec<f64> = grid
        .iter()
        .zip(y)
        .filter(|(&a, _)| (lo..=hi).contains(&a))
        .map(|(_, &v)| v)
        .collect();
    Some(crate::analytic::least_squares(&xs, &ys).0)
}

fn parabolic_peak(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64) -> f64 {
    let denom = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if denom.abs() < 1e-300 {
        return x1;
    }
    let num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    x1 - 0.5 * num / denom
}

/// First and second collision couplings at the spectrum centre: the grid
/// couplings where the number of states with `|ℰ| < 10⁻⁶` first reaches
/// three and where it falls back afterwards.
pub fn detect_collisions(sweep: &SweepResult) -> (Option<f64>, Option<f64>) {
    const CENTER_TOL: f64 = 1e-6;
    let grid = sweep.alpha_grid();
    let mut c1 = None;
    let mut c2 = None;
    let mut prev = 0usize;
    for g in 0..grid.len() {
        let count = sweep
            .trajectories
            .lambdas_at(g)
            .iter()
            .filter(|l| l.re.abs() < CENTER_TOL)
            .count();
        if c1.is_none() && count >= 3 && prev < 3 {
            c1 = Some(grid[g]);
        }
        if c1.is_some() && c2.is_none() && count < 3 && prev >= 3 {
            c2 = Some(grid[g]);
        }
        prev = count;
    }
    (c1, c2)
}

/// Largest finite-difference slope of the broad state's participation
/// number along the sweep.
pub fn max_npc_slope(sweep: &SweepResult) -> f64 {
    let grid = sweep.alpha_grid();
    sweep
        .broad_npc
        .windows(2)
        .zip(grid.windows(2))
        .map(|(p, a)| (p[1] - p[0]) / (a[1] - a[0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpectrumSpec;
    use crate::build_model;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn default_grid_is_increasing_and_covers_range() {
        let g = default_alpha_grid(0.01, 2.0, 200, 1.0 / PI);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_abs_diff_eq!(g[0], 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(*g.last().unwrap(), 2.0, epsilon = 1e-12);
        // linear zone present around the guess
        let in_window = g
            .iter()
            .filter(|&&a| (0.8 / PI..1.25 / PI).contains(&a))
            .count();
        assert!(in_window >= 20);
    }

    #[test]
    fn default_grid_degenerates_to_geometric() {
        let g = default_alpha_grid(0.5, 0.9, 30, 1.0 / PI);
        assert_eq!(g.len(), 30);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn ideal_sweep_has_transition_at_inverse_pi() {
        let model = build_model(&SpectrumSpec::ideal(50)).unwrap();
        let grid = default_alpha_grid(0.01, 2.0, 200, 1.0 / PI);
        let sweep = run_sweep(&model, &grid, 0.0, SweepOptions::default()).unwrap();
        assert_eq!(model.k_of(sweep.broad_label), 0);
        assert!(!sweep.broad_ambiguous);
        // ω is nonnegative and nondecreasing
        assert!(sweep.omega.iter().all(|&w| w >= 0.0));
        for w in sweep.omega.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        let (est, verdict) = estimate_critical(&sweep).unwrap();
        assert_eq!(verdict, TransitionVerdict::Transition);
        let b_peak = est.alpha_b_peak.unwrap();
        let cp = est.alpha_changepoint.unwrap();
        assert!((b_peak - 1.0 / PI).abs() < 0.02, "B peak at {b_peak}");
        assert!((cp - 1.0 / PI).abs() < 0.02, "changepoint at {cp}");
        // slope below the transition tracks 1/M
        let s_below = est.slope_below.unwrap();
        assert!(
            (s_below - 1.0 / 101.0).abs() < 0.2 / 101.0,
            "slope below = {s_below}"
        );
        // B returns toward 1 at both grid ends
        let b = sweep.b_mean.as_ref().unwrap();
        assert!(b[0] < 1.01);
        assert!(*b.last().unwrap() < 1.1);
        assert!(b.iter().all(|&x| x >= 1.0 - 1e-9));
    }

    #[test]
    fn broad_npc_saturates_above_transition() {
        let model = build_model(&SpectrumSpec::ideal(50)).unwrap();
        let grid = default_alpha_grid(0.01, 2.0, 120, 1.0 / PI);
        let sweep = run_sweep(
            &model,
            &grid,
            0.0,
            SweepOptions {
                observables: ObservableMode::BroadOnly,
            },
        )
        .unwrap();
        assert!(sweep.broad_npc[0] < 0.011);
        assert!(*sweep.broad_npc.last().unwrap() > 0.95);
        assert!(sweep.b_mean.is_none());
    }

    #[test]
    fn uncompensated_family_has_no_transition() {
        let model = build_model(&SpectrumSpec::power_law(50, 2.0, 0.0)).unwrap();
        let grid = default_alpha_grid(0.01, 2.0, 140, 1.0 / PI);
        let sweep = run_sweep(&model, &grid, 0.0, SweepOptions::default()).unwrap();
        let (est, verdict) = estimate_critical(&sweep).unwrap();
        assert_eq!(verdict, TransitionVerdict::NoTransition);
        assert!(est.alpha_crit_hat.is_none());
        let b = sweep.b_mean.as_ref().unwrap();
        assert!(b.iter().all(|&x| x < 1.1));
    }

    #[test]
    fn disturbed_fence_collision_couplings() {
        let model = build_model(&SpectrumSpec::disturbed(50, -0.5)).unwrap();
        let grid = default_alpha_grid(0.01, 1.0, 220, 1.0 / PI);
        let sweep = run_sweep(&model, &grid, 0.0, SweepOptions::default()).unwrap();
        let (c1, c2) = detect_collisions(&sweep);
        let c1 = c1.expect("first collision inside the grid");
        let c2 = c2.expect("second collision inside the grid");
        assert!(c1 > 1.0 / PI && c1 < c2);
        assert!((c1 - 0.3575).abs() < 0.01, "alpha_c1 = {c1}");
        assert!((c2 - 0.57).abs() < 0.02, "alpha_c2 = {c2}");
        // between the collisions exactly three states sit at the centre
        let grid_v = sweep.alpha_grid();
        for g in 0..grid_v.len() {
            let a = grid_v[g];
            if a > c1 * 1.02 && a < c2 * 0.98 {
                let count = sweep
                    .trajectories
                    .lambdas_at(g)
                    .iter()
                    .filter(|l| l.re.abs() < 1e-6)
                    .count();
                assert_eq!(count, 3, "at alpha = {a}");
            }
        }
    }

    #[test]
    fn ideal_fence_has_no_collisions() {
        let model = build_model(&SpectrumSpec::ideal(30)).unwrap();
        let grid = default_alpha_grid(0.01, 1.0, 120, 1.0 / PI);
        let sweep = run_sweep(&model, &grid, 0.0, SweepOptions::default()).unwrap();
        let (c1, c2) = detect_collisions(&sweep);
        assert!(c1.is_none() && c2.is_none());
    }

    #[test]
    fn estimate_requires_full_observables() {
        let model = build_model(&SpectrumSpec::ideal(10)).unwrap();
        let grid = default_alpha_grid(0.01, 1.0, 60, 1.0 / PI);
        let sweep = run_sweep(
            &model,
            &grid,
            0.0,
            SweepOptions {
                observables: ObservableMode::BroadOnly,
            },
        )
        .unwrap();
        assert!(matches!(
            estimate_critical(&sweep),
            Err(SweepError::InvalidInput(_))
        ));
    }
}
