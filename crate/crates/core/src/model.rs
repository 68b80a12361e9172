//! Level spectra and coupling vectors for the studied system families.
//!
//! All families produce a [`ModelInstance`]: strictly increasing real
//! energies `E_k` and nonnegative couplings `v_k`. Symmetric families are
//! built mirror-exact, `E_{-k} = -E_k` and `v_{-k} = v_k` bit for bit.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid spectrum spec: {0}")]
    InvalidSpec(String),
    #[error("energies are degenerate after construction (indices {0} and {1})")]
    Degenerate(usize, usize),
    #[error("unfolding needs at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error("coupling parameter must have alpha >= 0, got {0}")]
    NegativeAlpha(f64),
}

/// Which level/coupling family to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `E_k = k`, `v_k = 1`, `k = -N..N`.
    IdealPicketFence,
    /// Ideal fence with the central coupling replaced by `v_0 = 1 + D`.
    DisturbedFence,
    /// `E_k = sign(k)|k|^p`, `v_k² = |k|^r` (plus optional center offset).
    PowerLaw,
    /// One-sided spectrum `E_k = k^p`, `v_k² = k^r + 1`, `k = 0..N`.
    BoundedPowerLaw,
    /// Unfolded GOE levels with Gaussian couplings, seeded.
    GoeUnfolded,
}

/// Recipe for one model realization.
#[derive(Debug, Clone)]
pub struct SpectrumSpec {
    pub family: Family,
    /// Half-width of the index range; `M = 2N+1` states
    /// (`M = N+1` for [`Family::BoundedPowerLaw`]).
    pub n: usize,
    /// Central-coupling disturbance `D` (DisturbedFence only).
    pub disturbance: f64,
    /// Level exponent `p > 0`.
    pub level_exponent: f64,
    /// Coupling exponent `r >= 0`.
    pub coupling_exponent: f64,
    /// Add 1 to every `v_k²` so the center state stays coupled.
    /// `None` resolves to "on" exactly when `r > 0`.
    pub offset: Option<bool>,
    /// RNG seed (GoeUnfolded only).
    pub seed: u64,
    /// Mean of the Gaussian couplings (GoeUnfolded only).
    pub mean_v: f64,
    /// Variance of the Gaussian couplings (GoeUnfolded only).
    pub var_v: f64,
}

impl SpectrumSpec {
    pub fn ideal(n: usize) -> Self {
        Self::base(Family::IdealPicketFence, n)
    }

    pub fn disturbed(n: usize, disturbance: f64) -> Self {
        Self {
            disturbance,
            ..Self::base(Family::DisturbedFence, n)
        }
    }

    pub fn power_law(n: usize, level_exponent: f64, coupling_exponent: f64) -> Self {
        Self {
            level_exponent,
            coupling_exponent,
            ..Self::base(Family::PowerLaw, n)
        }
    }

    pub fn bounded_power_law(n: usize, level_exponent: f64, coupling_exponent: f64) -> Self {
        Self {
            level_exponent,
            coupling_exponent,
            ..Self::base(Family::BoundedPowerLaw, n)
        }
    }

    pub fn goe(n: usize, seed: u64) -> Self {
        Self {
            seed,
            ..Self::base(Family::GoeUnfolded, n)
        }
    }

    fn base(family: Family, n: usize) -> Self {
        Self {
            family,
            n,
            disturbance: 0.0,
            level_exponent: 1.0,
            coupling_exponent: 0.0,
            offset: None,
            seed: 0,
            mean_v: 1.0,
            var_v: 0.01,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.level_exponent <= 0.0 || !self.level_exponent.is_finite() {
            return Err(ModelError::InvalidSpec(format!(
                "level exponent p must be positive, got {}",
                self.level_exponent
            )));
        }
        if self.coupling_exponent < 0.0 || !self.coupling_exponent.is_finite() {
            return Err(ModelError::InvalidSpec(format!(
                "coupling exponent r must be >= 0, got {}",
                self.coupling_exponent
            )));
        }
        if self.var_v < 0.0 || !self.var_v.is_finite() {
            return Err(ModelError::InvalidSpec(format!(
                "coupling variance must be >= 0, got {}",
                self.var_v
            )));
        }
        if self.family == Family::DisturbedFence && self.disturbance < -1.0 {
            return Err(ModelError::InvalidSpec(format!(
                "disturbance D must be >= -1 so v_0 stays nonnegative, got {}",
                self.disturbance
            )));
        }
        Ok(())
    }
}

/// One concrete system realization.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    energies: Vec<f64>,
    couplings: Vec<f64>,
    label: String,
    /// Index label of the first state; states carry labels `k_start..k_start+M`.
    k_start: i64,
}

impl ModelInstance {
    /// Wrap explicit energies/couplings, checking the ordering and sign
    /// invariants. `k_start` is the label of the first state (`-N` for the
    /// symmetric families, `0` for bounded or custom spectra).
    pub fn new(
        energies: Vec<f64>,
        couplings: Vec<f64>,
        label: impl Into<String>,
        k_start: i64,
    ) -> Result<Self, ModelError> {
        if energies.is_empty() || energies.len() != couplings.len() {
            return Err(ModelError::InvalidSpec(format!(
                "need equal nonzero counts of energies and couplings, got {} and {}",
                energies.len(),
                couplings.len()
            )));
        }
        for (i, w) in energies.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(ModelError::Degenerate(i, i + 1));
            }
        }
        if let Some(i) = couplings.iter().position(|&v| v < 0.0 || !v.is_finite()) {
            return Err(ModelError::InvalidSpec(format!(
                "coupling {} is negative or non-finite: {}",
                i, couplings[i]
            )));
        }
        Ok(Self {
            energies,
            couplings,
            label: label.into(),
            k_start,
        })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// State label for a storage index (e.g. `-N..N` for symmetric families).
    pub fn k_of(&self, index: usize) -> i64 {
        self.k_start + index as i64
    }

    /// Storage index of the state labeled `k`, if present.
    pub fn index_of(&self, k: i64) -> Option<usize> {
        let i = k - self.k_start;
        (0..self.energies.len() as i64)
            .contains(&i)
            .then_some(i as usize)
    }

    pub fn coupling_norm_sq(&self) -> f64 {
        self.couplings.iter().map(|v| v * v).sum()
    }

    pub fn mean_spacing(&self) -> f64 {
        let m = self.energies.len();
        if m < 2 {
            return 1.0;
        }
        (self.energies[m - 1] - self.energies[0]) / (m - 1) as f64
    }

    pub fn min_spacing(&self) -> f64 {
        self.energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_coupling_sq(&self) -> f64 {
        self.couplings.iter().map(|v| v * v).fold(0.0, f64::max)
    }
}

/// Complex coupling strength `κ = α + iβ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParam {
    pub alpha: f64,
    pub beta: f64,
}

impl CouplingParam {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ModelError> {
        if alpha < 0.0 || !alpha.is_finite() || !beta.is_finite() {
            return Err(ModelError::NegativeAlpha(alpha));
        }
        Ok(Self { alpha, beta })
    }

    pub fn real(alpha: f64) -> Self {
        Self { alpha, beta: 0.0 }
    }

    /// `κ = magnitude·e^{iφ}`; `|φ| < π/2` keeps `α >= 0`.
    pub fn from_polar(magnitude: f64, phi: f64) -> Self {
        Self {
            alpha: magnitude * phi.cos(),
            beta: magnitude * phi.sin(),
        }
    }

    pub fn phi(&self) -> f64 {
        self.beta.atan2(self.alpha)
    }

    pub fn magnitude(&self) -> f64 {
        self.alpha.hypot(self.beta)
    }

    pub fn kappa(&self) -> Complex64 {
        Complex64::new(self.alpha, self.beta)
    }
}

/// Build the model instance described by `spec`.
pub fn build_model(spec: &SpectrumSpec) -> Result<ModelInstance, ModelError> {
    spec.validate()?;
    let n = spec.n;
    match spec.family {
        Family::IdealPicketFence => {
            let (energies, couplings) = symmetric_fence(n, |_| 1.0);
            ModelInstance::new(energies, couplings, "ideal picket fence", -(n as i64))
        }
        Family::DisturbedFence => {
            let (energies, mut couplings) = symmetric_fence(n, |_| 1.0);
            couplings[n] = 1.0 + spec.disturbance;
            ModelInstance::new(
                energies,
                couplings,
                format!("disturbed fence D={}", spec.disturbance),
                -(n as i64),
            )
        }
        Family::PowerLaw => {
            let p = spec.level_exponent;
            let r = spec.coupling_exponent;
            let offset = spec.offset.unwrap_or(r > 0.0);
            let m = 2 * n + 1;
            let mut energies = vec![0.0; m];
            let mut couplings = vec![0.0; m];
            couplings[n] = if offset {
                1.0
            } else if r == 0.0 {
                1.0
            } else {
                0.0
            };
            for k in 1..=n {
                let e = (k as f64).powf(p);
                energies[n + k] = e;
                energies[n - k] = -e;
                let v2 = (k as f64).powf(r) + if offset { 1.0 } else { 0.0 };
                let v = v2.sqrt();
                couplings[n + k] = v;
                couplings[n - k] = v;
            }
            ModelInstance::new(
                energies,
                couplings,
                format!("power law p={p} r={r} offset={}", offset as u8),
                -(n as i64),
            )
        }
        Family::BoundedPowerLaw => {
            let p = spec.level_exponent;
            let r = spec.coupling_exponent;
            let energies: Vec<f64> = (0..=n).map(|k| (k as f64).powf(p)).collect();
            let couplings: Vec<f64> = (0..=n)
                .map(|k| ((k as f64).powf(r) + 1.0).sqrt())
                .collect();
            ModelInstance::new(
                energies,
                couplings,
                format!("bounded power law p={p} r={r}"),
                0,
            )
        }
        Family::GoeUnfolded => {
            let m = 2 * n + 1;
            if m < 3 {
                return Err(ModelError::TooFewLevels(m));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let raw = goe_eigenvalues(m, &mut rng);
            let energies = unfold_goe(&raw)?;
            let normal = Normal::new(spec.mean_v, spec.var_v.sqrt())
                .map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
            let couplings: Vec<f64> = (0..m).map(|_| normal.sample(&mut rng).abs()).collect();
            ModelInstance::new(
                energies,
                couplings,
                format!("unfolded GOE seed={}", spec.seed),
                -(n as i64),
            )
        }
    }
}

fn symmetric_fence(n: usize, v_of_k: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let m = 2 * n + 1;
    let mut energies = vec![0.0; m];
    let mut couplings = vec![0.0; m];
    couplings[n] = v_of_k(0);
    for k in 1..=n {
        energies[n + k] = k as f64;
        energies[n - k] = -(k as f64);
        let v = v_of_k(k);
        couplings[n + k] = v;
        couplings[n - k] = v;
    }
    (energies, couplings)
}

/// Sample GOE eigenvalues through the equivalent symmetric tridiagonal
/// ensemble: diagonal `N(0,1)`, off-diagonal `χ_k/√2` with decreasing
/// degrees of freedom. Same spectral law as a dense GOE draw at a fraction
/// of the cost, and exactly reproducible from the RNG stream.
fn goe_eigenvalues(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let diag: Vec<f64> = (0..m).map(|_| normal.sample(rng)).collect();
    let off: Vec<f64> = (1..m)
        .rev()
        .map(|dof| {
            let chi2 = ChiSquared::new(dof as f64).expect("chi-squared dof >= 1");
            (chi2.sample(rng) / 2.0).sqrt()
        })
        .collect();
    let mut eigs = tridiagonal_eigenvalues(&diag, &off);
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eigs
}

/// All eigenvalues of a symmetric tridiagonal matrix by Sturm bisection.
fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![diag[0]];
    }
    // Gershgorin bounds
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for i in 0..n {
        let el = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let er = if i < n - 1 { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - el - er);
        hi = hi.max(diag[i] + el + er);
    }
    lo -= 1.0;
    hi += 1.0;

    let count_below = |lambda: f64| -> usize {
        let mut count = 0usize;
        let mut q = diag[0] - lambda;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let q_safe = if q.abs() < 1e-300 {
                if q >= 0.0 {
                    1e-300
                } else {
                    -1e-300
                }
            } else {
                q
            };
            q = (diag[i] - lambda) - off[i - 1] * off[i - 1] / q_safe;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };

    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut a = lo;
        let mut b = hi;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if (b - a) < 2.0 * f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
            if count_below(mid) <= k {
                a = mid;
            } else {
                b = mid;
            }
        }
        out.push(0.5 * (a + b));
    }
    out
}

/// Map sorted eigenvalues to unit mean spacing, centered at zero.
///
/// The local density is removed with the integrated Wigner semicircle law,
/// its radius fitted to the extremal sampled eigenvalues; the result is then
/// rescaled so the mean spacing is exactly 1 and the mean exactly 0.
pub fn unfold_goe(raw: &[f64]) -> Result<Vec<f64>, ModelError> {
    let m = raw.len();
    if m < 3 {
        return Err(ModelError::TooFewLevels(m));
    }
    let radius = raw
        .iter()
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    // integrated semicircle density on [-R, R], scaled to [0, M]
    let cdf = |x: f64| -> f64 {
        let t = (x / radius).clamp(-1.0, 1.0);
        m as f64 * (0.5 + (t * (1.0 - t * t).sqrt() + t.asin()) / std::f64::consts::PI)
    };
    let mapped: Vec<f64> = raw.iter().map(|&x| cdf(x)).collect();
    let spacing = (mapped[m - 1] - mapped[0]) / (m - 1) as f64;
    if !(spacing > 0.0) {
        return Err(ModelError::InvalidSpec(
            "unfolding collapsed the spectrum (degenerate extremes)".into(),
        ));
    }
    let mean = mapped.iter().sum::<f64>() / m as f64;
    Ok(mapped.iter().map(|&y| (y - mean) / spacing).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ideal_fence_small() {
        let m = build_model(&SpectrumSpec::ideal(2)).unwrap();
        assert_eq!(m.energies(), &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(m.couplings(), &[1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(m.k_of(0), -2);
        assert_eq!(m.index_of(2), Some(4));
    }

    #[test]
    fn disturbed_fence_center_coupling() {
        let m = build_model(&SpectrumSpec::disturbed(1, -0.5)).unwrap();
        assert_eq!(m.energies(), &[-1.0, 0.0, 1.0]);
        assert_eq!(m.couplings(), &[1.0, 0.5, 1.0]);
    }

    #[test]
    fn power_law_with_offset() {
        let m = build_model(&SpectrumSpec::power_law(2, 2.0, 1.0)).unwrap();
        assert_eq!(m.energies(), &[-4.0, -1.0, 0.0, 1.0, 4.0]);
        let v2: Vec<f64> = m.couplings().iter().map(|v| v * v).collect();
        for (got, want) in v2.iter().zip([3.0, 2.0, 1.0, 2.0, 3.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn power_law_uncompensated_has_unit_couplings() {
        let m = build_model(&SpectrumSpec::power_law(3, 2.0, 0.0)).unwrap();
        assert_eq!(m.energies(), &[-9.0, -4.0, -1.0, 0.0, 1.0, 4.0, 9.0]);
        assert!(m.couplings().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bounded_power_law() {
        let m = build_model(&SpectrumSpec::bounded_power_law(3, 2.0, 1.0)).unwrap();
        assert_eq!(m.energies(), &[0.0, 1.0, 4.0, 9.0]);
        let v2: Vec<f64> = m.couplings().iter().map(|v| v * v).collect();
        for (got, want) in v2.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(m.k_of(0), 0);
    }

    #[test]
    fn symmetric_families_mirror_exactly() {
        for spec in [
            SpectrumSpec::ideal(7),
            SpectrumSpec::disturbed(7, 0.25),
            SpectrumSpec::power_law(7, 2.0, 1.0),
        ] {
            let m = build_model(&spec).unwrap();
            let mm = m.len();
            for i in 0..mm {
                assert_eq!(m.energies()[i], -m.energies()[mm - 1 - i]);
                assert_eq!(m.couplings()[i], m.couplings()[mm - 1 - i]);
            }
        }
    }

    #[test]
    fn goe_is_seed_reproducible() {
        let a = build_model(&SpectrumSpec::goe(20, 7)).unwrap();
        let b = build_model(&SpectrumSpec::goe(20, 7)).unwrap();
        assert_eq!(a.energies(), b.energies());
        assert_eq!(a.couplings(), b.couplings());
        let c = build_model(&SpectrumSpec::goe(20, 8)).unwrap();
        assert_ne!(a.energies(), c.energies());
    }

    #[test]
    fn goe_couplings_follow_requested_statistics() {
        let mut spec = SpectrumSpec::goe(300, 3);
        spec.mean_v = 1.0;
        spec.var_v = 0.01;
        let m = build_model(&spec).unwrap();
        let mean = m.couplings().iter().sum::<f64>() / m.len() as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 0.02);
        assert!(m.couplings().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn unfold_uniform_is_fixed_point() {
        let out = unfold_goe(&[-1.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(out[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unfold_semicircle_sample_has_unit_spacing() {
        // semicircle quantile sample via the GOE sampler itself
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw = goe_eigenvalues(101, &mut rng);
        let out = unfold_goe(&raw).unwrap();
        let spacing = (out[100] - out[0]) / 100.0;
        assert_abs_diff_eq!(spacing, 1.0, epsilon = 0.01);
        let mean = out.iter().sum::<f64>() / 101.0;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn unfold_rejects_short_input() {
        assert!(matches!(
            unfold_goe(&[0.0, 1.0]),
            Err(ModelError::TooFewLevels(2))
        ));
    }

    #[test]
    fn negative_variance_rejected() {
        let mut spec = SpectrumSpec::goe(5, 1);
        spec.var_v = -0.1;
        assert!(build_model(&spec).is_err());
    }

    #[test]
    fn nonpositive_level_exponent_rejected() {
        let mut spec = SpectrumSpec::power_law(5, 0.0, 1.0);
        spec.level_exponent = 0.0;
        assert!(build_model(&spec).is_err());
    }

    #[test]
    fn coupling_param_polar_roundtrip() {
        let k = CouplingParam::from_polar(0.5, std::f64::consts::FRAC_PI_4);
        assert_abs_diff_eq!(k.magnitude(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(k.phi(), std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        assert!(CouplingParam::new(-0.1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn unfold_preserves_strict_order(mut xs in proptest::collection::vec(-50.0f64..50.0, 3..40)) {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            prop_assume!(xs.len() >= 3);
            let out = unfold_goe(&xs).unwrap();
            for w in out.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }
    }
}
