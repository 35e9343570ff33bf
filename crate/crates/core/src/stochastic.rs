//! Stochastic Melnikov functional under additive white noise on the Galerkin
//! coordinates, with the statistics used to compare an ensemble against its
//! exact Gaussian law.
//!
//! The discrete functional is `M = Σ_n ⟨ψ(t_n), η_n⟩ Δt_n` where the
//! components of `η_n` are independent `N(0, D/Δt_n)`. The cells are the
//! intervals between consecutive adjoint samples, evaluated at the left end.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // float methods come from here without std
use crate::math::Real;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adjoint::AdjointTrajectory;
use crate::integrators::{Etdrk4Stepper, IntegrationConfig, IntegrationError, SampledPath, SemilinearSystem};

/// Two-sided 0.995 standard normal quantile.
pub const Z_995: f64 = 2.575_829_303_548_900_4;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum StochasticError {
    #[error("noise intensity must be finite and non-negative, got {0}")]
    InvalidIntensity(f64),
    #[error("noise step must be finite and positive, got {0}")]
    InvalidStep(f64),
    #[error("ensemble must contain at least one realization")]
    EmptyEnsemble,
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("scaling fit needs at least two distinct positive intensities")]
    DegenerateGrid,
    #[error("adjoint path has fewer than two samples")]
    ShortAdjoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Noise intensity D.
    pub d: f64,
    /// Integration step of the forced model. The Melnikov sum itself uses
    /// the adjoint sample spacing as Δt.
    pub dt: f64,
    pub ensemble: usize,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), StochasticError> {
        if !(self.d.is_finite() && self.d >= 0.0) {
            return Err(StochasticError::InvalidIntensity(self.d));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(StochasticError::InvalidStep(self.dt));
        }
        if self.ensemble == 0 {
            return Err(StochasticError::EmptyEnsemble);
        }
        Ok(())
    }

    pub fn with_intensity(mut self, d: f64) -> Self {
        self.d = d;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub samples: Vec<f64>,
    pub sample_mean: f64,
    /// Unbiased sample variance.
    pub sample_var: f64,
    pub predicted_var: f64,
    pub rms: f64,
}

impl EnsembleResult {
    pub fn from_samples(samples: Vec<f64>, predicted_var: f64) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n).sqrt();
        Self { samples, sample_mean: mean, sample_var: var, predicted_var, rms }
    }

    /// Standard error of the mean under the predicted law.
    pub fn standard_error(&self) -> f64 {
        (self.predicted_var / self.samples.len() as f64).sqrt()
    }

    pub fn mean_within(&self, k: f64) -> bool {
        self.sample_mean.abs() <= k * self.standard_error()
    }

    pub fn variance_interval(&self, z: f64) -> (f64, f64) {
        chi_square_variance_interval(self.predicted_var, self.samples.len(), z)
    }

    pub fn variance_consistent(&self) -> bool {
        let (lo, hi) = self.variance_interval(Z_995);
        self.sample_var >= lo && self.sample_var <= hi
    }

    pub fn ks_statistic(&self) -> f64 {
        ks_statistic(&self.samples, self.predicted_var.sqrt())
    }

    pub fn ks_p_value(&self) -> f64 {
        ks_p_value(self.ks_statistic(), self.samples.len())
    }

    pub fn excess_kurtosis(&self) -> f64 {
        excess_kurtosis(&self.samples)
    }
}

/// Per-cell weights `Δt_n = t_{n+1} − t_n`; the last sample closes the
/// window and carries no weight.
fn cell_widths(adjoint: &AdjointTrajectory) -> Result<Vec<f64>, StochasticError> {
    let t = adjoint.path.times();
    if t.len() < 2 {
        return Err(StochasticError::ShortAdjoint);
    }
    Ok(t.windows(2).map(|w| w[1] - w[0]).collect())
}

/// `D Σ_n ‖ψ(t_n)‖² Δt_n`.
pub fn predicted_variance(adjoint: &AdjointTrajectory, noise: &NoiseConfig) -> Result<f64, StochasticError> {
    noise.validate()?;
    let widths = cell_widths(adjoint)?;
    let sum: f64 = widths
        .iter()
        .enumerate()
        .map(|(n, w)| adjoint.path.state(n).iter().map(|p| p * p).sum::<f64>() * w)
        .sum();
    Ok(noise.d * sum)
}

/// Random stream for one realization: the seed picks the key, the index
/// picks the ChaCha stream, so realizations are independent of scheduling.
pub fn realization_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One draw of the discrete stochastic Melnikov sum.
pub fn sample_melnikov(
    adjoint: &AdjointTrajectory,
    noise: &NoiseConfig,
    index: u64,
) -> Result<f64, StochasticError> {
    noise.validate()?;
    let widths = cell_widths(adjoint)?;
    if noise.d == 0.0 {
        return Ok(0.0);
    }
    let mut rng = realization_rng(noise.seed, index);
    let mut m = 0.0;
    for (n, &w) in widths.iter().enumerate() {
        let sigma = (noise.d / w).sqrt();
        let mut acc = 0.0;
        for &p in adjoint.path.state(n) {
            let xi: f64 = StandardNormal.sample(&mut rng);
            acc += p * sigma * xi;
        }
        m += acc * w;
    }
    Ok(m)
}

/// Realizations with stream indices in `range`, in index order.
pub fn sample_range(
    adjoint: &AdjointTrajectory,
    noise: &NoiseConfig,
    range: core::ops::Range<u64>,
) -> Result<Vec<f64>, StochasticError> {
    range.map(|i| sample_melnikov(adjoint, noise, i)).collect()
}

pub fn run_ensemble(adjoint: &AdjointTrajectory, noise: &NoiseConfig) -> Result<EnsembleResult, StochasticError> {
    let predicted = predicted_variance(adjoint, noise)?;
    let samples = sample_range(adjoint, noise, 0..noise.ensemble as u64)?;
    Ok(EnsembleResult::from_samples(samples, predicted))
}

/// Least-squares slope of `ln rms` against `ln D`.
pub fn rms_scaling_fit(points: &[(f64, f64)]) -> Result<f64, StochasticError> {
    if points.len() < 2 || points.iter().any(|&(d, r)| !(d > 0.0 && r > 0.0)) {
        return Err(StochasticError::DegenerateGrid);
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 1e-24 {
        return Err(StochasticError::DegenerateGrid);
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

pub fn gaussian_density(m: f64, variance: f64) -> Result<f64, StochasticError> {
    if !(variance > 0.0) {
        return Err(StochasticError::NonPositiveVariance(variance));
    }
    Ok((-m * m / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt())
}

pub fn normal_cdf(x: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / (sigma * core::f64::consts::SQRT_2)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
    /// Predicted density at the bin centre.
    pub gaussian_pdf: f64,
}

/// `bins` equal bins over `±half_width_sigmas` predicted standard
/// deviations; samples outside the range are not counted.
pub fn histogram(
    samples: &[f64],
    variance: f64,
    bins: usize,
    half_width_sigmas: f64,
) -> Result<Vec<HistogramBin>, StochasticError> {
    if !(variance > 0.0) {
        return Err(StochasticError::NonPositiveVariance(variance));
    }
    let half = half_width_sigmas * variance.sqrt();
    let width = 2.0 * half / bins as f64;
    let mut counts = alloc::vec![0usize; bins];
    for &s in samples {
        if s < -half || s > half {
            continue;
        }
        let k = (((s + half) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| {
            let left = -half + k as f64 * width;
            let right = left + width;
            Ok(HistogramBin { left, right, count, gaussian_pdf: gaussian_density(0.5 * (left + right), variance)? })
        })
        .collect()
}

/// One-sample Kolmogorov–Smirnov statistic against `N(0, sigma²)`.
pub fn ks_statistic(samples: &[f64], sigma: f64) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x, sigma);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = 2.0 * (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as u32 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Chi-square quantile by the Wilson–Hilferty approximation.
pub fn chi_square_quantile(k: f64, z: f64) -> f64 {
    let c = 2.0 / (9.0 * k);
    k * (1.0 - c + z * c.sqrt()).powi(3)
}

/// Interval for the unbiased sample variance of `n` draws from a normal
/// law with variance `var`, at two-sided standard normal quantile `z`.
pub fn chi_square_variance_interval(var: f64, n: usize, z: f64) -> (f64, f64) {
    let k = (n.max(2) - 1) as f64;
    (var * chi_square_quantile(k, -z) / k, var * chi_square_quantile(k, z) / k)
}

pub fn excess_kurtosis(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let m4 = samples.iter().map(|s| (s - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Integrates `ȧ = Λa + N(a) + η` with additive white noise of intensity
/// `d` on every real coordinate. Each ETDRK4 step is followed by the noise
/// increment `√(d h) ξ`, a first-order splitting. Samples are recorded every
/// `sample_stride` steps with the deterministic vector field as derivative.
pub fn integrate_with_noise<S: SemilinearSystem + ?Sized>(
    sys: &S,
    initial: &[f64],
    t0: f64,
    cfg: &IntegrationConfig,
    d: f64,
    mut rng: ChaCha8Rng,
) -> Result<SampledPath, IntegrationError> {
    cfg.validate()?;
    let n = sys.dim();
    if initial.len() != n {
        return Err(IntegrationError::DimensionMismatch { got: initial.len(), expected: n });
    }
    let (steps, h) = cfg.steps();
    let mut stepper = Etdrk4Stepper::new(sys.linear(), h, cfg.contour_points);
    let kick = (d.max(0.0) * h).sqrt();
    let mut v = initial.to_vec();
    let mut dv = alloc::vec![0.0; n];
    let mut path = SampledPath::new(n);
    sys.rhs(t0, &v, &mut dv);
    path.push(t0, &v, &dv);
    for step in 1..=steps {
        stepper.step(sys, t0 + (step - 1) as f64 * h, &mut v);
        for x in v.iter_mut() {
            let xi: f64 = StandardNormal.sample(&mut rng);
            *x += kick * xi;
        }
        let t_new = t0 + step as f64 * h;
        if step % cfg.sample_stride == 0 || step == steps {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(IntegrationError::NonFinite { time: t_new });
            }
            sys.rhs(t_new, &v, &mut dv);
            path.push(t_new, &v, &dv);
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::Normalization;
    use crate::SampledPath;
    use num_complex::Complex64;

    fn constant_adjoint(value: &[f64], len: usize, spacing: f64) -> AdjointTrajectory {
        let mut path = SampledPath::new(value.len());
        let zero = alloc::vec![0.0; value.len()];
        for i in 0..len {
            path.push(i as f64 * spacing, value, &zero);
        }
        AdjointTrajectory {
            path,
            normalization: Normalization::UnitNorm,
            scale: 1.0,
            terminal_eigenvalue: Complex64::new(0.0, 0.0),
            pairing: alloc::vec![0.0; len],
            normalization_residual: 0.0,
        }
    }

    fn noise(d: f64, ensemble: usize) -> NoiseConfig {
        NoiseConfig { d, dt: 1e-3, ensemble, seed: 7 }
    }

    #[test]
    fn predicted_variance_of_unit_vector_is_window_length() {
        let adj = constant_adjoint(&[0.6, 0.8], 1001, 0.01);
        let v = predicted_variance(&adj, &noise(0.3, 1)).unwrap();
        assert!((v - 0.3 * 10.0).abs() < 1e-12);
        let v2 = predicted_variance(&adj, &noise(0.6, 1)).unwrap();
        assert_eq!(v2, 2.0 * v);
        assert_eq!(predicted_variance(&adj, &noise(0.0, 1)).unwrap(), 0.0);
    }

    #[test]
    fn zero_intensity_gives_zero_samples() {
        let adj = constant_adjoint(&[1.0, -2.0], 11, 0.1);
        let r = run_ensemble(&adj, &noise(0.0, 5)).unwrap();
        assert!(r.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_step_scalar_law() {
        let c = 1.7;
        let dt = 0.05;
        let adj = constant_adjoint(&[c], 2, dt);
        let cfg = NoiseConfig { d: 0.4, dt, ensemble: 10_000, seed: 11 };
        let r = run_ensemble(&adj, &cfg).unwrap();
        let expect = 0.4 * c * c * dt;
        assert!((r.predicted_var - expect).abs() < 1e-15);
        assert!((r.sample_var - expect).abs() <= 0.05 * expect, "{} {}", r.sample_var, expect);
    }

    #[test]
    fn same_seed_same_sample() {
        let adj = constant_adjoint(&[0.3, 0.1, -0.2], 50, 0.01);
        let a = sample_melnikov(&adj, &noise(0.02, 1), 3).unwrap();
        let b = sample_melnikov(&adj, &noise(0.02, 1), 3).unwrap();
        let c = sample_melnikov(&adj, &noise(0.02, 1), 4).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, c);
    }

    #[test]
    fn ensemble_matches_exact_gaussian_law() {
        let adj = constant_adjoint(&[0.5, -1.0, 0.25], 200, 0.01);
        let r = run_ensemble(&adj, &noise(0.02, 500)).unwrap();
        assert!(r.mean_within(3.0));
        assert!(r.variance_consistent(), "{} vs {}", r.sample_var, r.predicted_var);
        assert!(r.ks_p_value() > 0.01);
        assert!(r.excess_kurtosis().abs() <= 0.7);
    }

    #[test]
    fn scaling_fit_examples() {
        let pts = [(0.01, 0.01f64.sqrt() * 3.0), (0.04, 0.04f64.sqrt() * 3.0)];
        assert!((rms_scaling_fit(&pts).unwrap() - 0.5).abs() < 1e-12);
        let flat = [(0.01, 2.0), (0.02, 2.0), (0.04, 2.0)];
        assert!(rms_scaling_fit(&flat).unwrap().abs() < 1e-12);
        assert_eq!(rms_scaling_fit(&[(0.02, 1.0), (0.02, 1.5), (0.02, 2.0)]), Err(StochasticError::DegenerateGrid));
    }

    #[test]
    fn density_properties() {
        assert!((gaussian_density(0.0, 1.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(gaussian_density(1.3, 2.0).unwrap(), gaussian_density(-1.3, 2.0).unwrap());
        assert!(gaussian_density(0.0, 0.0).is_err());
        let var = 2.5f64;
        let s = var.sqrt();
        let n = 20_000;
        let h = 20.0 * s / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            total += w * gaussian_density(-10.0 * s + i as f64 * h, var).unwrap();
        }
        assert!((total * h / 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn histogram_covers_four_sigma() {
        let bins = histogram(&[0.0, 0.1, -3.9, 5.0], 1.0, 30, 4.0).unwrap();
        assert_eq!(bins.len(), 30);
        assert!((bins[0].left + 4.0).abs() < 1e-12 && (bins[29].right - 4.0).abs() < 1e-12);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 3);
    }

    #[test]
    fn chi_square_interval_brackets_about_seventeen_percent() {
        let (lo, hi) = chi_square_variance_interval(1.0, 500, Z_995);
        assert!(lo > 0.83 && lo < 0.87 && hi > 1.15 && hi < 1.19, "{lo} {hi}");
    }

    struct Decay;

    impl SemilinearSystem for Decay {
        fn linear(&self) -> &[f64] {
            &[-1.0]
        }

        fn nonlinear(&self, _t: f64, _y: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
    }

    #[test]
    fn noisy_ornstein_uhlenbeck_has_stationary_variance() {
        // dx = −x dt + √D dW has stationary variance D/2.
        let cfg = IntegrationConfig::new(1e-2, 2000.0, 10).unwrap();
        let p = integrate_with_noise(&Decay, &[0.0], 0.0, &cfg, 0.5, realization_rng(3, 0)).unwrap();
        let xs: Vec<f64> = (1000..p.len()).map(|i| p.state(i)[0]).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var - 0.25).abs() < 0.03, "{var}");
        let quiet = integrate_with_noise(&Decay, &[1.0], 0.0, &cfg.with_horizon(1.0).unwrap(), 0.0, realization_rng(3, 0)).unwrap();
        assert!((quiet.last_state()[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn ks_p_value_limits() {
        assert!(ks_p_value(0.0, 500) == 1.0);
        // Critical value at the 1% level is about 1.63/√n.
        let p = ks_p_value(1.628 / 500f64.sqrt(), 500);
        assert!((p - 0.01).abs() < 2e-3, "{p}");
    }
}
