//! Fourier–Galerkin representation of a periodic KS field.
//!
//! A state stores the complex coefficients `a_k` for `k = 0..=N` of
//! `u(x) = Σ_{k=-N}^{N} a_k e^{ikqx}`; the negative modes follow from
//! `a_{-k} = conj(a_k)`. The mean `a_0` is pinned to zero.
//!
//! Dense linear algebra and the integrators work on *real coordinates*, the
//! interleaved vector `[Re a_1, Im a_1, Re a_2, Im a_2, ..., Re a_N, Im a_N]`
//! of length `2N`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // float methods come from here without std
use crate::math::{cabs, polar, Real};
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("domain length must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("mode cutoff must be at least 1")]
    NoModes,
    #[error("mean coefficient a_0 must be zero, got {0}")]
    NonzeroMean(Complex64),
    #[error("non-finite coefficient at mode {0}")]
    NonFinite(usize),
    #[error("grid of {grid} points cannot represent {modes} modes (need at least {required})")]
    GridTooSmall {
        grid: usize,
        modes: usize,
        required: usize,
    },
    #[error("real coordinate vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Periodic domain `[0, L)` truncated to `N` Fourier modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConfig {
    length: f64,
    modes: usize,
}

impl DomainConfig {
    pub fn new(length: f64, modes: usize) -> Result<Self, SpectralError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(SpectralError::InvalidLength(length));
        }
        if modes == 0 {
            return Err(SpectralError::NoModes);
        }
        Ok(Self { length, modes })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Fundamental wavenumber `q = 2π/L`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Dimension of the real coordinate space, `2N`.
    pub fn dim(&self) -> usize {
        2 * self.modes
    }

    /// Linear growth rate for every real coordinate (each mode appears twice).
    pub fn linear_rates(&self) -> Vec<f64> {
        (1..=self.modes as i64)
            .flat_map(|k| {
                let r = linear_growth_rate(k, self);
                [r, r]
            })
            .collect()
    }
}

/// `k²q² − k⁴q⁴`: the growth rate of mode `k` under the linear KS operator.
pub fn linear_growth_rate(k: i64, dom: &DomainConfig) -> f64 {
    debug_assert!(k.unsigned_abs() as usize <= dom.modes);
    let kq = k as f64 * dom.wavenumber();
    let kq2 = kq * kq;
    kq2 - kq2 * kq2
}

/// Complex coefficients `a_0..=a_N` of a real zero-mean field.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    coeffs: Vec<Complex64>,
}

impl ModalState {
    pub fn zeros(dom: &DomainConfig) -> Self {
        Self {
            coeffs: vec![Complex64::zero(); dom.modes + 1],
        }
    }

    /// Builds a state from `a_0..=a_N`, rejecting a nonzero mean or non-finite entries.
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.len() < 2 {
            return Err(SpectralError::NoModes);
        }
        if coeffs[0] != Complex64::zero() {
            return Err(SpectralError::NonzeroMean(coeffs[0]));
        }
        if let Some(k) = coeffs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(SpectralError::NonFinite(k));
        }
        Ok(Self { coeffs })
    }

    /// Inverse of [`ModalState::to_real`].
    pub fn from_real(y: &[f64]) -> Result<Self, SpectralError> {
        if y.is_empty() || y.len() % 2 != 0 {
            return Err(SpectralError::DimensionMismatch {
                got: y.len(),
                expected: 2 * (y.len() / 2).max(1),
            });
        }
        let mut coeffs = Vec::with_capacity(y.len() / 2 + 1);
        coeffs.push(Complex64::zero());
        coeffs.extend(y.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])));
        Self::from_coeffs(coeffs)
    }

    /// Single sine mode `u = amplitude · sin(kqx)`, i.e. `a_k = −i·amplitude/2`.
    pub fn sine_mode(dom: &DomainConfig, k: usize, amplitude: f64) -> Self {
        let mut s = Self::zeros(dom);
        s.coeffs[k] = Complex64::new(0.0, -0.5 * amplitude);
        s
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient for any `|k| ≤ N`, using the reality condition for `k < 0`.
    pub fn coeff(&self, k: i64) -> Complex64 {
        if k >= 0 {
            self.coeffs[k as usize]
        } else {
            self.coeffs[(-k) as usize].conj()
        }
    }

    pub fn to_real(&self) -> Vec<f64> {
        self.coeffs[1..].iter().flat_map(|c| [c.re, c.im]).collect()
    }

    /// Euclidean norm in real coordinates.
    pub fn norm(&self) -> f64 {
        self.coeffs[1..]
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// True when every coefficient is purely imaginary (an odd field).
    pub fn is_odd(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0)
    }
}

/// Samples of `u(x)` on `M` equispaced points of `[0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    samples: Vec<f64>,
}

impl RealField {
    pub fn new(samples: Vec<f64>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Mode counts up to this use stack scratch in the hot loops.
const STACK_MODES: usize = 64;

/// Runs `f` on zeroed scratch of `2N + 1` complex entries.
fn with_scratch<R>(n: usize, f: impl FnOnce(&mut [Complex64], &mut [Complex64]) -> R) -> R {
    if n <= STACK_MODES {
        let mut a = [Complex64::new(0.0, 0.0); 2 * STACK_MODES + 1];
        let mut b = [Complex64::new(0.0, 0.0); 2 * STACK_MODES + 1];
        f(&mut a[..2 * n + 1], &mut b[..2 * n + 1])
    } else {
        let mut a = vec![Complex64::zero(); 2 * n + 1];
        let mut b = vec![Complex64::zero(); 2 * n + 1];
        f(&mut a, &mut b)
    }
}

/// Conjugate-symmetric coefficient array indexed `j + N` for `j = −N..=N`.
fn full_spectrum(y: &[f64], n: usize, out: &mut [Complex64]) {
    out[n] = Complex64::zero();
    for k in 1..=n {
        let a = Complex64::new(y[2 * k - 2], y[2 * k - 1]);
        out[n + k] = a;
        out[n - k] = a.conj();
    }
}

/// Quadratic term `−(ikq/2) Σ_m a_m a_{k−m}` in real coordinates, with the
/// convolution truncated to `|m|, |k−m| ≤ N`.
pub fn nonlinear_real(y: &[f64], dom: &DomainConfig, out: &mut [f64]) {
    let n = dom.modes;
    let q = dom.wavenumber();
    with_scratch(n, |f, _| {
        full_spectrum(y, n, f);
        for k in 1..=n {
            // Pair (m, k−m) with m > k−m, then add the diagonal term.
            let mut s = Complex64::zero();
            for m in (k / 2 + 1)..=n {
                s += f[n + m] * f[n + k - m];
            }
            s *= 2.0;
            if k % 2 == 0 {
                let h = f[n + k / 2];
                s += h * h;
            }
            let v = Complex64::new(0.0, -0.5 * k as f64 * q) * s;
            out[2 * k - 2] = v.re;
            out[2 * k - 1] = v.im;
        }
    })
}

/// Full Galerkin right-hand side in real coordinates.
pub fn ks_rhs_real(y: &[f64], dom: &DomainConfig, out: &mut [f64]) {
    nonlinear_real(y, dom, out);
    for k in 1..=dom.modes {
        let r = linear_growth_rate(k as i64, dom);
        out[2 * k - 2] += r * y[2 * k - 2];
        out[2 * k - 1] += r * y[2 * k - 1];
    }
}

/// Tangent vector `ȧ_k = (k²q²−k⁴q⁴) a_k − (ikq/2) Σ_m a_m a_{k−m}`.
pub fn ks_rhs(state: &ModalState, dom: &DomainConfig) -> ModalState {
    let y = state.to_real();
    let mut out = vec![0.0; y.len()];
    ks_rhs_real(&y, dom, &mut out);
    let mut coeffs = Vec::with_capacity(dom.modes + 1);
    coeffs.push(Complex64::zero());
    coeffs.extend(out.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])));
    ModalState { coeffs }
}

/// Action of the linearized quadratic term, `−ikq Σ_m a_m v_{k−m}`.
pub fn nonlinear_jacobian_action(y: &[f64], v: &[f64], dom: &DomainConfig, out: &mut [f64]) {
    let n = dom.modes;
    let q = dom.wavenumber();
    with_scratch(n, |a, w| {
        full_spectrum(y, n, a);
        full_spectrum(v, n, w);
        for k in 1..=n {
            // Σ_m a_m w_{k−m} for m = k−N..=N; index n+m and n+k−m.
            let mut s = Complex64::zero();
            for m in 0..=(2 * n - k) {
                s += a[k + m] * w[2 * n - m];
            }
            let r = Complex64::new(0.0, -(k as f64) * q) * s;
            out[2 * k - 2] = r.re;
            out[2 * k - 1] = r.im;
        }
    })
}

/// Transpose (in real coordinates) of [`nonlinear_jacobian_action`]:
/// `(Cᵀψ)_j = Σ_k ikq ψ_k a_{j−k}`, the Galerkin form of `u ψ_x`.
pub fn nonlinear_jacobian_transpose_action(
    y: &[f64],
    psi: &[f64],
    dom: &DomainConfig,
    out: &mut [f64],
) {
    let n = dom.modes;
    let q = dom.wavenumber();
    with_scratch(n, |a, p| {
        full_spectrum(y, n, a);
        full_spectrum(psi, n, p);
        // Pre-scale ψ_k by ikq.
        for (i, pk) in p.iter_mut().enumerate() {
            *pk *= Complex64::new(0.0, (i as f64 - n as f64) * q);
        }
        for j in 1..=n {
            // Σ_k p_k a_{j−k} for k = j−N..=N; index n+k and n+j−k.
            let mut s = Complex64::zero();
            for m in 0..=(2 * n - j) {
                s += p[j + m] * a[2 * n - m];
            }
            out[2 * j - 2] = s.re;
            out[2 * j - 1] = s.im;
        }
    })
}

/// `∂_x` in real coordinates: `a_k ↦ ikq a_k`. The generator of translations.
pub fn translation_generator(y: &[f64], dom: &DomainConfig) -> Vec<f64> {
    let q = dom.wavenumber();
    let mut out = vec![0.0; y.len()];
    for k in 1..=dom.modes {
        let kq = k as f64 * q;
        out[2 * k - 2] = -kq * y[2 * k - 1];
        out[2 * k - 1] = kq * y[2 * k - 2];
    }
    out
}

/// Translate `u(x) ↦ u(x + shift)` in real coordinates.
pub fn translate_real(y: &[f64], shift: f64, dom: &DomainConfig) -> Vec<f64> {
    let q = dom.wavenumber();
    let mut out = vec![0.0; y.len()];
    for k in 1..=dom.modes {
        let a = Complex64::new(y[2 * k - 2], y[2 * k - 1]);
        let r = a * polar(1.0, k as f64 * q * shift);
        out[2 * k - 2] = r.re;
        out[2 * k - 1] = r.im;
    }
    out
}

pub fn translate(state: &ModalState, shift: f64, dom: &DomainConfig) -> ModalState {
    ModalState::from_real(&translate_real(&state.to_real(), shift, dom))
        .expect("translation preserves a valid state")
}

/// Distance from `y` to the translation group orbit of `anchor`.
///
/// Returns `(min_s ‖y − τ_s anchor‖, s)`. The overlap `Σ_k Re(conj(y_k) b_k e^{ikqs})`
/// is scanned on `8N` shifts per period and refined with Newton steps.
pub fn translation_distance(y: &[f64], anchor: &[f64], dom: &DomainConfig) -> (f64, f64) {
    let n = dom.modes;
    let q = dom.wavenumber();
    let l = dom.length;
    let cross: Vec<Complex64> = (1..=n)
        .map(|k| {
            Complex64::new(y[2 * k - 2], y[2 * k - 1]).conj()
                * Complex64::new(anchor[2 * k - 2], anchor[2 * k - 1])
        })
        .collect();
    let overlap = |s: f64| -> (f64, f64, f64) {
        let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
        let w = polar(1.0, q * s);
        let mut wk = w;
        for (i, c) in cross.iter().enumerate() {
            let kq = (i + 1) as f64 * q;
            let z = *c * wk;
            p += z.re;
            dp -= kq * z.im;
            ddp -= kq * kq * z.re;
            wk *= w;
        }
        (p, dp, ddp)
    };
    let grid = 8 * n;
    let mut best_s = 0.0;
    let mut best_p = f64::NEG_INFINITY;
    for i in 0..grid {
        let s = l * i as f64 / grid as f64;
        let (p, _, _) = overlap(s);
        if p > best_p {
            best_p = p;
            best_s = s;
        }
    }
    let h = l / grid as f64;
    let mut s = best_s;
    for _ in 0..8 {
        let (_, dp, ddp) = overlap(s);
        if ddp >= 0.0 {
            break;
        }
        let step = -dp / ddp;
        if step.abs() > h {
            break;
        }
        s += step;
        if step.abs() < 1e-15 * l {
            break;
        }
    }
    let (p, _, _) = overlap(s);
    if p < best_p {
        s = best_s;
    }
    let shifted = translate_real(anchor, s, dom);
    let d2: f64 = y
        .iter()
        .zip(&shifted)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let s = s % l;
    (d2.sqrt(), if s < 0.0 { s + l } else { s })
}

/// Synthesizes `u(x_j)` on `m` equispaced points.
pub fn to_physical(state: &ModalState, m: usize, dom: &DomainConfig) -> Result<RealField, SpectralError> {
    let n = state.modes();
    let required = 2 * n + 2;
    if m < required {
        return Err(SpectralError::GridTooSmall {
            grid: m,
            modes: n,
            required,
        });
    }
    let _ = dom;
    let samples = (0..m)
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / m as f64;
            state.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, a)| 2.0 * (*a * polar(1.0, (i + 1) as f64 * theta)).re)
                .sum()
        })
        .collect();
    Ok(RealField { samples })
}

/// Projects equispaced samples onto modes `1..=N` by a direct DFT.
pub fn from_physical(field: &RealField, dom: &DomainConfig) -> Result<ModalState, SpectralError> {
    let n = dom.modes;
    let m = field.len();
    if m < 2 * n + 1 {
        return Err(SpectralError::GridTooSmall {
            grid: m,
            modes: n,
            required: 2 * n + 1,
        });
    }
    let scale = 1.0 / m as f64;
    let mean = field.samples.iter().sum::<f64>() * scale;
    let peak = field.samples.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if mean.abs() > 1e-12 * peak.max(1.0) {
        return Err(SpectralError::NonzeroMean(Complex64::new(mean, 0.0)));
    }
    let mut coeffs = vec![Complex64::zero(); n + 1];
    for (k, c) in coeffs.iter_mut().enumerate().skip(1) {
        *c = field
            .samples
            .iter()
            .enumerate()
            .map(|(j, u)| {
                let theta = -2.0 * PI * (k * j % m) as f64 / m as f64;
                polar(*u, theta)
            })
            .sum::<Complex64>()
            * scale;
    }
    ModalState::from_coeffs(coeffs)
}

/// Two-mode projection used by the phase portraits: `(2|a_1|, 2|a_2|)`.
///
/// These are the real amplitudes of the first two harmonics. They are
/// invariant under translation, so an orbit joining two translates of the
/// same equilibrium closes into a loop.
pub fn project_modes(state: &ModalState) -> (f64, f64) {
    let c = state.coeffs();
    let amp = |k: usize| if k < c.len() { 2.0 * cabs(c[k]) } else { 0.0 };
    (amp(1), amp(2))
}

/// [`project_modes`] on real coordinates.
pub fn project_modes_real(y: &[f64]) -> (f64, f64) {
    let amp = |k: usize| {
        if 2 * k <= y.len() {
            2.0 * y[2 * k - 2].hypot(y[2 * k - 1])
        } else {
            0.0
        }
    };
    (amp(1), amp(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dom22() -> DomainConfig {
        DomainConfig::new(22.0, 32).unwrap()
    }

    fn state_from(dom: &DomainConfig, re: &[f64], im: &[f64]) -> ModalState {
        let mut c = vec![Complex64::zero(); dom.modes() + 1];
        for k in 1..=dom.modes() {
            c[k] = Complex64::new(re[k - 1], im[k - 1]);
        }
        ModalState::from_coeffs(c).unwrap()
    }

    /// Smooth random states: amplitude decays like e^{-k/3} so high modes stay small.
    fn smooth_state() -> impl Strategy<Value = ModalState> {
        (
            proptest::collection::vec(-1.0f64..1.0, 32),
            proptest::collection::vec(-1.0f64..1.0, 32),
        )
            .prop_map(|(re, im)| {
                let d = dom22();
                let w: Vec<f64> = (1..=32).map(|k| (-(k as f64) / 3.0).exp()).collect();
                let re: Vec<f64> = re.iter().zip(&w).map(|(a, b)| a * b).collect();
                let im: Vec<f64> = im.iter().zip(&w).map(|(a, b)| a * b).collect();
                state_from(&d, &re, &im)
            })
    }

    /// Pseudo-spectral tendency on a 4N grid: synthesize u and its derivatives,
    /// form −u_xx − u_xxxx − u·u_x pointwise and project back.
    fn pseudo_spectral_rhs(s: &ModalState, dom: &DomainConfig) -> ModalState {
        let n = dom.modes();
        let m = 4 * n;
        let q = dom.wavenumber();
        let synth = |f: &dyn Fn(usize) -> Complex64| -> Vec<f64> {
            (0..m)
                .map(|j| {
                    let theta = 2.0 * PI * j as f64 / m as f64;
                    (1..=n)
                        .map(|k| 2.0 * (f(k) * polar(1.0, k as f64 * theta)).re)
                        .sum()
                })
                .collect()
        };
        let c = s.coeffs();
        let u = synth(&|k| c[k]);
        let ux = synth(&|k| c[k] * Complex64::new(0.0, k as f64 * q));
        let uxx = synth(&|k| c[k] * -(k as f64 * q).powi(2));
        let uxxxx = synth(&|k| c[k] * (k as f64 * q).powi(4));
        let tend: Vec<f64> = (0..m).map(|j| -uxx[j] - uxxxx[j] - u[j] * ux[j]).collect();
        let mut out = vec![Complex64::zero(); n + 1];
        for k in 1..=n {
            out[k] = (0..m)
                .map(|j| polar(tend[j], -2.0 * PI * (k * j) as f64 / m as f64))
                .sum::<Complex64>()
                / m as f64;
        }
        ModalState::from_coeffs(out).unwrap()
    }

    fn rel_diff(a: &ModalState, b: &ModalState) -> f64 {
        let num: f64 = a
            .coeffs()
            .iter()
            .zip(b.coeffs())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        num / b.norm().max(1e-300)
    }

    #[test]
    fn growth_rate_examples() {
        let d = dom22();
        assert_eq!(linear_growth_rate(0, &d), 0.0);
        let q = 2.0 * PI / 22.0;
        let expected = q * q - q.powi(4);
        assert!((linear_growth_rate(1, &d) - expected).abs() < 1e-15);
        assert!((linear_growth_rate(1, &d) - 0.0749138).abs() < 1e-6);
        assert!(linear_growth_rate(4, &d) < 0.0);
        assert!(linear_growth_rate(3, &d) > 0.0);
    }

    #[test]
    fn domain_validation() {
        assert!(DomainConfig::new(0.0, 4).is_err());
        assert!(DomainConfig::new(-1.0, 4).is_err());
        assert!(DomainConfig::new(f64::NAN, 4).is_err());
        assert_eq!(DomainConfig::new(1.0, 0), Err(SpectralError::NoModes));
        let d = DomainConfig::new(22.0, 8).unwrap();
        assert_eq!(d.wavenumber(), 2.0 * PI / 22.0);
        assert_eq!(d.dim(), 16);
    }

    #[test]
    fn state_rejects_mean_and_nan() {
        let c = vec![Complex64::new(0.1, 0.0), Complex64::new(1.0, 0.0)];
        assert!(matches!(ModalState::from_coeffs(c), Err(SpectralError::NonzeroMean(_))));
        let c = vec![Complex64::zero(), Complex64::new(f64::NAN, 0.0)];
        assert_eq!(ModalState::from_coeffs(c), Err(SpectralError::NonFinite(1)));
    }

    #[test]
    fn rhs_of_zero_is_zero() {
        let d = dom22();
        let r = ks_rhs(&ModalState::zeros(&d), &d);
        assert!(r.coeffs().iter().all(|c| *c == Complex64::zero()));
    }

    #[test]
    fn rhs_single_mode_hand_expansion() {
        let d = dom22();
        let q = d.wavenumber();
        let c = Complex64::new(0.3, -0.7);
        let mut s = ModalState::zeros(&d);
        s.coeffs[1] = c;
        let r = ks_rhs(&s, &d);
        let expect1 = c * (q * q - q.powi(4));
        let expect2 = Complex64::new(0.0, -q) * c * c;
        assert!((r.coeffs()[1] - expect1).norm() < 1e-15);
        assert!((r.coeffs()[2] - expect2).norm() < 1e-15);
        for k in 3..=32 {
            assert_eq!(r.coeffs()[k], Complex64::zero(), "mode {k}");
        }
    }

    #[test]
    fn sine_convention_and_grid_checks() {
        let d = dom22();
        let s = ModalState::sine_mode(&d, 1, 1.0);
        assert_eq!(s.coeffs()[1], Complex64::new(0.0, -0.5));
        let f = to_physical(&s, 128, &d).unwrap();
        let q = d.wavenumber();
        for (j, u) in f.samples().iter().enumerate() {
            let x = 22.0 * j as f64 / 128.0;
            assert!((u - (q * x).sin()).abs() < 1e-13);
        }
        let z = to_physical(&ModalState::zeros(&d), 66, &d).unwrap();
        assert!(z.samples().iter().all(|u| *u == 0.0));
        assert!(matches!(to_physical(&s, 65, &d), Err(SpectralError::GridTooSmall { .. })));
        let short = RealField::new(vec![0.0; 64]);
        assert!(matches!(from_physical(&short, &d), Err(SpectralError::GridTooSmall { .. })));
    }

    #[test]
    fn projection_examples() {
        let d = dom22();
        assert_eq!(project_modes(&ModalState::zeros(&d)), (0.0, 0.0));
        let (m1, m2) = project_modes(&ModalState::sine_mode(&d, 1, 1.0));
        assert!((m1 - 1.0).abs() < 1e-15);
        assert_eq!(m2, 0.0);
    }

    #[test]
    fn translation_distance_recovers_shift() {
        let d = dom22();
        let y: Vec<f64> = (0..64).map(|i| ((i * 7 % 11) as f64 - 5.0) * (-(i as f64) / 10.0).exp()).collect();
        let shifted = translate_real(&y, 3.7, &d);
        let (dist, s) = translation_distance(&shifted, &y, &d);
        assert!(dist < 1e-10, "dist {dist}");
        assert!((s - 3.7).abs() < 1e-8, "shift {s}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn zero_mean_and_odd_subspace(im in proptest::collection::vec(-1.0f64..1.0, 32)) {
            let d = dom22();
            let s = state_from(&d, &[0.0; 32], &im);
            let r = ks_rhs(&s, &d);
            prop_assert_eq!(r.coeffs()[0], Complex64::zero());
            prop_assert!(r.is_odd());
        }

        #[test]
        fn matches_dealiased_pseudo_spectral(s in smooth_state()) {
            let d = dom22();
            let exact = ks_rhs(&s, &d);
            let oracle = pseudo_spectral_rhs(&s, &d);
            prop_assert!(rel_diff(&exact, &oracle) < 1e-10, "rel {}", rel_diff(&exact, &oracle));
        }

        #[test]
        fn energy_balance(s in smooth_state()) {
            let d = dom22();
            let r = ks_rhs(&s, &d);
            // The quadratic term conserves E = Σ_{k≥1}|a_k|², so dE/dt is purely linear.
            let de: f64 = (1..=32).map(|k| 2.0 * (s.coeffs()[k].conj() * r.coeffs()[k]).re).sum();
            let lin: f64 = (1..=32).map(|k| 2.0 * linear_growth_rate(k as i64, &d) * s.coeffs()[k].norm_sqr()).sum();
            let scale: f64 = (1..=32).map(|k| linear_growth_rate(k as i64, &d).abs() * s.coeffs()[k].norm_sqr()).sum();
            prop_assert!((de - lin).abs() <= 1e-10 * scale, "residual {}", de - lin);
        }

        #[test]
        fn physical_round_trip(s in smooth_state()) {
            let d = dom22();
            let f = to_physical(&s, 128, &d).unwrap();
            let back = from_physical(&f, &d).unwrap();
            prop_assert!(rel_diff(&back, &s) < 1e-12);
        }

        #[test]
        fn real_coordinates_round_trip(s in smooth_state()) {
            let back = ModalState::from_real(&s.to_real()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn transpose_action_is_adjoint(s in smooth_state(), v in smooth_state(), p in smooth_state()) {
            let d = dom22();
            let y = s.to_real();
            let mut cv = vec![0.0; 64];
            let mut ctp = vec![0.0; 64];
            nonlinear_jacobian_action(&y, &v.to_real(), &d, &mut cv);
            nonlinear_jacobian_transpose_action(&y, &p.to_real(), &d, &mut ctp);
            let lhs: f64 = p.to_real().iter().zip(&cv).map(|(a, b)| a * b).sum();
            let rhs: f64 = ctp.iter().zip(v.to_real()).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
