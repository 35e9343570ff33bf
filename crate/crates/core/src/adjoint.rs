//! Bounded adjoint solutions along an orbit and the Melnikov integrals built
//! from them.
//!
//! The adjoint `ψ̇ = −J(t)ᵀψ` is solved backward from the orbit's end, where
//! `ψ` starts on the left eigenvector of the leading eigenvalue at the end
//! equilibrium. In `s = t_end − t` this is `dψ/ds = Λψ + N'(a_h)ᵀψ`, which has
//! the same stiff diagonal as the forward flow and is stepped with ETDRK4.
//!
//! A bounded adjoint on a homoclinic or heteroclinic orbit is orthogonal to
//! `ȧ_h` (the pairing is conserved and `ȧ_h → 0` at both ends), so it is
//! normalized to unit norm at `t = 0` by default. [`Normalization::Pairing`]
//! asks for `⟨ψ(0), ȧ_h(0)⟩ = 1` and reports [`AdjointError::DegeneratePairing`]
//! when that pairing vanishes.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
#[allow(unused_imports)] // float methods come from here without std
use crate::math::{cabs, Real};
use thiserror::Error;

use crate::equilibria::left_eigen_analysis;
use crate::homoclinic::{FlowModel, OrbitTrajectory};
use crate::integrators::{
    etdrk4_integrate, IntegrationConfig, IntegrationError, SampledPath, SemilinearSystem,
};
use crate::spectral::DomainConfig;

/// Cosine between `ψ(0)` and `ȧ_h(0)` below which the pairing counts as zero.
pub const DEGENERATE_COSINE: f64 = 1e-8;

/// Amplitude below which a periodic Melnikov function is treated as zero.
pub const TRANSVERSALITY_TOL: f64 = 1e-12;

/// Samples of `M(t0)` taken over one forcing period.
pub const PHASE_SAMPLES: usize = 128;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdjointError {
    #[error("⟨ψ(0), ȧ_h(0)⟩ = {pairing:e} (cosine {cosine:e}) cannot be normalized to 1")]
    DegeneratePairing { pairing: f64, cosine: f64 },
    #[error("t = {t} is outside the orbit [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("forcing profile has {got} coordinates, expected {expected}")]
    ForcingDimension { got: usize, expected: usize },
    #[error("forcing profile entry {0} is not finite")]
    ForcingNonFinite(usize),
    #[error("frequency must be finite and non-negative, got {0}")]
    InvalidFrequency(f64),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    /// `‖ψ(0)‖ = 1`.
    UnitNorm,
    /// `⟨ψ(0), ȧ_h(0)⟩ = 1`.
    Pairing,
}

impl Normalization {
    pub fn name(&self) -> &'static str {
        match self {
            Normalization::UnitNorm => "unit-norm",
            Normalization::Pairing => "pairing",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "unit-norm" => Some(Normalization::UnitNorm),
            "pairing" => Some(Normalization::Pairing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointConfig {
    /// Step and sample stride; the horizon is replaced by the orbit duration.
    pub integration: IntegrationConfig,
    pub normalization: Normalization,
}

/// `ψ(t)` on the orbit's time range.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub path: SampledPath,
    pub normalization: Normalization,
    /// Factor applied to the raw backward solution.
    pub scale: f64,
    /// Eigenvalue whose left eigenvector started the backward solve.
    pub terminal_eigenvalue: Complex64,
    /// `⟨ψ(t_i), ȧ_h(t_i)⟩` at every sample.
    pub pairing: Vec<f64>,
    /// `max |⟨ψ, ȧ_h⟩ − 1|` under pairing normalization, otherwise the drift
    /// `max |⟨ψ(t), ȧ_h(t)⟩ − ⟨ψ(0), ȧ_h(0)⟩|`.
    pub normalization_residual: f64,
}

impl AdjointTrajectory {
    pub fn norms(&self) -> Vec<f64> {
        (0..self.path.len()).map(|i| norm(self.path.state(i))).collect()
    }

    pub fn t_start(&self) -> f64 {
        self.path.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.path.t_end()
    }
}

/// Jacobian at `a_h(t)`. With `clamp`, times outside the orbit use the
/// equilibrium the orbit leaves or approaches.
pub fn jacobian_on_orbit<M: FlowModel + ?Sized>(
    model: &M,
    orbit: &OrbitTrajectory,
    t: f64,
    clamp: bool,
) -> Result<DMatrix<f64>, AdjointError> {
    let (start, end) = (orbit.t_start(), orbit.t_end());
    if t < start || t > end {
        if !clamp {
            return Err(AdjointError::OutOfRange { t, start, end });
        }
        let anchor = if t < start { &orbit.steady } else { &orbit.end_equilibrium };
        return Ok(model.dense_jacobian(anchor));
    }
    Ok(model.dense_jacobian(&orbit.path.interpolate(t)?))
}

struct BackwardAdjoint<'a, M: ?Sized> {
    model: &'a M,
    orbit: &'a SampledPath,
    pivot: f64,
}

impl<M: FlowModel + ?Sized> SemilinearSystem for BackwardAdjoint<'_, M> {
    fn linear(&self) -> &[f64] {
        self.model.linear()
    }

    fn nonlinear(&self, s: f64, psi: &[f64], out: &mut [f64]) {
        let t = (self.pivot - s).clamp(self.orbit.t_start(), self.orbit.t_end());
        let mut a = vec![0.0; psi.len()];
        match self.orbit.interpolate_into(t, &mut a) {
            Ok(()) => self.model.jacobian_nonlinear_transpose_action(&a, psi, out),
            Err(_) => out.fill(f64::NAN),
        }
    }
}

struct ForwardVariational<'a, M: ?Sized> {
    model: &'a M,
    orbit: &'a SampledPath,
}

impl<M: FlowModel + ?Sized> SemilinearSystem for ForwardVariational<'_, M> {
    fn linear(&self) -> &[f64] {
        self.model.linear()
    }

    fn nonlinear(&self, t: f64, v: &[f64], out: &mut [f64]) {
        let t = t.clamp(self.orbit.t_start(), self.orbit.t_end());
        let mut a = vec![0.0; v.len()];
        match self.orbit.interpolate_into(t, &mut a) {
            Ok(()) => self.model.jacobian_nonlinear_action(&a, v, out),
            Err(_) => out.fill(f64::NAN),
        }
    }
}

/// Real unit vector from the left eigenvector of the leading eigenvalue at
/// the end equilibrium, phased so its largest entry is real.
pub fn terminal_adjoint<M: FlowModel + ?Sized>(model: &M, end: &[f64]) -> (Complex64, Vec<f64>) {
    let sd = left_eigen_analysis(&model.dense_jacobian(end));
    let w = &sd.eigenvectors[0];
    let pivot = w
        .iter()
        .copied()
        .fold(Complex64::new(0.0, 0.0), |a, b| if cabs(b) > cabs(a) { b } else { a });
    let phase = if cabs(pivot) > 0.0 { pivot.conj() / cabs(pivot) } else { Complex64::new(1.0, 0.0) };
    let mut v: Vec<f64> = w.iter().map(|c| (c * phase).re).collect();
    let n = norm(&v);
    for x in &mut v {
        *x /= n;
    }
    (sd.eigenvalues[0], v)
}

/// Solves the adjoint backward over the whole orbit.
pub fn adjoint_solve<M: FlowModel + ?Sized>(
    model: &M,
    orbit: &OrbitTrajectory,
    cfg: &AdjointConfig,
) -> Result<AdjointTrajectory, AdjointError> {
    let (t0, t1) = (orbit.t_start(), orbit.t_end());
    let (eigenvalue, psi_end) = terminal_adjoint(model, &orbit.end_equilibrium);
    let sys = BackwardAdjoint {
        model,
        orbit: &orbit.path,
        pivot: t1,
    };
    let icfg = cfg.integration.with_horizon(t1 - t0)?;
    let mut path = etdrk4_integrate(&sys, &psi_end, 0.0, &icfg)?;
    path.reflect_time(t1);

    let t_ref = 0.0f64.clamp(t0, t1);
    let psi_ref = path.interpolate(t_ref)?;
    let adot_ref = orbit.path.interpolate_derivative(t_ref)?;
    let scale = match cfg.normalization {
        Normalization::UnitNorm => 1.0 / norm(&psi_ref),
        Normalization::Pairing => {
            let p = dot(&psi_ref, &adot_ref);
            let cosine = p.abs() / (norm(&psi_ref) * norm(&adot_ref));
            if !(cosine >= DEGENERATE_COSINE) {
                return Err(AdjointError::DegeneratePairing { pairing: p, cosine });
            }
            1.0 / p
        }
    };
    let path = scaled(&path, scale);

    let mut pairing = Vec::with_capacity(path.len());
    for i in 0..path.len() {
        let adot = orbit.path.interpolate_derivative(path.times()[i].clamp(t0, t1))?;
        pairing.push(dot(path.state(i), &adot));
    }
    let target = match cfg.normalization {
        Normalization::Pairing => 1.0,
        Normalization::UnitNorm => dot(&path.interpolate(t_ref)?, &adot_ref),
    };
    let normalization_residual = pairing.iter().fold(0.0f64, |m, p| m.max((p - target).abs()));
    Ok(AdjointTrajectory {
        path,
        normalization: cfg.normalization,
        scale,
        terminal_eigenvalue: eigenvalue,
        pairing,
        normalization_residual,
    })
}

fn scaled(path: &SampledPath, c: f64) -> SampledPath {
    let mut out = SampledPath::new(path.dim());
    for i in 0..path.len() {
        let y: Vec<f64> = path.state(i).iter().map(|v| c * v).collect();
        let dy: Vec<f64> = path.deriv(i).iter().map(|v| c * v).collect();
        out.push(path.times()[i], &y, &dy);
    }
    out
}

/// Forward solution of `v̇ = J(t)v` from `v0` at the orbit's start.
pub fn variational_solve<M: FlowModel + ?Sized>(
    model: &M,
    orbit: &OrbitTrajectory,
    v0: &[f64],
    integration: &IntegrationConfig,
) -> Result<SampledPath, AdjointError> {
    let sys = ForwardVariational {
        model,
        orbit: &orbit.path,
    };
    let cfg = integration.with_horizon(orbit.t_end() - orbit.t_start())?;
    Ok(etdrk4_integrate(&sys, v0, orbit.t_start(), &cfg)?)
}

/// Conservation of `⟨ψ(t), v(t)⟩` for a forward variational solution `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingCheck {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `max |p(t) − p(t_start)|` over `max ‖ψ(t)‖‖v(t)‖`, the size of the
    /// terms the pairing sums.
    pub relative_drift: f64,
}

/// Pairs `ψ` with the variational solution started from `ψ(t_start)` itself,
/// so the conserved value is `‖ψ(t_start)‖² > 0`.
pub fn pairing_check<M: FlowModel + ?Sized>(
    model: &M,
    orbit: &OrbitTrajectory,
    adjoint: &AdjointTrajectory,
    integration: &IntegrationConfig,
) -> Result<PairingCheck, AdjointError> {
    let v0 = adjoint.path.state(0).to_vec();
    let v = variational_solve(model, orbit, &v0, integration)?;
    let (a0, a1) = (adjoint.t_start(), adjoint.t_end());
    let mut times = Vec::with_capacity(v.len());
    let mut values = Vec::with_capacity(v.len());
    let mut scale = 0.0f64;
    for i in 0..v.len() {
        let t = v.times()[i].clamp(a0, a1);
        let psi = adjoint.path.interpolate(t)?;
        scale = scale.max(norm(&psi) * norm(v.state(i)));
        values.push(dot(&psi, v.state(i)));
        times.push(v.times()[i]);
    }
    let p0 = values[0];
    let relative_drift = values.iter().fold(0.0f64, |m, p| m.max((p - p0).abs())) / scale;
    Ok(PairingCheck {
        times,
        values,
        relative_drift,
    })
}

/// Spatial forcing profile `G(x)` in real Galerkin coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingProfile {
    pub modal_g: Vec<f64>,
    pub description: String,
}

impl ForcingProfile {
    pub fn new(modal_g: Vec<f64>, description: &str) -> Result<Self, AdjointError> {
        if let Some(i) = modal_g.iter().position(|v| !v.is_finite()) {
            return Err(AdjointError::ForcingNonFinite(i));
        }
        Ok(Self {
            modal_g,
            description: description.into(),
        })
    }

    /// `G(x) = sin(kqx)`, i.e. `a_k = −i/2`.
    pub fn sine_mode(dom: &DomainConfig, k: usize) -> Self {
        let mut g = vec![0.0; dom.dim()];
        if (1..=dom.modes()).contains(&k) {
            g[2 * (k - 1) + 1] = -0.5;
        }
        Self {
            modal_g: g,
            description: alloc::format!("sin({k}qx)"),
        }
    }

    /// `G(x) = cos(kqx)`, i.e. `a_k = 1/2`.
    pub fn cosine_mode(dom: &DomainConfig, k: usize) -> Self {
        let mut g = vec![0.0; dom.dim()];
        if (1..=dom.modes()).contains(&k) {
            g[2 * (k - 1)] = 0.5;
        }
        Self {
            modal_g: g,
            description: alloc::format!("cos({k}qx)"),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<(), AdjointError> {
        if self.modal_g.len() != dim {
            return Err(AdjointError::ForcingDimension {
                got: self.modal_g.len(),
                expected: dim,
            });
        }
        Ok(())
    }
}

/// Composite Simpson rule on arbitrary increasing nodes; exact for quadratics.
/// An odd number of intervals closes with the quadratic through the last
/// three nodes.
pub fn simpson(t: &[f64], f: &[f64]) -> f64 {
    let n = t.len();
    match n {
        0 | 1 => return 0.0,
        2 => return 0.5 * (t[1] - t[0]) * (f[0] + f[1]),
        _ => {}
    }
    let intervals = n - 1;
    let mut s = 0.0;
    let mut i = 0;
    while i + 2 < n && (intervals % 2 == 0 || i + 3 < n) {
        let (h0, h1) = (t[i + 1] - t[i], t[i + 2] - t[i + 1]);
        let hs = h0 + h1;
        s += hs / 6.0
            * ((2.0 - h1 / h0) * f[i] + hs * hs / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]);
        i += 2;
    }
    if intervals % 2 == 1 {
        let (h0, h1) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
        let alpha = (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1));
        let beta = (h1 * h1 + 3.0 * h1 * h0) / (6.0 * h0);
        let eta = h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
        s += alpha * f[n - 1] + beta * f[n - 2] - eta * f[n - 3];
    }
    s
}

/// `M(t0) = ∫ ⟨ψ(t), F(t + t0)⟩ dt` over the adjoint's samples.
pub fn melnikov_general<F>(adjoint: &AdjointTrajectory, forcing: F, t0: f64) -> f64
where
    F: Fn(f64, &mut [f64]),
{
    let p = &adjoint.path;
    let mut g = vec![0.0; p.dim()];
    let vals: Vec<f64> = (0..p.len())
        .map(|i| {
            forcing(p.times()[i] + t0, &mut g);
            dot(p.state(i), &g)
        })
        .collect();
    simpson(p.times(), &vals)
}

/// `⟨ψ(t_i), G⟩` at every adjoint sample.
pub fn projected_forcing(adjoint: &AdjointTrajectory, g: &ForcingProfile) -> Result<Vec<f64>, AdjointError> {
    g.check_dim(adjoint.path.dim())?;
    Ok((0..adjoint.path.len()).map(|i| dot(adjoint.path.state(i), &g.modal_g)).collect())
}

/// `A = ∫ cos(ωt)⟨ψ, G⟩dt`, `B = −∫ sin(ωt)⟨ψ, G⟩dt`.
pub fn melnikov_coefficients(adjoint: &AdjointTrajectory, g: &ForcingProfile, omega: f64) -> Result<(f64, f64), AdjointError> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(AdjointError::InvalidFrequency(omega));
    }
    let p = projected_forcing(adjoint, g)?;
    let t = adjoint.path.times();
    let c: Vec<f64> = t.iter().zip(&p).map(|(t, p)| (omega * t).cos() * p).collect();
    let s: Vec<f64> = t.iter().zip(&p).map(|(t, p)| -(omega * t).sin() * p).collect();
    Ok((simpson(t, &c), simpson(t, &s)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelnikovZero {
    pub t0: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelnikovResult {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub amplitude: f64,
    /// `(t0, M(t0))` from direct quadrature over one period.
    pub samples: Vec<(f64, f64)>,
    /// Analytic zeros in `[0, 2π/ω)`, ascending.
    pub zeros: Vec<MelnikovZero>,
}

impl MelnikovResult {
    pub fn from_coefficients(omega: f64, a: f64, b: f64) -> Self {
        let amplitude = a.hypot(b);
        Self {
            omega,
            a,
            b,
            amplitude,
            samples: Vec::new(),
            zeros: harmonic_zeros(omega, a, b),
        }
    }

    pub fn harmonic(&self, t0: f64) -> f64 {
        self.a * (self.omega * t0).cos() + self.b * (self.omega * t0).sin()
    }

    /// Largest `|M(t0) − (A cos ωt0 + B sin ωt0)|` over the samples.
    pub fn harmonic_residual(&self) -> f64 {
        self.samples
            .iter()
            .fold(0.0f64, |m, (t0, v)| m.max((v - self.harmonic(*t0)).abs()))
    }

    /// Length of the phase interval the samples and zeros cover.
    pub fn period(&self) -> f64 {
        phase_period(self.omega)
    }
}

fn phase_period(omega: f64) -> f64 {
    if omega > 0.0 {
        2.0 * PI / omega
    } else {
        2.0 * PI
    }
}

/// Zeros of `A cos ωt0 + B sin ωt0` in `[0, 2π/ω)` with slopes `dM/dt0`.
/// There are none when `ω = 0` or the amplitude is below [`TRANSVERSALITY_TOL`].
pub fn harmonic_zeros(omega: f64, a: f64, b: f64) -> Vec<MelnikovZero> {
    if !(omega > 0.0) || a.hypot(b) <= TRANSVERSALITY_TOL {
        return Vec::new();
    }
    // A cos θ + B sin θ = R cos(θ − φ) vanishes at θ = φ + π/2 + nπ.
    let phi = b.atan2(a);
    let mut zeros: Vec<MelnikovZero> = (0..2)
        .map(|n| {
            let mut theta = (phi + PI / 2.0 + n as f64 * PI) % (2.0 * PI);
            if theta < 0.0 {
                theta += 2.0 * PI;
            }
            let t0 = theta / omega;
            let slope = -a * omega * theta.sin() + b * omega * theta.cos();
            MelnikovZero { t0, slope }
        })
        .collect();
    zeros.sort_by(|x, y| x.t0.partial_cmp(&y.t0).unwrap_or(core::cmp::Ordering::Equal));
    zeros
}

/// Melnikov function for `F(t) = G cos(ωt)`: coefficients, analytic zeros and
/// [`PHASE_SAMPLES`] direct-quadrature samples over one period.
pub fn melnikov_periodic(adjoint: &AdjointTrajectory, g: &ForcingProfile, omega: f64) -> Result<MelnikovResult, AdjointError> {
    let (a, b) = melnikov_coefficients(adjoint, g, omega)?;
    let mut result = MelnikovResult::from_coefficients(omega, a, b);
    let period = result.period();
    result.samples = (0..PHASE_SAMPLES)
        .map(|i| {
            let t0 = period * i as f64 / PHASE_SAMPLES as f64;
            (t0, periodic_value(adjoint, g, omega, t0))
        })
        .collect();
    Ok(result)
}

/// `M(t0)` for `F(t) = G cos(ωt)` by direct quadrature.
pub fn periodic_value(adjoint: &AdjointTrajectory, g: &ForcingProfile, omega: f64, t0: f64) -> f64 {
    melnikov_general(
        adjoint,
        |t, out: &mut [f64]| {
            let c = (omega * t).cos();
            for (o, gi) in out.iter_mut().zip(&g.modal_g) {
                *o = c * gi;
            }
        },
        t0,
    )
}

/// Zeros located from sign changes of the sampled `M(t0)`, each refined by
/// bisection on direct quadrature to `tol`.
pub fn sampled_zeros(adjoint: &AdjointTrajectory, g: &ForcingProfile, result: &MelnikovResult, tol: f64) -> Vec<f64> {
    let s = &result.samples;
    let n = s.len();
    let period = result.period();
    let mut zeros = Vec::new();
    for i in 0..n {
        let (ta, fa) = s[i];
        let (tb, fb) = if i + 1 < n { s[i + 1] } else { (period, s[0].1) };
        if fa == 0.0 {
            zeros.push(ta);
            continue;
        }
        if fa * fb >= 0.0 {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (ta, tb, fa);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let fm = periodic_value(adjoint, g, result.omega, mid);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if (fm > 0.0) == (flo > 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        zeros.push(0.5 * (lo + hi) % period);
    }
    zeros.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    zeros
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub amplitude: f64,
}

/// Melnikov coefficients at each frequency of `omegas`.
pub fn frequency_sweep(adjoint: &AdjointTrajectory, g: &ForcingProfile, omegas: &[f64]) -> Result<Vec<SweepRow>, AdjointError> {
    let p = projected_forcing(adjoint, g)?;
    let t = adjoint.path.times();
    omegas
        .iter()
        .map(|&omega| {
            if !(omega.is_finite() && omega >= 0.0) {
                return Err(AdjointError::InvalidFrequency(omega));
            }
            let c: Vec<f64> = t.iter().zip(&p).map(|(t, p)| (omega * t).cos() * p).collect();
            let s: Vec<f64> = t.iter().zip(&p).map(|(t, p)| -(omega * t).sin() * p).collect();
            let (a, b) = (simpson(t, &c), simpson(t, &s));
            Ok(SweepRow {
                omega,
                a,
                b,
                amplitude: a.hypot(b),
            })
        })
        .collect()
}

/// Whether the Melnikov function has simple zeros: `A² + B² ≠ 0` up to
/// [`TRANSVERSALITY_TOL`].
pub fn transversality_check(result: &MelnikovResult) -> bool {
    result.amplitude > TRANSVERSALITY_TOL
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_adjoint(times: &[f64], psi: &[f64]) -> AdjointTrajectory {
        let mut path = SampledPath::new(psi.len());
        let zero = vec![0.0; psi.len()];
        for t in times {
            path.push(*t, psi, &zero);
        }
        AdjointTrajectory {
            pairing: vec![0.0; times.len()],
            path,
            normalization: Normalization::UnitNorm,
            scale: 1.0,
            terminal_eigenvalue: Complex64::new(0.0, 0.0),
            normalization_residual: 0.0,
        }
    }

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    }

    #[test]
    fn simpson_is_exact_for_quadratics_on_any_grid() {
        let t = [0.0, 0.3, 0.5, 1.1, 1.2, 2.0];
        let f: Vec<f64> = t.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        let exact = 8.0 - 2.0 + 4.0;
        assert!((simpson(&t, &f) - exact).abs() < 1e-13);
        let t = grid(0.0, 2.0, 6);
        let f: Vec<f64> = t.iter().map(|x| x * x * x).collect();
        assert!((simpson(&t, &f) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn simpson_converges_at_fourth_order() {
        let err = |n: usize| {
            let t = grid(0.0, 3.0, n);
            let f: Vec<f64> = t.iter().map(|x| x.sin()).collect();
            (simpson(&t, &f) - (1.0 - 3.0f64.cos())).abs()
        };
        let ratio = err(40) / err(80);
        assert!(ratio > 14.0 && ratio < 18.0, "{ratio}");
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let adj = constant_adjoint(&grid(-5.0, 5.0, 100), &[1.0, 2.0]);
        assert_eq!(melnikov_general(&adj, |_, out: &mut [f64]| out.fill(0.0), 0.3), 0.0);
    }

    #[test]
    fn melnikov_is_linear_in_the_forcing() {
        let times = grid(-3.0, 4.0, 70);
        let mut adj = constant_adjoint(&times, &[0.0, 0.0]);
        let mut path = SampledPath::new(2);
        for t in &times {
            path.push(*t, &[(-t * t).exp(), t.sin()], &[0.0, 0.0]);
        }
        adj.path = path;
        let f1 = |t: f64, o: &mut [f64]| {
            o[0] = t.cos();
            o[1] = 1.0;
        };
        let f2 = |t: f64, o: &mut [f64]| {
            o[0] = t * t;
            o[1] = -t;
        };
        let (al, be) = (0.7, -2.5);
        let lhs = melnikov_general(
            &adj,
            |t, o: &mut [f64]| {
                let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
                f1(t, &mut a);
                f2(t, &mut b);
                o[0] = al * a[0] + be * b[0];
                o[1] = al * a[1] + be * b[1];
            },
            0.4,
        );
        let rhs = al * melnikov_general(&adj, f1, 0.4) + be * melnikov_general(&adj, f2, 0.4);
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn cosine_zeros_are_analytic() {
        let z = harmonic_zeros(1.0, 1.0, 0.0);
        assert_eq!(z.len(), 2);
        assert!((z[0].t0 - PI / 2.0).abs() < 1e-15 && (z[0].slope + 1.0).abs() < 1e-15);
        assert!((z[1].t0 - 3.0 * PI / 2.0).abs() < 1e-15 && (z[1].slope - 1.0).abs() < 1e-15);
        assert!(harmonic_zeros(1.0, 0.0, 0.0).is_empty());
        assert!(harmonic_zeros(0.0, 1.0, 0.0).is_empty());
        let r = MelnikovResult::from_coefficients(1.0, 1.0, 0.0);
        assert!(transversality_check(&r));
        assert!(!transversality_check(&MelnikovResult::from_coefficients(1.0, 0.0, 0.0)));
    }

    #[test]
    fn zero_frequency_has_constant_melnikov() {
        let times = grid(-5.0, 5.0, 200);
        let mut adj = constant_adjoint(&times, &[0.0]);
        let mut path = SampledPath::new(1);
        for t in &times {
            path.push(*t, &[1.0 / t.cosh()], &[0.0]);
        }
        adj.path = path;
        let g = ForcingProfile::new(vec![2.0], "test").unwrap();
        let r = melnikov_periodic(&adj, &g, 0.0).unwrap();
        assert_eq!(r.b, 0.0);
        for (_, m) in &r.samples {
            assert!((m - r.a).abs() < 1e-12);
        }
        let rows = frequency_sweep(&adj, &g, &[0.0]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].b, 0.0);
    }

    #[test]
    fn orthogonal_profile_gives_no_zeros() {
        let adj = constant_adjoint(&grid(-5.0, 5.0, 100), &[1.0, 0.0]);
        let g = ForcingProfile::new(vec![0.0, 1.0], "orthogonal").unwrap();
        let r = melnikov_periodic(&adj, &g, 0.7).unwrap();
        assert_eq!((r.a, r.b, r.amplitude), (0.0, 0.0, 0.0));
        assert!(r.zeros.is_empty());
        assert!(!transversality_check(&r));
    }

    #[test]
    fn harmonic_form_and_sampled_zeros() {
        let times = grid(-8.0, 10.0, 1800);
        let mut adj = constant_adjoint(&times, &[0.0, 0.0]);
        let mut path = SampledPath::new(2);
        for t in &times {
            path.push(*t, &[(-(t - 1.0) * (t - 1.0)).exp(), 0.3 / t.cosh()], &[0.0, 0.0]);
        }
        adj.path = path;
        let g = ForcingProfile::new(vec![1.0, -0.5], "mixed").unwrap();
        let r = melnikov_periodic(&adj, &g, 0.8).unwrap();
        assert_eq!(r.samples.len(), PHASE_SAMPLES);
        assert!(r.harmonic_residual() <= 1e-12 * r.amplitude);
        let z = sampled_zeros(&adj, &g, &r, 1e-12);
        assert_eq!(z.len(), 2);
        for (s, a) in z.iter().zip(&r.zeros) {
            assert!((s - a.t0).abs() < 1e-9, "{s} vs {}", a.t0);
            assert!(a.slope.abs() > 0.0);
        }
        assert!(r.zeros[0].slope * r.zeros[1].slope < 0.0);
    }

    #[test]
    fn phase_shift_identity() {
        let times = grid(-6.0, 6.0, 1200);
        let mut adj = constant_adjoint(&times, &[0.0]);
        let mut path = SampledPath::new(1);
        for t in &times {
            path.push(*t, &[(-t * t / 2.0).exp() * (1.0 + 0.2 * t)], &[0.0]);
        }
        adj.path = path.clone();
        let g = ForcingProfile::new(vec![1.0], "unit").unwrap();
        let omega = 1.3;
        let r = melnikov_periodic(&adj, &g, omega).unwrap();
        let s = 0.37;
        let mut shifted = adj.clone();
        let mut p2 = path;
        p2.shift_time(s);
        shifted.path = p2;
        let r2 = melnikov_periodic(&shifted, &g, omega).unwrap();
        for k in 0..16 {
            let t0 = k as f64 * 0.3;
            assert!((r2.harmonic(t0) - r.harmonic(t0 + s)).abs() < 1e-8);
        }
    }

    #[test]
    fn forcing_profiles() {
        let d = DomainConfig::new(22.0, 4).unwrap();
        let s = ForcingProfile::sine_mode(&d, 1);
        assert_eq!(s.modal_g, vec![0.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let c = ForcingProfile::cosine_mode(&d, 2);
        assert_eq!(c.modal_g[2], 0.5);
        assert!(matches!(
            ForcingProfile::new(vec![f64::NAN], "bad"),
            Err(AdjointError::ForcingNonFinite(0))
        ));
        let adj = constant_adjoint(&[0.0, 1.0], &[1.0]);
        assert!(matches!(
            melnikov_periodic(&adj, &s, 1.0),
            Err(AdjointError::ForcingDimension { .. })
        ));
        assert!(matches!(
            melnikov_coefficients(&adj, &ForcingProfile::new(vec![1.0], "x").unwrap(), -1.0),
            Err(AdjointError::InvalidFrequency(_))
        ));
    }
}
