//! Fixed-step time integration.
//!
//! [`etdrk4_integrate`] handles stiff diagonal-plus-nonlinear systems (the KS
//! flow and every linearization along it). [`rk4_integrate`] is the plain
//! fourth-order Runge–Kutta used for low-dimensional and non-stiff problems.
//! Both return a [`SampledPath`] that supports cubic Hermite dense output.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)] // float methods come from here without std
use crate::math::{cexp, polar, Real};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("sample stride must be at least 1")]
    InvalidStride,
    #[error("at least 16 contour points are required, got {0}")]
    TooFewContourPoints(usize),
    #[error("state has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("solution became non-finite at t = {time}")]
    NonFinite { time: f64 },
    #[error("t = {t} lies outside the sampled interval [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("path has no samples")]
    EmptyPath,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub horizon: f64,
    pub sample_stride: usize,
    pub contour_points: usize,
}

impl IntegrationConfig {
    pub fn new(dt: f64, horizon: f64, sample_stride: usize) -> Result<Self, IntegrationError> {
        let cfg = Self {
            dt,
            horizon,
            sample_stride,
            contour_points: 32,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_contour_points(mut self, m: usize) -> Result<Self, IntegrationError> {
        self.contour_points = m;
        self.validate()?;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self, IntegrationError> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(IntegrationError::InvalidStep(self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(IntegrationError::InvalidHorizon(self.horizon));
        }
        if self.sample_stride == 0 {
            return Err(IntegrationError::InvalidStride);
        }
        if self.contour_points < 16 {
            return Err(IntegrationError::TooFewContourPoints(self.contour_points));
        }
        Ok(())
    }

    /// Number of steps and the step actually taken. The step is shrunk slightly
    /// when `dt` does not divide the horizon, so the last sample lands on `T`.
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.horizon / n as f64)
    }

    /// Spacing between recorded samples.
    pub fn sample_spacing(&self) -> f64 {
        self.steps().1 * self.sample_stride as f64
    }
}

/// Forward or backward in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Samples `(t, y, ẏ)` with strictly increasing `t`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
}

impl SampledPath {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            times: Vec::new(),
            states: Vec::new(),
            derivs: Vec::new(),
        }
    }

    /// Builds a path from parallel arrays, checking the invariants.
    pub fn from_parts(
        dim: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        derivs: Vec<f64>,
    ) -> Result<Self, IntegrationError> {
        if states.len() != times.len() * dim || derivs.len() != times.len() * dim {
            return Err(IntegrationError::DimensionMismatch {
                got: states.len(),
                expected: times.len() * dim,
            });
        }
        if times.is_empty() {
            return Err(IntegrationError::EmptyPath);
        }
        for (i, w) in times.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(IntegrationError::OutOfRange {
                    t: w[1],
                    start: times[0],
                    end: times[i],
                });
            }
        }
        if let Some(i) = states.iter().chain(&derivs).position(|v| !v.is_finite()) {
            let row = (i % states.len()) / dim;
            return Err(IntegrationError::NonFinite { time: times[row] });
        }
        Ok(Self {
            dim,
            times,
            states,
            derivs,
        })
    }

    pub fn push(&mut self, t: f64, y: &[f64], dy: &[f64]) {
        debug_assert_eq!(y.len(), self.dim);
        debug_assert!(self.times.last().is_none_or(|last| t > *last));
        self.times.push(t);
        self.states.extend_from_slice(y);
        self.derivs.extend_from_slice(dy);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states_flat(&self) -> &[f64] {
        &self.states
    }

    pub fn derivs_flat(&self) -> &[f64] {
        &self.derivs
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Adds `offset` to every sample time.
    pub fn shift_time(&mut self, offset: f64) {
        for t in &mut self.times {
            *t += offset;
        }
    }

    /// Reverses sample order, mapping `t ↦ pivot − t` and negating derivatives.
    /// Turns a path in `s = pivot − t` into one in `t`.
    pub fn reflect_time(&mut self, pivot: f64) {
        self.reverse_samples();
        for t in &mut self.times {
            *t = pivot - *t;
        }
        for v in &mut self.derivs {
            *v = -*v;
        }
    }

    fn reverse_samples(&mut self) {
        let n = self.len();
        let d = self.dim;
        self.times.reverse();
        for i in 0..n / 2 {
            for j in 0..d {
                self.states.swap(i * d + j, (n - 1 - i) * d + j);
                self.derivs.swap(i * d + j, (n - 1 - i) * d + j);
            }
        }
    }

    /// Keeps the samples with `t` in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> Self {
        let mut out = Self::new(self.dim);
        for i in 0..self.len() {
            let t = self.times[i];
            if t >= t0 && t <= t1 {
                out.push(t, self.state(i), self.deriv(i));
            }
        }
        out
    }

    /// Index `i` with `times[i] ≤ t < times[i+1]`, clamped to the last interval.
    fn bracket(&self, t: f64) -> Result<usize, IntegrationError> {
        if self.is_empty() {
            return Err(IntegrationError::EmptyPath);
        }
        let (start, end) = (self.t_start(), self.t_end());
        let slack = 1e-9 * (1.0 + start.abs().max(end.abs()));
        if !(t >= start - slack && t <= end + slack) {
            return Err(IntegrationError::OutOfRange { t, start, end });
        }
        if self.len() == 1 {
            return Ok(0);
        }
        let i = self.times.partition_point(|s| *s <= t);
        Ok(i.saturating_sub(1).min(self.len() - 2))
    }

    /// Cubic Hermite value at `t`, written into `out`.
    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) -> Result<(), IntegrationError> {
        let i = self.bracket(t)?;
        if self.len() == 1 {
            out.copy_from_slice(self.state(0));
            return Ok(());
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        hermite_interpolate(
            t0,
            self.state(i),
            self.deriv(i),
            t1,
            self.state(i + 1),
            self.deriv(i + 1),
            t.clamp(t0, t1),
            out,
        );
        Ok(())
    }

    pub fn interpolate(&self, t: f64) -> Result<Vec<f64>, IntegrationError> {
        let mut out = vec![0.0; self.dim];
        self.interpolate_into(t, &mut out)?;
        Ok(out)
    }

    /// Derivative of the Hermite interpolant at `t`.
    pub fn interpolate_derivative(&self, t: f64) -> Result<Vec<f64>, IntegrationError> {
        let i = self.bracket(t)?;
        if self.len() == 1 {
            return Ok(self.deriv(0).to_vec());
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t.clamp(t0, t1) - t0) / h;
        let dh00 = (6.0 * s * s - 6.0 * s) / h;
        let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * s * s - 2.0 * s;
        let (y0, d0, y1, d1) = (self.state(i), self.deriv(i), self.state(i + 1), self.deriv(i + 1));
        Ok((0..self.dim)
            .map(|j| dh00 * y0[j] + dh10 * d0[j] + dh01 * y1[j] + dh11 * d1[j])
            .collect())
    }
}

/// Cubic Hermite interpolation on `[t0, t1]` from endpoint values and slopes.
#[allow(clippy::too_many_arguments)]
pub fn hermite_interpolate(
    t0: f64,
    y0: &[f64],
    d0: &[f64],
    t1: f64,
    y1: &[f64],
    d1: &[f64],
    t: f64,
    out: &mut [f64],
) {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = (s3 - 2.0 * s2 + s) * h;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = (s3 - s2) * h;
    for j in 0..out.len() {
        out[j] = h00 * y0[j] + h10 * d0[j] + h01 * y1[j] + h11 * d1[j];
    }
}

/// `ẏ = diag(linear)·y + N(t, y)`.
pub trait SemilinearSystem {
    fn linear(&self) -> &[f64];
    fn nonlinear(&self, t: f64, y: &[f64], out: &mut [f64]);

    fn dim(&self) -> usize {
        self.linear().len()
    }

    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.nonlinear(t, y, out);
        for ((o, l), v) in out.iter_mut().zip(self.linear()).zip(y) {
            *o += l * v;
        }
    }
}

/// Per-coordinate ETDRK4 weights for a fixed step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtdCoefficients {
    pub h: f64,
    pub e: Vec<f64>,
    pub e2: Vec<f64>,
    pub q: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
}

impl EtdCoefficients {
    /// Contour-averaged φ-weights: each rational expression is averaged over
    /// `m` points on the unit circle around `z = λh`.
    pub fn new(linear: &[f64], h: f64, m: usize) -> Self {
        let roots: Vec<Complex64> = (0..m)
            .map(|j| polar(1.0, PI * (2.0 * j as f64 + 1.0) / m as f64))
            .collect();
        let n = linear.len();
        let mut c = Self {
            h,
            e: vec![0.0; n],
            e2: vec![0.0; n],
            q: vec![0.0; n],
            f1: vec![0.0; n],
            f2: vec![0.0; n],
            f3: vec![0.0; n],
        };
        for (i, lam) in linear.iter().enumerate() {
            let z = lam * h;
            c.e[i] = z.exp();
            c.e2[i] = (z / 2.0).exp();
            let w = phi_weights(z, &roots);
            c.q[i] = h * w[0];
            c.f1[i] = h * w[1];
            c.f2[i] = h * w[2];
            c.f3[i] = h * w[3];
        }
        c
    }
}

/// The four ETDRK4 weight functions (divided by `h`) at `z`, averaged over `z + roots`.
pub fn phi_weights(z: f64, roots: &[Complex64]) -> [f64; 4] {
    let mut acc = [Complex64::new(0.0, 0.0); 4];
    for r0 in roots {
        let r = Complex64::new(z, 0.0) + r0;
        let er = cexp(r);
        let r2 = r * r;
        let r3 = r2 * r;
        acc[0] += (cexp(r / 2.0) - 1.0) / r;
        acc[1] += (-4.0 - r + er * (4.0 - 3.0 * r + r2)) / r3;
        acc[2] += (2.0 + r + er * (r - 2.0)) / r3;
        acc[3] += (-4.0 - 3.0 * r - r2 + er * (4.0 - r)) / r3;
    }
    let m = roots.len() as f64;
    [acc[0].re / m, acc[1].re / m, acc[2].re / m, acc[3].re / m]
}

/// Scratch buffers for one ETDRK4 step.
struct EtdWork {
    nv: Vec<f64>,
    na: Vec<f64>,
    nb: Vec<f64>,
    nc: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl EtdWork {
    fn new(n: usize) -> Self {
        Self {
            nv: vec![0.0; n],
            na: vec![0.0; n],
            nb: vec![0.0; n],
            nc: vec![0.0; n],
            a: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![0.0; n],
        }
    }
}

fn etdrk4_step<S: SemilinearSystem + ?Sized>(
    sys: &S,
    co: &EtdCoefficients,
    t: f64,
    v: &mut [f64],
    w: &mut EtdWork,
) {
    let h = co.h;
    let n = v.len();
    sys.nonlinear(t, v, &mut w.nv);
    for i in 0..n {
        w.a[i] = co.e2[i] * v[i] + co.q[i] * w.nv[i];
    }
    sys.nonlinear(t + h / 2.0, &w.a, &mut w.na);
    for i in 0..n {
        w.b[i] = co.e2[i] * v[i] + co.q[i] * w.na[i];
    }
    sys.nonlinear(t + h / 2.0, &w.b, &mut w.nb);
    for i in 0..n {
        w.c[i] = co.e2[i] * w.a[i] + co.q[i] * (2.0 * w.nb[i] - w.nv[i]);
    }
    sys.nonlinear(t + h, &w.c, &mut w.nc);
    for i in 0..n {
        v[i] = co.e[i] * v[i]
            + co.f1[i] * w.nv[i]
            + 2.0 * co.f2[i] * (w.na[i] + w.nb[i])
            + co.f3[i] * w.nc[i];
    }
}

/// A reusable ETDRK4 step of fixed size, for callers that interleave their
/// own updates between steps.
pub struct Etdrk4Stepper {
    co: EtdCoefficients,
    work: EtdWork,
}

impl Etdrk4Stepper {
    pub fn new(linear: &[f64], h: f64, contour_points: usize) -> Self {
        Self {
            co: EtdCoefficients::new(linear, h, contour_points),
            work: EtdWork::new(linear.len()),
        }
    }

    pub fn h(&self) -> f64 {
        self.co.h
    }

    /// Advances `v` from `t` to `t + h`.
    pub fn step<S: SemilinearSystem + ?Sized>(&mut self, sys: &S, t: f64, v: &mut [f64]) {
        etdrk4_step(sys, &self.co, t, v, &mut self.work);
    }
}

/// Integrates forward from `t0` over `cfg.horizon` with ETDRK4, recording
/// every `sample_stride`-th step plus both endpoints.
pub fn etdrk4_integrate<S: SemilinearSystem + ?Sized>(
    sys: &S,
    initial: &[f64],
    t0: f64,
    cfg: &IntegrationConfig,
) -> Result<SampledPath, IntegrationError> {
    cfg.validate()?;
    let n = sys.dim();
    if initial.len() != n {
        return Err(IntegrationError::DimensionMismatch {
            got: initial.len(),
            expected: n,
        });
    }
    let (steps, h) = cfg.steps();
    let co = EtdCoefficients::new(sys.linear(), h, cfg.contour_points);
    let mut w = EtdWork::new(n);
    let mut v = initial.to_vec();
    let mut dv = vec![0.0; n];
    let mut path = SampledPath::new(n);
    sys.rhs(t0, &v, &mut dv);
    path.push(t0, &v, &dv);
    for step in 1..=steps {
        let t = t0 + (step - 1) as f64 * h;
        etdrk4_step(sys, &co, t, &mut v, &mut w);
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

/// Classical RK4 for `ẏ = f(t, y)`. The backward direction integrates from
/// `t_start` down to `t_start − T`; the returned path is always time-ordered.
pub fn rk4_integrate<F>(
    mut f: F,
    initial: &[f64],
    t_start: f64,
    direction: Direction,
    cfg: &IntegrationConfig,
) -> Result<SampledPath, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    let n = initial.len();
    let (steps, h_abs) = cfg.steps();
    let h = match direction {
        Direction::Forward => h_abs,
        Direction::Backward => -h_abs,
    };
    let mut y = initial.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut derivs = Vec::new();
    f(t_start, &y, &mut k1);
    times.push(t_start);
    states.extend_from_slice(&y);
    derivs.extend_from_slice(&k1);
    for step in 1..=steps {
        let t = t_start + (step - 1) as f64 * h;
        f(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_new = t_start + step as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFinite { time: t_new });
        }
        if step % cfg.sample_stride == 0 || step == steps {
            f(t_new, &y, &mut k1);
            times.push(t_new);
            states.extend_from_slice(&y);
            derivs.extend_from_slice(&k1);
        }
    }
    let mut path = SampledPath {
        dim: n,
        times,
        states,
        derivs,
    };
    if direction == Direction::Backward {
        path.reverse_samples();
    }
    Ok(path)
}

/// RK4 for the linear system `ẏ = A(t) y`.
pub fn rk4_integrate_linear<G>(
    mut generator: G,
    initial: &[f64],
    t_start: f64,
    direction: Direction,
    cfg: &IntegrationConfig,
) -> Result<SampledPath, IntegrationError>
where
    G: FnMut(f64) -> DMatrix<f64>,
{
    let n = initial.len();
    rk4_integrate(
        |t, y, out| {
            let a = generator(t);
            let r = &a * DVector::from_column_slice(y);
            out[..n].copy_from_slice(r.as_slice());
        },
        initial,
        t_start,
        direction,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{linear_growth_rate, DomainConfig};

    /// Taylor coefficients of `P(z) + e^z R(z)`, truncated at `terms`.
    fn series(p: &[f64], r: &[f64], terms: usize) -> Vec<f64> {
        let mut fact = vec![1.0; terms];
        for i in 1..terms {
            fact[i] = fact[i - 1] * i as f64;
        }
        let mut c = vec![0.0; terms];
        for (i, pi) in p.iter().enumerate() {
            c[i] += pi;
        }
        for (j, rj) in r.iter().enumerate() {
            for i in 0..terms - j {
                c[i + j] += rj / fact[i];
            }
        }
        c
    }

    fn eval_shifted(c: &[f64], shift: usize, z: f64) -> f64 {
        c[shift..].iter().rev().fold(0.0, |acc, ci| acc * z + ci)
    }

    #[test]
    fn phi_weights_match_taylor_near_zero() {
        let roots: Vec<Complex64> = (0..32)
            .map(|j| polar(1.0, PI * (2.0 * j as f64 + 1.0) / 32.0))
            .collect();
        // (e^{z/2} − 1)/z = Σ z^{n}/(2^{n+1}(n+1)!)
        let q_series = |z: f64| {
            let mut term = 0.5;
            let mut sum = 0.0;
            for n in 0..30 {
                sum += term;
                term *= z / (2.0 * (n as f64 + 2.0));
            }
            sum
        };
        let f1 = series(&[-4.0, -1.0], &[4.0, -3.0, 1.0], 40);
        let f2 = series(&[2.0, 1.0], &[-2.0, 1.0], 40);
        let f3 = series(&[-4.0, -3.0, -1.0], &[4.0, -1.0], 40);
        for &(c, name) in &[(&f1, "f1"), (&f2, "f2"), (&f3, "f3")] {
            for (i, ci) in c.iter().take(3).enumerate() {
                assert!(ci.abs() < 1e-14, "{name} coefficient {i} = {ci}");
            }
        }
        for &z in &[0.0, 1e-5, -1e-5, 9e-5, -9e-5] {
            let w = phi_weights(z, &roots);
            assert!((w[0] - q_series(z)).abs() < 1e-12, "Q at {z}");
            assert!((w[1] - eval_shifted(&f1, 3, z)).abs() < 1e-12, "f1 at {z}");
            assert!((w[2] - eval_shifted(&f2, 3, z)).abs() < 1e-12, "f2 at {z}");
            assert!((w[3] - eval_shifted(&f3, 3, z)).abs() < 1e-12, "f3 at {z}");
        }
        assert!((phi_weights(0.0, &roots)[1] - 1.0 / 6.0).abs() < 1e-14);
    }

    struct Linear(Vec<f64>);

    impl SemilinearSystem for Linear {
        fn linear(&self) -> &[f64] {
            &self.0
        }
        fn nonlinear(&self, _t: f64, _y: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    #[test]
    fn pure_linear_mode_is_exact() {
        let d = DomainConfig::new(22.0, 32).unwrap();
        let sys = Linear(d.linear_rates());
        let mut y0 = vec![0.0; 64];
        y0[6] = 0.3;
        y0[7] = -0.2;
        let cfg = IntegrationConfig::new(1e-3, 1.0, 100).unwrap();
        let p = etdrk4_integrate(&sys, &y0, 0.0, &cfg).unwrap();
        let g = (linear_growth_rate(4, &d)).exp();
        let end = p.last_state();
        assert!((end[6] - 0.3 * g).abs() < 1e-10);
        assert!((end[7] + 0.2 * g).abs() < 1e-10);
        assert_eq!(p.len(), 11);
        assert!((p.t_end() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert_eq!(IntegrationConfig::new(0.0, 1.0, 1), Err(IntegrationError::InvalidStep(0.0)));
        assert_eq!(IntegrationConfig::new(0.1, -1.0, 1), Err(IntegrationError::InvalidHorizon(-1.0)));
        assert_eq!(IntegrationConfig::new(0.1, 1.0, 0), Err(IntegrationError::InvalidStride));
        let c = IntegrationConfig::new(0.1, 1.0, 1).unwrap();
        assert_eq!(c.with_contour_points(8), Err(IntegrationError::TooFewContourPoints(8)));
        assert_eq!(c.steps().0, 10);
        let c = IntegrationConfig::new(0.3, 1.0, 1).unwrap();
        let (n, h) = c.steps();
        assert_eq!(n, 4);
        assert!((h - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rk4_constant_diagonal_is_exponential() {
        let cfg = IntegrationConfig::new(1e-3, 1.0, 10).unwrap();
        let lam = [-0.7, 0.4];
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&lam));
        let p = rk4_integrate_linear(|_| a.clone(), &[1.0, 2.0], 0.0, Direction::Forward, &cfg).unwrap();
        let end = p.last_state();
        assert!((end[0] - (-0.7f64).exp()).abs() < 1e-8);
        assert!((end[1] - 2.0 * 0.4f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn rk4_rotation_preserves_norm() {
        let cfg = IntegrationConfig::new(1e-3, 10.0, 100).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.3, 1.3, 0.0]);
        let p = rk4_integrate_linear(|_| a.clone(), &[0.6, 0.8], 0.0, Direction::Forward, &cfg).unwrap();
        for i in 0..p.len() {
            let s = p.state(i);
            assert!((s[0].hypot(s[1]) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn rk4_forward_backward_round_trip() {
        let cfg = IntegrationConfig::new(1e-3, 2.0, 50).unwrap();
        let gen = |t: f64| DMatrix::from_row_slice(2, 2, &[-0.2, 1.0 + t, -1.0, 0.1 * t.sin()]);
        let fwd = rk4_integrate_linear(gen, &[1.0, -0.5], 0.0, Direction::Forward, &cfg).unwrap();
        let back =
            rk4_integrate_linear(gen, fwd.last_state(), fwd.t_end(), Direction::Backward, &cfg).unwrap();
        assert!((back.t_start() - 0.0).abs() < 1e-12);
        assert!((back.t_end() - 2.0).abs() < 1e-12);
        let s = back.state(0);
        assert!((s[0] - 1.0).abs() < 1e-8 && (s[1] + 0.5).abs() < 1e-8);
        assert!(back.times().windows(2).all(|w| w[1] > w[0]));
        // Derivatives in the backward path are d/dt, not d/ds.
        let d = back.deriv(0);
        let expect = gen(0.0) * DVector::from_column_slice(&[1.0, -0.5]);
        assert!((d[0] - expect[0]).abs() < 1e-7 && (d[1] - expect[1]).abs() < 1e-7);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| t * t * t - 2.0 * t + 1.0;
        let df = |t: f64| 3.0 * t * t - 2.0;
        let mut path = SampledPath::new(1);
        for i in 0..5 {
            let t = i as f64 * 0.5;
            path.push(t, &[f(t)], &[df(t)]);
        }
        for &t in &[0.1, 0.77, 1.3, 2.0] {
            assert!((path.interpolate(t).unwrap()[0] - f(t)).abs() < 1e-13);
            assert!((path.interpolate_derivative(t).unwrap()[0] - df(t)).abs() < 1e-12);
        }
        assert!(matches!(path.interpolate(2.5), Err(IntegrationError::OutOfRange { .. })));
    }

    #[test]
    fn reflect_time_maps_s_to_t() {
        let mut p = SampledPath::new(1);
        for i in 0..4 {
            let s = i as f64;
            p.push(s, &[s * s], &[2.0 * s]);
        }
        p.reflect_time(3.0);
        assert_eq!(p.times(), &[0.0, 1.0, 2.0, 3.0]);
        // y(t) = (3 − t)², dy/dt = −2(3 − t)
        assert_eq!(p.state(0), &[9.0]);
        assert_eq!(p.deriv(0), &[-6.0]);
        assert_eq!(p.state(3), &[0.0]);
    }
}
