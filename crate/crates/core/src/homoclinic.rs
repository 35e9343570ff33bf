//! Approximate homoclinic orbits by shooting along the unstable manifold.
//!
//! A shot starts at `a_s + δ·d` with `d` a unit vector in the unstable
//! eigenspace and is scored by how closely it comes back to the equilibrium.
//! For flows with a continuous symmetry the score is measured to the whole
//! symmetry orbit of the equilibrium, so connections `a_s → g·a_s` count.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)] // float methods come from here without std
use crate::math::Real;
use thiserror::Error;

use crate::equilibria::{SpectralData, UNSTABLE_THRESHOLD};
use crate::flow::KsSystem;
use crate::integrators::{
    etdrk4_integrate, IntegrationConfig, IntegrationError, SampledPath, SemilinearSystem,
};
use crate::optimize::{golden_section, nelder_mead};
use crate::spectral::{
    nonlinear_jacobian_action, nonlinear_jacobian_transpose_action, translation_distance,
    translate_real, ModalState, SpectralError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HomoclinicError {
    #[error("the equilibrium has no unstable directions")]
    UnstableSubspaceEmpty,
    #[error("invalid shooting configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("direction has {got} parameters, the unstable subspace needs {expected}")]
    DirectionMismatch { got: usize, expected: usize },
    #[error("best shot returned to within {distance:e} of the equilibrium, above tolerance")]
    NotConverged {
        orbit: Box<OrbitTrajectory>,
        distance: f64,
    },
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

impl HomoclinicError {
    /// The usable orbit carried by `NotConverged`, or the orbit itself on success.
    pub fn accept_best(r: Result<OrbitTrajectory, Self>) -> Result<OrbitTrajectory, Self> {
        match r {
            Ok(o) => Ok(o),
            Err(HomoclinicError::NotConverged { orbit, .. }) => Ok(*orbit),
            Err(e) => Err(e),
        }
    }
}

/// A vector field that can be shot along: the stiff split plus its linearization.
pub trait FlowModel: SemilinearSystem {
    /// Nonlinear part of the Jacobian at `y` applied to `v`.
    fn jacobian_nonlinear_action(&self, y: &[f64], v: &[f64], out: &mut [f64]);

    /// Transpose of [`FlowModel::jacobian_nonlinear_action`].
    fn jacobian_nonlinear_transpose_action(&self, y: &[f64], psi: &[f64], out: &mut [f64]);

    /// Distance from `y` to the symmetry orbit of `anchor`, with the closest
    /// point of that orbit. Without symmetries this is the Euclidean distance.
    fn symmetry_distance(&self, y: &[f64], anchor: &[f64]) -> (f64, Vec<f64>) {
        (euclidean(y, anchor), anchor.to_vec())
    }

    fn dense_jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            self.jacobian_nonlinear_action(y, &e, &mut col);
            e[c] = 0.0;
            for r in 0..n {
                j[(r, c)] = col[r];
            }
            j[(c, c)] += self.linear()[c];
        }
        j
    }
}

impl FlowModel for KsSystem {
    fn jacobian_nonlinear_action(&self, y: &[f64], v: &[f64], out: &mut [f64]) {
        nonlinear_jacobian_action(y, v, self.domain(), out);
    }

    fn jacobian_nonlinear_transpose_action(&self, y: &[f64], psi: &[f64], out: &mut [f64]) {
        nonlinear_jacobian_transpose_action(y, psi, self.domain(), out);
    }

    fn symmetry_distance(&self, y: &[f64], anchor: &[f64]) -> (f64, Vec<f64>) {
        let (d, s) = translation_distance(y, anchor, self.domain());
        (d, translate_real(anchor, s, self.domain()))
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The unstable eigenspace of an equilibrium: an orthonormal real basis and
/// the eigenpairs that span it.
#[derive(Debug, Clone, PartialEq)]
pub struct UnstableManifold {
    basis: Vec<Vec<f64>>,
    eigenvalues: Vec<Complex64>,
    eigenvectors: Vec<Vec<Complex64>>,
}

impl UnstableManifold {
    pub fn from_spectral(sd: &SpectralData) -> Result<Self, HomoclinicError> {
        let basis = sd.unstable_basis();
        if basis.is_empty() {
            return Err(HomoclinicError::UnstableSubspaceEmpty);
        }
        let (eigenvalues, eigenvectors) = sd
            .eigenvalues
            .iter()
            .zip(&sd.eigenvectors)
            .filter(|(l, _)| l.re > UNSTABLE_THRESHOLD)
            .map(|(l, v)| (*l, v.clone()))
            .unzip();
        Ok(Self {
            basis,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Leading unstable eigenvalue.
    pub fn leading(&self) -> Complex64 {
        self.eigenvalues[0]
    }

    /// Unit vector with hyperspherical angles `angles` (`dim − 1` of them).
    pub fn direction(&self, angles: &[f64]) -> Result<Vec<f64>, HomoclinicError> {
        let d = self.dim();
        if angles.len() != d - 1 {
            return Err(HomoclinicError::DirectionMismatch {
                got: angles.len(),
                expected: d - 1,
            });
        }
        let mut coords = vec![0.0; d];
        let mut sin_prod = 1.0;
        for (i, a) in angles.iter().enumerate() {
            coords[i] = sin_prod * a.cos();
            sin_prod *= a.sin();
        }
        coords[d - 1] = sin_prod;
        let n = self.basis[0].len();
        let mut out = vec![0.0; n];
        for (c, b) in coords.iter().zip(&self.basis) {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += c * bi;
            }
        }
        Ok(out)
    }

    /// Applies the linear flow on the unstable eigenspace for time `-tau`:
    /// expands `u` in eigenvectors and scales each coefficient by `e^{−λτ}`.
    pub fn flow_back(&self, u: &[f64], tau: f64) -> Vec<f64> {
        let n = u.len();
        let m = self.eigenvalues.len();
        let v = DMatrix::from_fn(n, m, |r, c| self.eigenvectors[c][r]);
        let vh = v.adjoint();
        let rhs = &vh * DVector::from_iterator(n, u.iter().map(|x| Complex64::new(*x, 0.0)));
        let gram = &vh * &v;
        let coeffs = gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(m));
        let mut out = vec![0.0; n];
        for (c, (lam, vec)) in coeffs.iter().zip(self.eigenvalues.iter().zip(&self.eigenvectors)) {
            let w = *c * (-*lam * tau).exp();
            for (o, vi) in out.iter_mut().zip(vec) {
                *o += (w * vi).re;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingConfig {
    /// Shooting duration `T`.
    pub duration: f64,
    pub delta_range: (f64, f64),
    /// Initial hyperspherical angles in the unstable subspace.
    pub direction_params: Vec<f64>,
    pub return_tol: f64,
    /// Step and sampling; the horizon is replaced by `duration`.
    pub integration: IntegrationConfig,
    /// Budget of shots for the optimizer.
    pub max_shots: usize,
    /// Number of angles tried at the largest δ before the simplex search.
    pub angle_scan: usize,
}

impl ShootingConfig {
    pub fn validate(&self) -> Result<(), HomoclinicError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(HomoclinicError::InvalidConfig("duration must be positive"));
        }
        let (lo, hi) = self.delta_range;
        if !(lo > 0.0 && lo <= hi && hi < 0.1) {
            return Err(HomoclinicError::InvalidConfig("delta_range must lie in (0, 0.1)"));
        }
        if !(self.return_tol > 0.0) {
            return Err(HomoclinicError::InvalidConfig("return_tol must be positive"));
        }
        if self.max_shots == 0 {
            return Err(HomoclinicError::InvalidConfig("max_shots must be at least 1"));
        }
        self.integration.validate()?;
        Ok(())
    }

    fn shot_integration(&self, duration: f64) -> Result<IntegrationConfig, HomoclinicError> {
        Ok(self.integration.with_horizon(duration)?)
    }
}

/// One forward integration from a displaced equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub path: SampledPath,
    /// Symmetry distance to the equilibrium at each sample.
    pub distances: Vec<f64>,
    pub peak_index: usize,
    /// `min d(t)/d_peak` over samples with `t ≥ max(t_peak, midpoint)`.
    pub return_distance: f64,
}

impl Shot {
    fn assess<M: FlowModel + ?Sized>(model: &M, steady: &[f64], path: SampledPath) -> Self {
        let distances: Vec<f64> = (0..path.len())
            .map(|i| model.symmetry_distance(path.state(i), steady).0)
            .collect();
        let peak_index = argmax(&distances);
        let peak = distances[peak_index];
        let mid = 0.5 * (path.t_start() + path.t_end());
        let t_from = path.times()[peak_index].max(mid);
        let return_distance = path
            .times()
            .iter()
            .zip(&distances)
            .filter(|(t, _)| **t >= t_from)
            .map(|(_, d)| *d / peak)
            .fold(f64::INFINITY, f64::min);
        Self {
            path,
            distances,
            peak_index,
            return_distance,
        }
    }

    pub fn peak_time(&self) -> f64 {
        self.path.times()[self.peak_index]
    }

    pub fn peak_excursion(&self) -> f64 {
        self.distances[self.peak_index]
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Integrates from `steady + delta·direction` for `cfg.duration`.
pub fn shoot<M: FlowModel + ?Sized>(
    model: &M,
    steady: &[f64],
    direction: &[f64],
    delta: f64,
    cfg: &ShootingConfig,
) -> Result<Shot, HomoclinicError> {
    let y0: Vec<f64> = steady.iter().zip(direction).map(|(s, d)| s + delta * d).collect();
    let path = etdrk4_integrate(model, &y0, 0.0, &cfg.shot_integration(cfg.duration)?)?;
    Ok(Shot::assess(model, steady, path))
}

/// A recentred approximate homoclinic orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitTrajectory {
    /// `a_h(t)` and `ȧ_h(t)`, with `t = 0` at the largest excursion.
    pub path: SampledPath,
    /// The equilibrium the orbit leaves.
    pub steady: Vec<f64>,
    /// The member of its symmetry orbit the orbit approaches at the end.
    pub end_equilibrium: Vec<f64>,
    pub return_distance: f64,
    /// Return distance of the first shot of the search.
    pub initial_return_distance: f64,
    pub peak_excursion: f64,
    /// Shot time at which the peak occurred (subtracted during recentring).
    pub time_offset: f64,
    pub delta: f64,
    pub direction: Vec<f64>,
    pub shots: usize,
    pub converged: bool,
}

impl OrbitTrajectory {
    fn from_shot<M: FlowModel + ?Sized>(
        model: &M,
        steady: &[f64],
        shot: Shot,
        delta: f64,
        direction: Vec<f64>,
    ) -> Self {
        let offset = shot.peak_time();
        let peak_excursion = shot.peak_excursion();
        let return_distance = shot.return_distance;
        let mut path = shot.path;
        path.shift_time(-offset);
        let end_equilibrium = model.symmetry_distance(path.last_state(), steady).1;
        Self {
            path,
            steady: steady.to_vec(),
            end_equilibrium,
            return_distance,
            initial_return_distance: return_distance,
            peak_excursion,
            time_offset: offset,
            delta,
            direction,
            shots: 1,
            converged: false,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.path.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.path.t_end()
    }

    /// Cubic Hermite value of `a_h(t)`.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>, HomoclinicError> {
        Ok(self.path.interpolate(t)?)
    }

    /// Distance of every sample to the start equilibrium's symmetry orbit.
    pub fn excursions<M: FlowModel + ?Sized>(&self, model: &M) -> Vec<f64> {
        (0..self.path.len())
            .map(|i| model.symmetry_distance(self.path.state(i), &self.steady).0)
            .collect()
    }

    /// Restricts the orbit to the samples with `t ∈ [t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> Self {
        Self {
            path: self.path.window(t0, t1),
            ..self.clone()
        }
    }
}

/// `a_h(t)` as a modal state.
pub fn orbit_interpolate(orbit: &OrbitTrajectory, t: f64) -> Result<ModalState, HomoclinicError> {
    Ok(ModalState::from_real(&orbit.state_at(t)?)?)
}

/// Minimizes the return distance over `(ln δ, angles)`.
///
/// The first shot is taken at the lower end of `delta_range` with the
/// configured angles. A one-dimensional subspace then uses the better sign
/// and a golden-section search on `ln δ`. Otherwise the first angle is scanned
/// at the top of `delta_range` and Nelder–Mead refines `ln δ` and at most two
/// angles; further angles stay at their initial values.
pub fn find_homoclinic<M: FlowModel + ?Sized>(
    model: &M,
    steady: &[f64],
    manifold: &UnstableManifold,
    cfg: &ShootingConfig,
) -> Result<OrbitTrajectory, HomoclinicError> {
    cfg.validate()?;
    let d = manifold.dim();
    let mut angles0 = cfg.direction_params.clone();
    angles0.resize(d - 1, 0.0);
    let (lo, hi) = (cfg.delta_range.0.ln(), cfg.delta_range.1.ln());

    struct Best {
        shot: Option<Shot>,
        delta: f64,
        direction: Vec<f64>,
        shots: usize,
        initial: f64,
    }
    let mut best = Best {
        shot: None,
        delta: 0.0,
        direction: Vec::new(),
        shots: 0,
        initial: f64::NAN,
    };
    let evaluate = |log_delta: f64, sign: f64, angles: &[f64], best: &mut Best| -> f64 {
        let delta = sign * log_delta.clamp(lo, hi).exp();
        let direction = match manifold.direction(angles) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        best.shots += 1;
        let shot = match shoot(model, steady, &direction, delta, cfg) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        let r = shot.return_distance;
        if best.initial.is_nan() {
            best.initial = r;
        }
        let improves = best.shot.as_ref().is_none_or(|b| r < b.return_distance);
        if improves {
            best.shot = Some(shot);
            best.delta = delta;
            best.direction = direction;
        }
        r.ln()
    };

    if d == 1 {
        let plus = evaluate(lo, 1.0, &[], &mut best);
        let minus = evaluate(lo, -1.0, &[], &mut best);
        let sign = if plus <= minus { 1.0 } else { -1.0 };
        if hi > lo && cfg.max_shots > 2 {
            golden_section(
                |x| evaluate(x, sign, &[], &mut best),
                lo,
                hi,
                1e-3,
                cfg.max_shots - 2,
            );
        }
    } else {
        // Along the spiral flow on the unstable eigenspace, (δ, θ) and
        // (δe^{σt}, θ + ωt) start the same orbit at different times, so at the
        // largest δ the first angle alone selects the orbit. Scan it there,
        // then polish (ln δ, angles) with Nelder–Mead.
        evaluate(lo, 1.0, &angles0, &mut best);
        let free = (d - 1).min(2);
        let scan = cfg.angle_scan.min(cfg.max_shots.saturating_sub(1));
        let mut start = angles0.clone();
        let mut start_value = f64::INFINITY;
        for i in 0..scan {
            let mut angles = angles0.clone();
            angles[0] = angles0[0] + 2.0 * PI * i as f64 / scan as f64;
            let v = evaluate(hi, 1.0, &angles, &mut best);
            if v < start_value {
                start_value = v;
                start = angles;
            }
        }
        let log_start = if scan > 0 { hi } else { lo };
        let remaining = cfg.max_shots.saturating_sub(1 + scan);
        if remaining > free + 1 {
            let mut x0 = vec![log_start];
            x0.extend_from_slice(&start[..free]);
            let mut step = vec![-0.5 * (hi - lo).clamp(0.5, 2.0)];
            step.extend(core::iter::repeat_n(PI / scan.max(4) as f64, free));
            let fixed = start.clone();
            nelder_mead(
                |x| {
                    let mut angles = fixed.clone();
                    angles[..free].copy_from_slice(&x[1..]);
                    evaluate(x[0], 1.0, &angles, &mut best)
                },
                &x0,
                &step,
                remaining,
                1e-3,
            );
        }
    }

    let shot = match best.shot {
        Some(s) => s,
        None => return Err(IntegrationError::NonFinite { time: 0.0 }.into()),
    };
    let mut orbit = OrbitTrajectory::from_shot(model, steady, shot, best.delta, best.direction);
    orbit.shots = best.shots;
    orbit.initial_return_distance = best.initial;
    orbit.converged = orbit.return_distance <= cfg.return_tol;
    if orbit.converged {
        Ok(orbit)
    } else {
        let distance = orbit.return_distance;
        Err(HomoclinicError::NotConverged {
            orbit: Box::new(orbit),
            distance,
        })
    }
}

/// Re-integrates an orbit so it covers at least `[t_min, t_max]` in recentred time.
///
/// The earlier part is recovered by running the linear flow on the unstable
/// eigenspace backwards from the shot's initial displacement, which moves the
/// starting point exponentially closer to the equilibrium; the later part by
/// integrating past the original end.
pub fn extend_orbit<M: FlowModel + ?Sized>(
    model: &M,
    orbit: &OrbitTrajectory,
    manifold: &UnstableManifold,
    t_min: f64,
    t_max: f64,
    cfg: &ShootingConfig,
) -> Result<OrbitTrajectory, HomoclinicError> {
    let back = (orbit.t_start() - t_min).max(0.0);
    let ahead = (t_max - orbit.t_end()).max(0.0);
    if back == 0.0 && ahead == 0.0 {
        return Ok(orbit.clone());
    }
    let disp: Vec<f64> = orbit.direction.iter().map(|d| orbit.delta * d).collect();
    let start_disp = manifold.flow_back(&disp, back);
    let y0: Vec<f64> = orbit.steady.iter().zip(&start_disp).map(|(s, d)| s + d).collect();
    let duration = back + (orbit.t_end() - orbit.t_start()) + ahead;
    let path = etdrk4_integrate(model, &y0, 0.0, &cfg.shot_integration(duration)?)?;
    let shot = Shot::assess(model, &orbit.steady, path);
    let mut out = OrbitTrajectory::from_shot(
        model,
        &orbit.steady,
        shot,
        orbit.delta,
        orbit.direction.clone(),
    );
    out.initial_return_distance = orbit.initial_return_distance;
    out.shots = orbit.shots;
    out.converged = orbit.converged;
    Ok(out)
}

/// Least-squares slope of `ln d(t)` over the last `fraction` of the orbit,
/// where `d` is the distance to the end equilibrium.
pub fn tail_decay_rate<M: FlowModel + ?Sized>(model: &M, orbit: &OrbitTrajectory, fraction: f64) -> f64 {
    let t0 = orbit.t_end() - fraction * (orbit.t_end() - orbit.t_start());
    let pts: Vec<(f64, f64)> = (0..orbit.path.len())
        .filter(|&i| orbit.path.times()[i] >= t0)
        .filter_map(|i| {
            let d = model.symmetry_distance(orbit.path.state(i), &orbit.end_equilibrium).0;
            (d > 0.0).then(|| (orbit.path.times()[i], d.ln()))
        })
        .collect();
    linear_fit_slope(&pts)
}

pub(crate) fn linear_fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{eigen_analysis, jacobian_real};
    use crate::spectral::DomainConfig;

    #[test]
    fn hyperspherical_directions_are_unit() {
        let sd = eigen_analysis(&DMatrix::from_diagonal(&DVector::from_column_slice(&[
            0.3, 0.2, 0.1, -1.0,
        ])));
        let m = UnstableManifold::from_spectral(&sd).unwrap();
        assert_eq!(m.dim(), 3);
        let d = m.direction(&[0.4, 2.0]).unwrap();
        assert!((d.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(d[3].abs() < 1e-12);
        assert!(matches!(m.direction(&[0.1]), Err(HomoclinicError::DirectionMismatch { .. })));
    }

    #[test]
    fn empty_unstable_subspace_is_rejected() {
        let sd = eigen_analysis(&DMatrix::from_diagonal(&DVector::from_column_slice(&[-0.3, -1.0])));
        assert_eq!(UnstableManifold::from_spectral(&sd), Err(HomoclinicError::UnstableSubspaceEmpty));
    }

    #[test]
    fn flow_back_inverts_linear_flow() {
        // Rotation-expansion block: e^{At} with λ = 0.2 ± 1.1i.
        let a = DMatrix::from_row_slice(3, 3, &[0.2, -1.1, 0.0, 1.1, 0.2, 0.0, 0.0, 0.0, -2.0]);
        let m = UnstableManifold::from_spectral(&eigen_analysis(&a)).unwrap();
        let u = [0.6, -0.8, 0.0];
        let tau = 1.7;
        let back = m.flow_back(&u, tau);
        let (c, s) = ((1.1 * tau).cos(), (1.1 * tau).sin());
        let g = (0.2 * tau).exp();
        let fwd = [g * (c * back[0] - s * back[1]), g * (s * back[0] + c * back[1])];
        assert!((fwd[0] - u[0]).abs() < 1e-12 && (fwd[1] - u[1]).abs() < 1e-12);
        assert!(back[2].abs() < 1e-14);
    }

    #[test]
    fn ks_dense_jacobian_matches_equilibria() {
        let d = DomainConfig::new(22.0, 8).unwrap();
        let sys = KsSystem::new(d);
        let y: Vec<f64> = (0..16).map(|i| 0.1 * ((i * 3 % 7) as f64 - 3.0)).collect();
        assert_eq!(sys.dense_jacobian(&y), jacobian_real(&y, &d));
    }

    #[test]
    fn config_validation() {
        let base = ShootingConfig {
            duration: 10.0,
            delta_range: (1e-6, 1e-2),
            direction_params: vec![],
            return_tol: 1e-3,
            integration: IntegrationConfig::new(1e-3, 1.0, 10).unwrap(),
            max_shots: 10,
            angle_scan: 4,
        };
        assert!(base.validate().is_ok());
        let bad = ShootingConfig { delta_range: (1e-3, 0.2), ..base.clone() };
        assert!(bad.validate().is_err());
        let bad = ShootingConfig { return_tol: 0.0, ..base.clone() };
        assert!(bad.validate().is_err());
        let bad = ShootingConfig { duration: -1.0, ..base };
        assert!(bad.validate().is_err());
    }
}
