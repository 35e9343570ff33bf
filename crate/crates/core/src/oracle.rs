//! The planar system `ẍ = x − x³` with forcing `(0, ε cos ωt)`.
//!
//! Its saddle at the origin has the homoclinic loop `x_h(t) = √2 sech t` in
//! closed form, so every stage of the Melnikov machinery can be checked
//! against it. [`brute_force_split`] measures the manifold splitting directly
//! by integrating the forced system, independently of any adjoint.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix2};
#[allow(unused_imports)] // float methods come from here without std
use crate::math::Real;
use thiserror::Error;

use crate::homoclinic::{FlowModel, OrbitTrajectory};
use crate::integrators::{
    rk4_integrate, Direction, IntegrationConfig, IntegrationError, SampledPath, SemilinearSystem,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{0} manifold trace never crossed the section y = 0 near the apex")]
    SectionMiss(&'static str),
    #[error("epsilon must lie in [0, 1e-2], got {0}")]
    InvalidEpsilon(f64),
    #[error("periodic orbit of the forced saddle did not converge")]
    PeriodicOrbit,
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// `ẋ = y, ẏ = x − x³` as a semilinear system with zero linear part, so the
/// exponential integrator reduces to classical RK4.
#[derive(Debug, Clone, Default)]
pub struct DuffingSystem {
    linear: [f64; 2],
}

impl DuffingSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn jacobian(x: f64) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, 1.0 - 3.0 * x * x, 0.0)
    }
}

fn field(y: &[f64], out: &mut [f64]) {
    out[0] = y[1];
    out[1] = y[0] - y[0] * y[0] * y[0];
}

impl SemilinearSystem for DuffingSystem {
    fn linear(&self) -> &[f64] {
        &self.linear
    }

    fn nonlinear(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        field(y, out);
    }
}

impl FlowModel for DuffingSystem {
    fn jacobian_nonlinear_action(&self, y: &[f64], v: &[f64], out: &mut [f64]) {
        out[0] = v[1];
        out[1] = (1.0 - 3.0 * y[0] * y[0]) * v[0];
    }

    fn jacobian_nonlinear_transpose_action(&self, y: &[f64], psi: &[f64], out: &mut [f64]) {
        out[0] = (1.0 - 3.0 * y[0] * y[0]) * psi[1];
        out[1] = psi[0];
    }

    fn dense_jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let j = Self::jacobian(y[0]);
        DMatrix::from_row_slice(2, 2, j.as_slice()).transpose()
    }
}

/// `(x_h(t), ẋ_h(t)) = (√2 sech t, −√2 sech t tanh t)`.
pub fn duffing_homoclinic(t: f64) -> (f64, f64) {
    let s = 1.0 / t.cosh();
    let r2 = core::f64::consts::SQRT_2;
    (r2 * s, -r2 * s * t.tanh())
}

/// The analytic loop sampled every `spacing` on `[−half_width, half_width]`.
///
/// A backward adjoint solve amplifies interpolation error near the start
/// saddle by `e^{−t}`, so wide windows want a fine `spacing`.
pub fn analytic_orbit(half_width: f64, spacing: f64) -> OrbitTrajectory {
    let n = (2.0 * half_width / spacing).round() as usize;
    let mut path = SampledPath::new(2);
    let mut d = [0.0; 2];
    for i in 0..=n {
        let t = -half_width + i as f64 * spacing;
        let (x, y) = duffing_homoclinic(t);
        field(&[x, y], &mut d);
        path.push(t, &[x, y], &d);
    }
    OrbitTrajectory {
        path,
        steady: vec![0.0, 0.0],
        end_equilibrium: vec![0.0, 0.0],
        return_distance: 0.0,
        initial_return_distance: 0.0,
        peak_excursion: 2.0f64.sqrt(),
        time_offset: 0.0,
        delta: 0.0,
        direction: vec![1.0, 1.0],
        shots: 0,
        converged: true,
    }
}

/// Settings for [`brute_force_split`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    /// RK4 step.
    pub dt: f64,
    /// Distance of the manifold seeds from the perturbed saddle.
    pub seed_distance: f64,
    /// Bisection tolerance on `ln δ`.
    pub tol: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            seed_distance: 1e-6,
            tol: 1e-13,
        }
    }
}

struct Forced {
    epsilon: f64,
    omega: f64,
    dt: f64,
}

impl Forced {
    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) {
        field(y, out);
        out[1] += self.epsilon * (self.omega * t).cos();
    }

    /// State at time `to` from `y` at time `from`.
    fn flow(&self, y: [f64; 2], from: f64, to: f64) -> Result<[f64; 2], IntegrationError> {
        if from == to {
            return Ok(y);
        }
        let span = (to - from).abs();
        let steps = (span / self.dt).ceil().max(1.0) as usize;
        let cfg = IntegrationConfig::new(span / steps as f64, span, steps)?;
        let dir = if to > from { Direction::Forward } else { Direction::Backward };
        let p = rk4_integrate(|t, y, o| self.rhs(t, y, o), &y, from, dir, &cfg)?;
        let s = if dir == Direction::Forward { p.last_state() } else { p.state(0) };
        Ok([s[0], s[1]])
    }

    fn period(&self) -> f64 {
        2.0 * core::f64::consts::PI / self.omega
    }

    /// Point of the saddle's periodic orbit at time `s` and the monodromy there.
    fn periodic_point(&self, s: f64) -> Result<([f64; 2], Matrix2<f64>), OracleError> {
        let tp = self.period();
        let fd = 1e-7;
        let monodromy = |x: [f64; 2]| -> Result<([f64; 2], Matrix2<f64>), IntegrationError> {
            let px = self.flow(x, s, s + tp)?;
            let mut m = Matrix2::zeros();
            for c in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[c] += fd;
                xm[c] -= fd;
                let (a, b) = (self.flow(xp, s, s + tp)?, self.flow(xm, s, s + tp)?);
                for r in 0..2 {
                    m[(r, c)] = (a[r] - b[r]) / (2.0 * fd);
                }
            }
            Ok((px, m))
        };
        let w2 = 1.0 + self.omega * self.omega;
        let mut x = [-self.epsilon * (self.omega * s).cos() / w2, self.epsilon * self.omega * (self.omega * s).sin() / w2];
        for _ in 0..20 {
            let (px, m) = monodromy(x)?;
            let r = nalgebra::Vector2::new(px[0] - x[0], px[1] - x[1]);
            if r.norm() <= 1e-15 {
                return Ok((x, m));
            }
            let step = (m - Matrix2::identity())
                .lu()
                .solve(&(-r))
                .ok_or(OracleError::PeriodicOrbit)?;
            x[0] += step[0];
            x[1] += step[1];
            if step.norm() <= 1e-15 {
                let (_, m) = monodromy(x)?;
                return Ok((x, m));
            }
        }
        Err(OracleError::PeriodicOrbit)
    }
}

/// Eigenvector of a 2×2 matrix with a real eigenvalue `lambda`, unit length
/// with positive first entry.
fn real_eigenvector(m: &Matrix2<f64>, lambda: f64) -> [f64; 2] {
    let a = m - Matrix2::identity() * lambda;
    // A row (p, q) of the singular matrix gives the null vector (q, −p).
    let (p, q) = if a.row(0).norm() >= a.row(1).norm() { (a[(0, 0)], a[(0, 1)]) } else { (a[(1, 0)], a[(1, 1)]) };
    let mut v = [q, -p];
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
    v[0] *= sign / n;
    v[1] *= sign / n;
    v
}

fn saddle_directions(m: &Matrix2<f64>) -> ([f64; 2], [f64; 2]) {
    let tr = m.trace();
    let det = m.determinant();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (real_eigenvector(m, tr / 2.0 + disc), real_eigenvector(m, tr / 2.0 - disc))
}

/// Signed splitting `x_u − x_s` of the unstable and stable manifolds on the
/// section `y = 0` through the apex, for the time-`t0` fiber of the forced
/// system `ẍ = x − x³ + ε cos ωt`.
///
/// Seeds sit at `seed_distance` from the saddle's periodic orbit along its
/// Floquet directions, far enough in the past (future) that the unperturbed
/// loop would reach the apex at `t0`; bisection on the seed distance then puts
/// each trace exactly on the section at time `t0`.
pub fn brute_force_split(epsilon: f64, omega: f64, t0: f64, cfg: &SplitConfig) -> Result<f64, OracleError> {
    if !(0.0..=1e-2).contains(&epsilon) {
        return Err(OracleError::InvalidEpsilon(epsilon));
    }
    let sys = Forced {
        epsilon,
        omega,
        dt: cfg.dt,
    };
    // Along (1, ±1)/√2 the loop is at distance 4e^{−|t|}.
    let tau = (4.0 / cfg.seed_distance).ln();
    let trace = |s: f64, pick_unstable: bool| -> Result<f64, OracleError> {
        let (xp, dir) = if epsilon == 0.0 || omega == 0.0 {
            let r = core::f64::consts::FRAC_1_SQRT_2;
            ([0.0, 0.0], if pick_unstable { [r, r] } else { [r, -r] })
        } else {
            let (xp, m) = sys.periodic_point(s)?;
            let (u, st) = saddle_directions(&m);
            (xp, if pick_unstable { u } else { st })
        };
        let y_at = |log_delta: f64| -> Result<[f64; 2], IntegrationError> {
            let d = log_delta.exp();
            sys.flow([xp[0] + d * dir[0], xp[1] + d * dir[1]], s, t0)
        };
        let centre = cfg.seed_distance.ln();
        let (mut lo, mut hi) = (centre - 1.5, centre + 1.5);
        let (flo, fhi) = (y_at(lo)?, y_at(hi)?);
        let name = if pick_unstable { "unstable" } else { "stable" };
        if flo[1] * fhi[1] > 0.0 {
            return Err(OracleError::SectionMiss(name));
        }
        let lo_positive = flo[1] > 0.0;
        let mut last = flo;
        while hi - lo > cfg.tol {
            let mid = 0.5 * (lo + hi);
            let f = y_at(mid)?;
            last = f;
            if (f[1] > 0.0) == lo_positive {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if !(last[0] > 0.5) {
            return Err(OracleError::SectionMiss(name));
        }
        Ok(last[0])
    };
    let xu = trace(t0 - tau, true)?;
    let xs = trace(t0 + tau, false)?;
    Ok(xu - xs)
}

/// Sign changes of `gap(t0)` on a uniform grid over one period, each refined
/// by bisection to `tol`.
pub fn split_zero_crossings<F>(mut gap: F, period: f64, samples: usize, tol: f64) -> Result<Vec<f64>, OracleError>
where
    F: FnMut(f64) -> Result<f64, OracleError>,
{
    let grid: Vec<f64> = (0..samples).map(|i| period * i as f64 / samples as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|t| gap(*t)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for i in 0..samples {
        let (a, fa) = (grid[i], vals[i]);
        let (b, fb) = if i + 1 < samples { (grid[i + 1], vals[i + 1]) } else { (period, vals[0]) };
        if fa == 0.0 {
            out.push(a);
            continue;
        }
        if fa * fb >= 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (a, b);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let fm = gap(mid)?;
            if (fm > 0.0) == (fa > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi) % period);
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    Ok(out)
}
