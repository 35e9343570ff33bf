//! Steady states of the Galerkin system and their linear stability.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)] // float methods come from here without std
use crate::math::{cabs, Real};
use thiserror::Error;

use crate::flow::KsSystem;
use crate::integrators::{IntegrationConfig, IntegrationError};
use crate::spectral::{
    ks_rhs_real, linear_growth_rate, nonlinear_jacobian_action, DomainConfig, ModalState,
    SpectralError,
};

/// Threshold on `Re λ` separating unstable directions from numerical zero modes.
pub const UNSTABLE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error("Newton did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("Jacobian is singular at iteration {0}")]
    SingularJacobian(usize),
    #[error("guess is not in the {0} subspace")]
    NotInSubspace(&'static str),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Which coordinates a computation runs in.
///
/// Each variant is a zero pattern in real coordinates that the Galerkin flow
/// preserves exactly, so states started inside stay inside bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subspace {
    /// Purely imaginary coefficients: fields odd about `x = 0` (sine series).
    Odd,
    /// Fields odd about `x = L/4`, i.e. `u(L/2 − x) = −u(x)`: real `a_k` for
    /// odd `k`, imaginary `a_k` for even `k`.
    QuarterOdd,
    /// All `2N` real coordinates.
    Full,
}

impl Subspace {
    /// Indices of the real coordinates that belong to the subspace.
    pub fn coordinates(&self, dom: &DomainConfig) -> Vec<usize> {
        match self {
            Subspace::Odd => (0..dom.modes()).map(|k| 2 * k + 1).collect(),
            // k = i + 1: odd k keeps Re (slot 2i), even k keeps Im (slot 2i + 1).
            Subspace::QuarterOdd => (0..dom.modes()).map(|i| 2 * i + (i % 2)).collect(),
            Subspace::Full => (0..dom.dim()).collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Subspace::Odd => "odd",
            Subspace::QuarterOdd => "quarter-odd",
            Subspace::Full => "full",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "odd" => Some(Subspace::Odd),
            "quarter-odd" => Some(Subspace::QuarterOdd),
            "full" => Some(Subspace::Full),
            _ => None,
        }
    }

    /// Norm of the part of `y` outside the subspace.
    pub fn leakage(&self, y: &[f64], dom: &DomainConfig) -> f64 {
        let mut keep = vec![false; y.len()];
        for i in self.coordinates(dom) {
            keep[i] = true;
        }
        y.iter()
            .zip(&keep)
            .filter(|(_, k)| !**k)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Zeroes every coordinate outside the subspace.
    pub fn project(&self, y: &[f64], dom: &DomainConfig) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        for i in self.coordinates(dom) {
            out[i] = y[i];
        }
        out
    }

    /// Embeds a vector of subspace coordinates into all `2N` coordinates.
    pub fn embed<T: Copy + Default>(&self, v: &[T], dom: &DomainConfig) -> Vec<T> {
        let mut out = vec![T::default(); dom.dim()];
        for (x, i) in v.iter().zip(self.coordinates(dom)) {
            out[i] = *x;
        }
        out
    }
}

/// Relative leakage below which a guess is projected into the Newton subspace.
pub const SUBSPACE_SNAP: f64 = 1e-6;

pub fn real_coordinates(state: &ModalState) -> Vec<f64> {
    state.to_real()
}

pub fn from_real_coordinates(y: &[f64]) -> Result<ModalState, SpectralError> {
    ModalState::from_real(y)
}

/// Dense Jacobian of the Galerkin right-hand side in real coordinates.
pub fn jacobian_real(y: &[f64], dom: &DomainConfig) -> DMatrix<f64> {
    let n = dom.dim();
    let mut j = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for c in 0..n {
        e[c] = 1.0;
        nonlinear_jacobian_action(y, &e, dom, &mut col);
        e[c] = 0.0;
        for r in 0..n {
            j[(r, c)] = col[r];
        }
    }
    for k in 1..=dom.modes() {
        let l = linear_growth_rate(k as i64, dom);
        j[(2 * k - 2, 2 * k - 2)] += l;
        j[(2 * k - 1, 2 * k - 1)] += l;
    }
    j
}

pub fn jacobian(state: &ModalState, dom: &DomainConfig) -> DMatrix<f64> {
    jacobian_real(&state.to_real(), dom)
}

/// Jacobian restricted to the rows and columns of a subspace.
pub fn restrict(j: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| j[(idx[r], idx[c])])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub subspace: Subspace,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            subspace: Subspace::Odd,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub state: ModalState,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    /// Residual after each iterate, starting with the guess.
    pub residual_history: Vec<f64>,
}

fn residual(y: &[f64], dom: &DomainConfig) -> Vec<f64> {
    let mut r = vec![0.0; y.len()];
    ks_rhs_real(y, dom, &mut r);
    r
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton iteration on `ks_rhs = 0` within a subspace.
///
/// A guess whose leakage out of the subspace is below [`SUBSPACE_SNAP`]
/// (relative) is projected first. In the symmetric subspaces the translation
/// zero mode is absent and the step is an LU solve. In the full space the
/// Jacobian of a nonzero state is singular along `∂_x u`, so the step is the
/// minimum-norm least-squares solution.
pub fn newton_steady(
    guess: &ModalState,
    dom: &DomainConfig,
    cfg: &NewtonConfig,
) -> Result<SteadyState, EquilibriumError> {
    if !(cfg.tol > 0.0) {
        return Err(EquilibriumError::InvalidTolerance(cfg.tol));
    }
    let raw = guess.to_real();
    let leak = cfg.subspace.leakage(&raw, dom);
    if leak > SUBSPACE_SNAP * norm(&raw) {
        return Err(EquilibriumError::NotInSubspace(cfg.subspace.name()));
    }
    let idx = cfg.subspace.coordinates(dom);
    let mut y = cfg.subspace.project(&raw, dom);
    let mut r = residual(&y, dom);
    let mut rn = norm(&r);
    let mut history = vec![rn];
    let mut iter = 0;
    while rn > cfg.tol {
        if iter == cfg.max_iter {
            return Err(EquilibriumError::NoConvergence(cfg.max_iter));
        }
        iter += 1;
        let j = restrict(&jacobian_real(&y, dom), &idx);
        let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| -r[i]));
        let step = match cfg.subspace {
            Subspace::Odd | Subspace::QuarterOdd => j
                .lu()
                .solve(&rhs)
                .ok_or(EquilibriumError::SingularJacobian(iter))?,
            Subspace::Full => {
                let svd = j.svd(true, true);
                let smax = svd.singular_values.max();
                svd.solve(&rhs, 1e-10 * smax)
                    .map_err(|_| EquilibriumError::SingularJacobian(iter))?
            }
        };
        if step.iter().any(|v| !v.is_finite()) {
            return Err(EquilibriumError::SingularJacobian(iter));
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let mut trial = y.clone();
            for (s, &i) in step.iter().zip(&idx) {
                trial[i] += lambda * s;
            }
            let tr = residual(&trial, dom);
            let tn = norm(&tr);
            if tn < rn {
                y = trial;
                r = tr;
                rn = tn;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(EquilibriumError::NoConvergence(iter));
        }
        history.push(rn);
    }
    Ok(SteadyState {
        state: ModalState::from_real(&y)?,
        residual_norm: rn,
        newton_iterations: iter,
        residual_history: history,
    })
}

/// Integrates `amplitude·sin(qx)` for `settle_time` and returns the endpoint,
/// a starting guess for [`newton_steady`].
pub fn seed_steady_state(
    dom: &DomainConfig,
    amplitude: f64,
    settle_time: f64,
    dt: f64,
) -> Result<ModalState, EquilibriumError> {
    let sys = KsSystem::new(*dom);
    let y0 = ModalState::sine_mode(dom, 1, amplitude).to_real();
    let cfg = IntegrationConfig::new(dt, settle_time, usize::MAX)?;
    let path = sys.integrate(&y0, 0.0, &cfg)?;
    Ok(ModalState::from_real(path.last_state())?)
}

/// Eigen-decomposition of a real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// Sorted by descending real part, then descending imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm eigenvectors; the largest component is real and positive.
    pub eigenvectors: Vec<Vec<Complex64>>,
    pub n_unstable: usize,
}

impl SpectralData {
    /// Orthonormal real basis of the unstable subspace, built from the real and
    /// imaginary parts of each unstable eigenvector.
    pub fn unstable_basis(&self) -> Vec<Vec<f64>> {
        let mut raw: Vec<Vec<f64>> = Vec::new();
        for (lam, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            if lam.re <= UNSTABLE_THRESHOLD || lam.im < 0.0 {
                continue;
            }
            raw.push(v.iter().map(|c| c.re).collect());
            if lam.im > 0.0 {
                raw.push(v.iter().map(|c| c.im).collect());
            }
        }
        gram_schmidt(raw)
    }

    /// Eigenvalue with the largest real part among those with `Re λ < −threshold`.
    pub fn leading_stable(&self) -> Option<(Complex64, &[Complex64])> {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .find(|(l, _)| l.re < -UNSTABLE_THRESHOLD)
            .map(|(l, v)| (*l, v.as_slice()))
    }

    /// Lifts eigenvectors computed on a subspace Jacobian to all coordinates.
    pub fn embed(&self, subspace: Subspace, dom: &DomainConfig) -> Self {
        Self {
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: self
                .eigenvectors
                .iter()
                .map(|v| subspace.embed(v, dom))
                .collect(),
            n_unstable: self.n_unstable,
        }
    }

    /// `‖Jv − λv‖` for eigenpair `i`.
    pub fn residual(&self, j: &DMatrix<f64>, i: usize) -> f64 {
        let v = &self.eigenvectors[i];
        let lam = self.eigenvalues[i];
        (0..j.nrows())
            .map(|r| {
                let jv: Complex64 = (0..j.ncols()).map(|c| v[c] * j[(r, c)]).sum();
                (jv - lam * v[r]).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn gram_schmidt(vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vs {
        for _ in 0..2 {
            for u in &out {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (a, b) in v.iter_mut().zip(u) {
                    *a -= d * b;
                }
            }
        }
        let n = norm(&v);
        if n > 1e-12 {
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}

fn normalize_phase(v: &mut [Complex64]) {
    let (mut big, mut idx) = (0.0, 0);
    for (i, c) in v.iter().enumerate() {
        if cabs(*c) > big {
            big = cabs(*c);
            idx = i;
        }
    }
    let nrm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let phase = if big > 0.0 { v[idx].conj() / big } else { Complex64::new(1.0, 0.0) };
    for c in v.iter_mut() {
        *c = *c * phase / nrm;
    }
    v[idx].im = 0.0;
}

/// Inverse iteration for the eigenvector of `λ`, kept orthogonal to `against`
/// so repeated eigenvalues yield independent vectors.
fn inverse_iteration(
    jc: &DMatrix<Complex64>,
    lambda: Complex64,
    against: &[&Vec<Complex64>],
) -> Vec<Complex64> {
    let n = jc.nrows();
    let scale = jc.iter().fold(0.0f64, |a, c| a.max(cabs(*c))).max(1.0);
    let shift = lambda + Complex64::new(1e-10 * scale, 0.0);
    let mut a = jc.clone();
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let lu = a.lu();
    // A fresh start vector per repeated eigenvalue: reusing one would leave
    // nothing of the eigenspace once the earlier vectors are projected out.
    let salt = 1 + 2 * against.len();
    let mut x = DVector::from_fn(n, |i, _| {
        Complex64::new(1.0 + ((i * 37 * salt + 5 * salt) % 11) as f64 / 7.0, 0.0)
    });
    let project = |x: &mut DVector<Complex64>| {
        for u in against {
            let d: Complex64 = u.iter().zip(x.iter()).map(|(a, b)| a.conj() * b).sum();
            for (xi, ui) in x.iter_mut().zip(u.iter()) {
                *xi -= d * ui;
            }
        }
    };
    for _ in 0..6 {
        project(&mut x);
        if let Some(y) = lu.solve(&x) {
            x = y;
        }
        let nrm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(nrm.is_finite() && nrm > 0.0) {
            break;
        }
        x /= Complex64::new(nrm, 0.0);
    }
    project(&mut x);
    x.iter().copied().collect()
}

/// Full dense eigen-decomposition: Schur eigenvalues, inverse-iteration
/// eigenvectors, and a Rayleigh-quotient polish of each eigenvalue.
pub fn eigen_analysis(j: &DMatrix<f64>) -> SpectralData {
    let n = j.nrows();
    let mut lams: Vec<Complex64> = j.clone().complex_eigenvalues().iter().copied().collect();
    lams.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(core::cmp::Ordering::Equal))
    });
    let jc: DMatrix<Complex64> = j.map(|v| Complex64::new(v, 0.0));
    let scale = j.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let close = |a: Complex64, b: Complex64| cabs(a - b) <= 1e-8 * scale;

    let mut values: Vec<Complex64> = Vec::with_capacity(n);
    let mut vectors: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut used_partner = vec![false; n];
    for &lam in &lams {
        if lam.im < 0.0 {
            // Conjugate of an already computed partner.
            if let Some(p) = (0..values.len())
                .find(|&p| !used_partner[p] && values[p].im > 0.0 && close(values[p], lam.conj()))
            {
                used_partner[p] = true;
                values.push(values[p].conj());
                vectors.push(vectors[p].iter().map(|c| c.conj()).collect());
                continue;
            }
        }
        let against: Vec<&Vec<Complex64>> = values
            .iter()
            .zip(&vectors)
            .filter(|(l, _)| close(**l, lam))
            .map(|(_, v)| v)
            .collect();
        let mut v = inverse_iteration(&jc, lam, &against);
        normalize_phase(&mut v);
        let jv: Vec<Complex64> = (0..n)
            .map(|r| (0..n).map(|c| v[c] * j[(r, c)]).sum())
            .collect();
        let mut rq: Complex64 = v.iter().zip(&jv).map(|(a, b)| a.conj() * b).sum();
        if lam.im == 0.0 {
            rq.im = 0.0;
            for c in v.iter_mut() {
                c.im = 0.0;
            }
            let nrm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for c in v.iter_mut() {
                *c /= nrm;
            }
        }
        values.push(rq);
        vectors.push(v);
    }
    let n_unstable = values.iter().filter(|l| l.re > UNSTABLE_THRESHOLD).count();
    SpectralData {
        eigenvalues: values,
        eigenvectors: vectors,
        n_unstable,
    }
}

/// Left eigenvectors: eigen-decomposition of `Jᵀ`.
pub fn left_eigen_analysis(j: &DMatrix<f64>) -> SpectralData {
    eigen_analysis(&j.transpose())
}
