//! The Galerkin KS vector field packaged for the stiff integrator.

use alloc::vec::Vec;

use crate::integrators::{
    etdrk4_integrate, IntegrationConfig, IntegrationError, SampledPath, SemilinearSystem,
};
use crate::spectral::{nonlinear_real, DomainConfig};

/// `ȧ = Λa + N(a)` in real coordinates.
#[derive(Debug, Clone)]
pub struct KsSystem {
    dom: DomainConfig,
    linear: Vec<f64>,
}

impl KsSystem {
    pub fn new(dom: DomainConfig) -> Self {
        Self {
            linear: dom.linear_rates(),
            dom,
        }
    }

    pub fn domain(&self) -> &DomainConfig {
        &self.dom
    }

    /// Integrates from `y0` over `cfg.horizon`, starting the clock at `t0`.
    pub fn integrate(
        &self,
        y0: &[f64],
        t0: f64,
        cfg: &IntegrationConfig,
    ) -> Result<SampledPath, IntegrationError> {
        etdrk4_integrate(self, y0, t0, cfg)
    }
}

impl SemilinearSystem for KsSystem {
    fn linear(&self) -> &[f64] {
        &self.linear
    }

    fn nonlinear(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        nonlinear_real(y, &self.dom, out);
    }
}

/// Additively forced KS flow, `ȧ = Λa + N(a) + ε·F(t)`.
pub struct ForcedKsSystem<'a, F: Fn(f64, &mut [f64])> {
    base: &'a KsSystem,
    epsilon: f64,
    forcing: F,
}

impl<'a, F: Fn(f64, &mut [f64])> ForcedKsSystem<'a, F> {
    pub fn new(base: &'a KsSystem, epsilon: f64, forcing: F) -> Self {
        Self {
            base,
            epsilon,
            forcing,
        }
    }
}

impl<F: Fn(f64, &mut [f64])> SemilinearSystem for ForcedKsSystem<'_, F> {
    fn linear(&self) -> &[f64] {
        &self.base.linear
    }

    fn nonlinear(&self, t: f64, y: &[f64], out: &mut [f64]) {
        nonlinear_real(y, &self.base.dom, out);
        let mut f = alloc::vec![0.0; out.len()];
        (self.forcing)(t, &mut f);
        for (o, fi) in out.iter_mut().zip(&f) {
            *o += self.epsilon * fi;
        }
    }
}
