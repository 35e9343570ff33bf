//! Numerical core for Melnikov analysis of homoclinic orbits in a Galerkin
//! truncation of the Kuramoto–Sivashinsky equation
//! `u_t + u_xx + u_xxxx + u u_x = 0` on a periodic domain.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod adjoint;
pub mod equilibria;
pub mod flow;
pub mod homoclinic;
pub mod integrators;
pub mod math;
pub mod optimize;
pub mod oracle;
pub mod spectral;
pub mod stochastic;

pub use integrators::{
    etdrk4_integrate, rk4_integrate, Etdrk4Stepper, rk4_integrate_linear, Direction, IntegrationConfig,
    IntegrationError, SampledPath, SemilinearSystem,
};
pub use spectral::{
    from_physical, ks_rhs, linear_growth_rate, project_modes, to_physical, translate,
    DomainConfig, ModalState, RealField, SpectralError,
};
