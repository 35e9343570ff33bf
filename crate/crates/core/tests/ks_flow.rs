use ksm_core::equilibria::{eigen_analysis, jacobian_real, newton_steady, restrict, seed_steady_state, NewtonConfig, Subspace};
use ksm_core::flow::KsSystem;
use ksm_core::spectral::{ks_rhs_real, DomainConfig, ModalState};
use ksm_core::IntegrationConfig;

fn domain() -> DomainConfig {
    DomainConfig::new(22.0, 32).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A generic state: two modes settled onto the attractor.
fn settled_state(sys: &KsSystem) -> Vec<f64> {
    let dom = sys.domain();
    let mut y = ModalState::sine_mode(dom, 1, 0.5).to_real();
    y[2] = 0.2;
    y[5] = -0.1;
    let cfg = IntegrationConfig::new(1e-2, 30.0, usize::MAX).unwrap();
    sys.integrate(&y, 0.0, &cfg).unwrap().last_state().to_vec()
}

fn endpoint(sys: &KsSystem, y0: &[f64], dt: f64, horizon: f64) -> Vec<f64> {
    let cfg = IntegrationConfig::new(dt, horizon, usize::MAX).unwrap();
    sys.integrate(y0, 0.0, &cfg).unwrap().last_state().to_vec()
}

#[test]
fn zero_state_spectrum_is_the_dispersion_relation() {
    let dom = domain();
    let q = 2.0 * std::f64::consts::PI / 22.0;
    let j = jacobian_real(&vec![0.0; dom.dim()], &dom);
    let mut got: Vec<f64> = eigen_analysis(&j).eigenvalues.iter().map(|l| {
        assert!(l.im.abs() < 1e-12);
        l.re
    }).collect();
    let mut want: Vec<f64> = (1..=32)
        .flat_map(|k| {
            let kq = k as f64 * q;
            let r = kq * kq - kq.powi(4);
            [r, r]
        })
        .collect();
    got.sort_by(f64::total_cmp);
    want.sort_by(f64::total_cmp);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0), "{g} vs {w}");
    }
}

#[test]
fn etdrk4_converges_at_fourth_order() {
    let sys = KsSystem::new(domain());
    let y0 = settled_state(&sys);
    // Coarser steps are still pre-asymptotic (order about 3.4 at 0.04).
    let dt = 0.01;
    let reference = endpoint(&sys, &y0, dt / 8.0, 1.0);
    let e1 = dist(&endpoint(&sys, &y0, dt, 1.0), &reference);
    let e2 = dist(&endpoint(&sys, &y0, dt / 2.0, 1.0), &reference);
    let order = (e1 / e2).log2();
    assert!((3.5..=4.5).contains(&order), "order {order} from errors {e1:e} {e2:e}");
}

#[test]
fn two_cell_steady_state_has_a_complex_unstable_pair() {
    let dom = domain();
    let guess = seed_steady_state(&dom, 0.5, 50.0, 1e-3).unwrap();
    let cfg = |subspace| NewtonConfig { subspace, ..NewtonConfig::default() };
    let odd = newton_steady(&guess, &dom, &cfg(Subspace::Odd)).unwrap();
    let e2 = newton_steady(&odd.state, &dom, &cfg(Subspace::QuarterOdd)).unwrap();
    let y = e2.state.to_real();
    let mut r = vec![0.0; y.len()];
    ks_rhs_real(&y, &dom, &mut r);
    assert!(r.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-8);
    // Two cells: only even wavenumbers are present.
    assert!(y[0].abs() + y[1].abs() < 1e-12);
    assert!(y[3].abs() > 0.1);
    let sub = Subspace::QuarterOdd;
    let sd = eigen_analysis(&restrict(&jacobian_real(&y, &dom), &sub.coordinates(&dom)));
    assert_eq!(sd.n_unstable, 2);
    let (a, b) = (sd.eigenvalues[0], sd.eigenvalues[1]);
    assert!((a.re - b.re).abs() < 1e-10 && (a.im + b.im).abs() < 1e-10 && a.im.abs() > 0.1);
}

