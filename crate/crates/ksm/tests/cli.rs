use std::path::Path;
use std::process::Command;

use ksm::cache::write_orbit_cache;
use ksm::config::preset;
use ksm::pipeline::{run_ensemble_threaded, Pipeline};
use ksm_core::adjoint::{adjoint_solve, AdjointConfig, Normalization};
use ksm_core::homoclinic::OrbitTrajectory;
use ksm_core::oracle::{analytic_orbit, DuffingSystem};
use ksm_core::stochastic::NoiseConfig;
use ksm_core::IntegrationConfig;

fn ksm(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ksm"))
        .args(args)
        .current_dir(dir)
        .env_remove("KSM_SEED")
        .env_remove("RUST_LOG")
        .output()
        .expect("ksm runs");
    assert!(out.stdout.is_empty(), "data must not go to stdout");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn configuration_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.display().to_string()
    };
    let unknown = write("unknown.toml", "[domain]\nlength = 22.0\nmodes = 32\nlenght = 3\n");
    let (code, err) = ksm(&["steady", "--config", &unknown], dir.path());
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("lenght"), "{err}");

    let malformed = write("bad.toml", "[domain]\nlength = 22.0\nmodes = = 32\n");
    let (code, err) = ksm(&["steady", "--config", &malformed], dir.path());
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("line 3"), "{err}");

    let invalid = write("neg.toml", "[domain]\nlength = -1.0\nmodes = 32\n");
    assert_eq!(ksm(&["steady", "--config", &invalid], dir.path()).0, 2);

    assert_eq!(ksm(&["steady", "--preset", "fig9"], dir.path()).0, 2);
    let missing = dir.path().join("absent.toml").display().to_string();
    assert_eq!(ksm(&["steady", "--config", &missing], dir.path()).0, 2);
}

#[test]
fn numerical_failures_exit_with_status_three() {
    let dir = tempfile::tempdir().unwrap();
    // Too short a settle leaves the odd Newton result outside the
    // quarter-odd subspace.
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "[domain]\nlength = 22.0\nmodes = 32\n[shooting]\nsettle_time = 0.001\n").unwrap();
    let (code, err) = ksm(&["steady", "--config", &path.display().to_string(), "--out", "o"], dir.path());
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("not in the quarter-odd subspace"), "{err}");
}

#[test]
fn seed_override_must_be_an_integer() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ksm"))
        .args(["oracle", "--out", "o"])
        .current_dir(dir.path())
        .env("KSM_SEED", "twelve")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_verb_writes_a_stamped_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = ksm(&["oracle", "--out", "o"], dir.path());
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(dir.path().join("o/oracle.csv")).unwrap();
    let cfg = preset("fig1").unwrap();
    assert!(text.contains(&format!("# config_hash: {}", cfg.hash())));
    assert!(text.lines().any(|l| l == "t0,melnikov,gap_over_epsilon"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 17);
}

/// Plants an orbit in the cache: the steady state held for a short while,
/// which the flow leaves unchanged.
fn plant_orbit(cfg: &ksm::RunConfig) -> OrbitTrajectory {
    let mut p = Pipeline::new(cfg, 1).unwrap();
    let st = p.steady().unwrap().clone();
    let path = p.system().integrate(&st.state, -10.0, &IntegrationConfig::new(1e-3, 20.0, 10).unwrap()).unwrap();
    let orbit = OrbitTrajectory {
        path,
        steady: st.state.clone(),
        end_equilibrium: st.state.clone(),
        return_distance: 1e-9,
        initial_return_distance: 1e-5,
        peak_excursion: 0.0,
        time_offset: 10.0,
        delta: 1e-4,
        direction: st.manifold.basis()[0].clone(),
        shots: 1,
        converged: true,
    };
    write_orbit_cache(&orbit, &p.orbit_cache_path()).unwrap();
    orbit
}

#[test]
fn cached_orbit_is_reused_without_shooting() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("fig1").unwrap();
    cfg.directory = dir.path().join("out");
    cfg.cache = dir.path().join("cache");
    let planted = plant_orbit(&cfg);

    let mut p = Pipeline::new(&cfg, 1).unwrap();
    let o = p.orbit().unwrap().clone();
    assert_eq!(o.path.times(), planted.path.times());
    assert!(p.report.orbit_from_cache);
    assert_eq!(p.report.shooting_runs, 0);

    let (code, err) = ksm(&["orbit", "--preset", "fig1", "--out", "out", "--cache", "cache"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("reusing cached orbit"), "{err}");
    assert!(!err.contains("shooting for a homoclinic orbit"), "{err}");
    assert!(dir.path().join("out/fig1_orbit.csv").exists());
}

#[test]
fn ensembles_do_not_depend_on_the_thread_count() {
    let sys = DuffingSystem::new();
    let orbit = analytic_orbit(8.0, 1e-2);
    let cfg = AdjointConfig {
        integration: IntegrationConfig::new(1e-2, 1.0, 1).unwrap(),
        normalization: Normalization::UnitNorm,
    };
    let adj = adjoint_solve(&sys, &orbit, &cfg).unwrap();
    let noise = NoiseConfig { d: 0.02, dt: 1e-3, ensemble: 37, seed: 7 };
    let one = run_ensemble_threaded(&adj, &noise, 0, 1).unwrap();
    for threads in [2, 3, 8, 64] {
        let many = run_ensemble_threaded(&adj, &noise, 0, threads).unwrap();
        let bits = |r: &ksm_core::stochastic::EnsembleResult| r.samples.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&one), bits(&many), "{threads} threads");
    }
    // A later block of streams is a different, independent sample.
    let shifted = run_ensemble_threaded(&adj, &noise, 1 << 32, 1).unwrap();
    assert_ne!(one.samples[0], shifted.samples[0]);
}
