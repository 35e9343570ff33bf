//! Stage chain: steady state, orbit, adjoint, then the Melnikov, stochastic
//! and figure products built on them.

use std::f64::consts::PI;
use std::path::PathBuf;

use ksm_core::adjoint::{
    adjoint_solve, frequency_sweep, melnikov_periodic, pairing_check, sampled_zeros, AdjointConfig,
    AdjointTrajectory, MelnikovResult, PairingCheck, SweepRow,
};
use ksm_core::equilibria::{
    eigen_analysis, jacobian_real, newton_steady, restrict, seed_steady_state, SpectralData, Subspace,
};
use ksm_core::flow::{ForcedKsSystem, KsSystem};
use ksm_core::homoclinic::{extend_orbit, find_homoclinic, HomoclinicError, OrbitTrajectory, UnstableManifold};
use ksm_core::oracle::{analytic_orbit, brute_force_split, split_zero_crossings, DuffingSystem, SplitConfig};
use ksm_core::spectral::project_modes_real;
use ksm_core::stochastic::{
    histogram, integrate_with_noise, predicted_variance, realization_rng, rms_scaling_fit, sample_range,
    EnsembleResult, NoiseConfig,
};
use ksm_core::{etdrk4_integrate, DomainConfig, ModalState, SampledPath};

use crate::cache::{read_orbit_cache, write_orbit_cache, FORMAT_VERSION};
use crate::config::{hash_hex, ConfigError, RunConfig, PRESETS};
use crate::table::{RunMeta, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Steady,
    Orbit,
    Adjoint,
    Melnikov,
    Sweep,
    Stochastic,
    Wander,
    Oracle,
    Figures,
}

impl Verb {
    pub const ALL: [Verb; 9] = [
        Verb::Steady,
        Verb::Orbit,
        Verb::Adjoint,
        Verb::Melnikov,
        Verb::Sweep,
        Verb::Stochastic,
        Verb::Wander,
        Verb::Oracle,
        Verb::Figures,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Verb::Steady => "steady",
            Verb::Orbit => "orbit",
            Verb::Adjoint => "adjoint",
            Verb::Melnikov => "melnikov",
            Verb::Sweep => "sweep",
            Verb::Stochastic => "stochastic",
            Verb::Wander => "wander",
            Verb::Oracle => "oracle",
            Verb::Figures => "figures",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 3,
        }
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}

/// What a run did, for the exit status and for tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub orbit_from_cache: bool,
    pub shooting_runs: usize,
    /// Conditions under which output was still written.
    pub warnings: Vec<String>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.warnings.is_empty() {
            0
        } else {
            4
        }
    }

    fn absorb(&mut self, other: Report) {
        self.files.extend(other.files);
        self.orbit_from_cache |= other.orbit_from_cache;
        self.shooting_runs += other.shooting_runs;
        self.warnings.extend(other.warnings);
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStage {
    pub state: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub subspace: Subspace,
    /// Spectrum of the Jacobian restricted to the subspace, lifted back.
    pub spectral: SpectralData,
    pub manifold: UnstableManifold,
}

#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub d: f64,
    pub rms: f64,
    pub predicted_rms: f64,
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub omega: f64,
    pub epsilon: f64,
    pub melnikov: MelnikovResult,
    pub crossings: Vec<f64>,
    /// `(t0, M(t0), gap(t0)/ε)` on a uniform phase grid.
    pub samples: Vec<(f64, f64, f64)>,
    /// `gap/ε` at the phase of largest splitting for each ε.
    pub ratios: Vec<(f64, f64)>,
    /// `ψ_x(0)`, which converts a gap into the Melnikov normal distance.
    pub psi_normal: f64,
}

pub struct Pipeline<'c> {
    cfg: &'c RunConfig,
    threads: usize,
    dom: DomainConfig,
    sys: KsSystem,
    meta: RunMeta,
    steady: Option<SteadyStage>,
    orbit: Option<OrbitTrajectory>,
    extended: Option<(f64, OrbitTrajectory)>,
    adjoints: Vec<(f64, AdjointTrajectory)>,
    pub report: Report,
}

impl<'c> Pipeline<'c> {
    pub fn new(cfg: &'c RunConfig, threads: usize) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let dom = cfg.domain()?;
        Ok(Self {
            cfg,
            threads: threads.max(1),
            dom,
            sys: KsSystem::new(dom),
            meta: RunMeta { label: cfg.label.clone(), config_hash: cfg.hash(), seed: cfg.numerics.noise.seed },
            steady: None,
            orbit: None,
            extended: None,
            adjoints: Vec::new(),
            report: Report::default(),
        })
    }

    pub fn system(&self) -> &KsSystem {
        &self.sys
    }

    pub fn meta(&self) -> &RunMeta {
        &self.meta
    }

    fn write(&mut self, table: Table) -> Result<(), PipelineError> {
        let p = table.write(&self.cfg.directory, &self.meta)?;
        self.report.files.push(p);
        Ok(())
    }

    fn warn(&mut self, text: String) {
        log::warn!("{text}");
        self.report.warnings.push(text);
    }

    /// Newton in the odd subspace from a settled `sin(qx)` seed, then a
    /// polish in the configured subspace.
    pub fn steady(&mut self) -> Result<&SteadyStage, PipelineError> {
        if self.steady.is_none() {
            let s = &self.cfg.numerics.shooting;
            let err = stage("steady");
            let guess = seed_steady_state(&self.dom, s.seed_amplitude, s.settle_time, self.cfg.numerics.integration.dt)
                .map_err(&err)?;
            let odd = newton_steady(&guess, &self.dom, &self.cfg.newton(Subspace::Odd)).map_err(&err)?;
            let subspace = self.cfg.subspace()?;
            let polished = match subspace {
                Subspace::Odd => odd,
                other => newton_steady(&odd.state, &self.dom, &self.cfg.newton(other)).map_err(&err)?,
            };
            let y = polished.state.to_real();
            let j = jacobian_real(&y, &self.dom);
            let spectral = match subspace {
                Subspace::Full => eigen_analysis(&j),
                sub => eigen_analysis(&restrict(&j, &sub.coordinates(&self.dom))).embed(sub, &self.dom),
            };
            let manifold = UnstableManifold::from_spectral(&spectral).map_err(stage("steady"))?;
            log::info!(
                "steady state: residual {:.3e} after {} Newton steps in the {} subspace, {} unstable eigenvalues",
                polished.residual_norm,
                polished.newton_iterations,
                subspace.name(),
                spectral.n_unstable
            );
            self.steady = Some(SteadyStage {
                state: y,
                residual: polished.residual_norm,
                iterations: polished.newton_iterations,
                subspace,
                spectral,
                manifold,
            });
        }
        Ok(self.steady.as_ref().unwrap())
    }

    /// Cache file for the shooting result of this configuration.
    pub fn orbit_cache_path(&self) -> PathBuf {
        let n = &self.cfg.numerics;
        #[derive(serde::Serialize)]
        struct OrbitKey<'a> {
            format: u32,
            domain: &'a crate::config::DomainSection,
            integration: &'a crate::config::IntegrationSection,
            shooting: &'a crate::config::ShootingSection,
        }
        let key = hash_hex(&OrbitKey {
            format: FORMAT_VERSION,
            domain: &n.domain,
            integration: &n.integration,
            shooting: &n.shooting,
        });
        self.cfg.cache.join(format!("orbit-{}.bin", &key[..16]))
    }

    /// The shooting result, from the cache when one matches.
    pub fn orbit(&mut self) -> Result<&OrbitTrajectory, PipelineError> {
        if self.orbit.is_none() {
            let path = self.orbit_cache_path();
            let cached = if path.exists() {
                match read_orbit_cache(&path) {
                    Ok(o) => {
                        log::info!("reusing cached orbit {}", path.display());
                        Some(o)
                    }
                    Err(e) => {
                        log::warn!("ignoring orbit cache {}: {e}", path.display());
                        None
                    }
                }
            } else {
                None
            };
            let orbit = match cached {
                Some(o) => {
                    self.report.orbit_from_cache = true;
                    o
                }
                None => {
                    let steady = self.steady()?.clone();
                    let shooting = self.cfg.shooting()?;
                    log::info!("shooting for a homoclinic orbit (up to {} shots)", shooting.max_shots);
                    self.report.shooting_runs += 1;
                    let o = HomoclinicError::accept_best(find_homoclinic(
                        &self.sys,
                        &steady.state,
                        &steady.manifold,
                        &shooting,
                    ))
                    .map_err(stage("orbit"))?;
                    write_orbit_cache(&o, &path).map_err(stage("orbit cache"))?;
                    o
                }
            };
            log::info!(
                "orbit: return distance {:.3e} (first shot {:.3e}) after {} shots",
                orbit.return_distance,
                orbit.initial_return_distance,
                orbit.shots
            );
            if !orbit.converged {
                self.warn(format!(
                    "orbit return distance {:.3e} is above the tolerance {:.3e}",
                    orbit.return_distance, self.cfg.numerics.shooting.return_tol
                ));
            }
            self.orbit = Some(orbit);
        }
        Ok(self.orbit.as_ref().unwrap())
    }

    /// The orbit cut to `[−half_width, half_width]`. It is re-integrated once
    /// to cover the widest window the configuration uses, so every product
    /// sees the same orbit.
    pub fn orbit_window(&mut self, half_width: f64) -> Result<OrbitTrajectory, PipelineError> {
        let covered = self.extended.as_ref().is_some_and(|(w, _)| *w >= half_width);
        if !covered {
            let n = &self.cfg.numerics;
            let reach = half_width
                .max(n.forcing.window)
                .max(n.noise.window)
                .max(0.5 * n.shooting.duration);
            let orbit = self.orbit()?.clone();
            let manifold = self.steady()?.manifold.clone();
            let extended = extend_orbit(&self.sys, &orbit, &manifold, -reach, reach, &self.cfg.shooting()?)
                .map_err(stage("orbit extension"))?;
            log::info!(
                "orbit re-integrated over [{:.2}, {:.2}], return distance {:.3e}",
                extended.t_start(),
                extended.t_end(),
                extended.return_distance
            );
            self.extended = Some((reach, extended));
        }
        Ok(self.extended.as_ref().unwrap().1.window(-half_width, half_width))
    }

    pub fn adjoint_config(&self) -> Result<AdjointConfig, PipelineError> {
        Ok(AdjointConfig { integration: self.cfg.integration(1.0)?, normalization: self.cfg.normalization()? })
    }

    /// Bounded adjoint on the orbit window of the given half-width.
    pub fn adjoint(&mut self, half_width: f64) -> Result<AdjointTrajectory, PipelineError> {
        if let Some((_, a)) = self.adjoints.iter().find(|(w, _)| *w == half_width) {
            return Ok(a.clone());
        }
        let orbit = self.orbit_window(half_width)?;
        let adj = adjoint_solve(&self.sys, &orbit, &self.adjoint_config()?).map_err(stage("adjoint"))?;
        log::info!(
            "adjoint on [{}, {}]: terminal eigenvalue {:.6}{:+.6}i, pairing drift {:.3e}",
            adj.t_start(),
            adj.t_end(),
            adj.terminal_eigenvalue.re,
            adj.terminal_eigenvalue.im,
            adj.normalization_residual
        );
        self.adjoints.push((half_width, adj.clone()));
        Ok(adj)
    }

    /// Conservation of `⟨ψ, v⟩` against a forward variational solution.
    pub fn pairing(&mut self, half_width: f64) -> Result<PairingCheck, PipelineError> {
        let orbit = self.orbit_window(half_width)?;
        let adj = self.adjoint(half_width)?;
        pairing_check(&self.sys, &orbit, &adj, &self.cfg.integration(1.0)?).map_err(stage("pairing check"))
    }

    pub fn melnikov(&mut self) -> Result<MelnikovResult, PipelineError> {
        let adj = self.adjoint(self.cfg.numerics.forcing.window)?;
        melnikov_periodic(&adj, &self.cfg.forcing_profile()?, self.cfg.numerics.forcing.omega).map_err(stage("melnikov"))
    }

    pub fn sweep(&mut self) -> Result<Vec<SweepRow>, PipelineError> {
        let adj = self.adjoint(self.cfg.numerics.forcing.window)?;
        frequency_sweep(&adj, &self.cfg.forcing_profile()?, &self.cfg.omega_grid()).map_err(stage("sweep"))
    }

    /// Ensemble at intensity `d` over realization streams starting at
    /// `first_stream`, split over the worker threads.
    pub fn ensemble(&mut self, d: f64, first_stream: u64) -> Result<EnsembleResult, PipelineError> {
        let adj = self.adjoint(self.cfg.numerics.noise.window)?;
        let noise = self.cfg.noise()?.with_intensity(d);
        run_ensemble_threaded(&adj, &noise, first_stream, self.threads).map_err(stage("stochastic"))
    }

    /// One independent ensemble per intensity of the scaling grid: the k-th
    /// uses streams from `(k + 1)·2³²`, disjoint from the main ensemble.
    pub fn scaling(&mut self) -> Result<(Vec<ScalingRow>, f64), PipelineError> {
        let mut rows = Vec::new();
        let adj = self.adjoint(self.cfg.numerics.noise.window)?;
        let mut noise = self.cfg.noise()?;
        noise.ensemble = self.cfg.numerics.noise.scaling_ensemble;
        for (k, d) in self.cfg.numerics.noise.scaling.clone().into_iter().enumerate() {
            let r = run_ensemble_threaded(&adj, &noise.with_intensity(d), (k as u64 + 1) << 32, self.threads)
                .map_err(stage("scaling"))?;
            rows.push(ScalingRow { d, rms: r.rms, predicted_rms: r.predicted_var.sqrt() });
        }
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.d, r.rms)).collect();
        let slope = rms_scaling_fit(&pts).map_err(stage("scaling"))?;
        Ok((rows, slope))
    }

    /// Start of the shot that produced the orbit, `a_s + δ·direction`.
    fn shot_start(&mut self) -> Result<Vec<f64>, PipelineError> {
        let o = self.orbit()?;
        Ok(o.steady.iter().zip(&o.direction).map(|(s, d)| s + o.delta * d).collect())
    }

    /// The periodically forced flow from the shot start.
    pub fn forced_trajectory(&mut self) -> Result<SampledPath, PipelineError> {
        let f = &self.cfg.numerics.forcing;
        let (epsilon, omega) = (f.epsilon, f.omega);
        let g = self.cfg.forcing_profile()?.modal_g;
        let y0 = self.shot_start()?;
        let forced = ForcedKsSystem::new(&self.sys, epsilon, |t, out: &mut [f64]| {
            let c = (omega * t).cos();
            for (o, gi) in out.iter_mut().zip(&g) {
                *o = c * gi;
            }
        });
        etdrk4_integrate(&forced, &y0, 0.0, &self.cfg.integration(f.trajectory_time)?).map_err(stage("forced trajectory"))
    }

    /// Noise-driven run from the steady state.
    pub fn wander(&mut self) -> Result<SampledPath, PipelineError> {
        let n = &self.cfg.numerics.noise;
        let (d, time, seed) = (n.intensity, n.wander_time, n.seed);
        let y0 = self.steady()?.state.clone();
        let mut cfg = self.cfg.integration(time)?;
        cfg.dt = n.dt;
        // Stream 2⁶³ is outside every ensemble block.
        integrate_with_noise(&self.sys, &y0, 0.0, &cfg, d, realization_rng(seed, 1 << 63)).map_err(stage("wander"))
    }

    pub fn run(&mut self, verb: Verb) -> Result<(), PipelineError> {
        std::fs::create_dir_all(&self.cfg.directory)?;
        match verb {
            Verb::Steady => self.emit_steady(),
            Verb::Orbit => {
                self.emit_fig1()?;
                self.emit_fig2()
            }
            Verb::Adjoint => self.emit_adjoint(),
            Verb::Melnikov => self.emit_fig3(),
            Verb::Sweep => self.emit_fig4(),
            Verb::Stochastic => self.emit_fig5(),
            Verb::Wander => self.emit_fig6(),
            Verb::Oracle => self.emit_oracle(),
            Verb::Figures => Err(PipelineError::Stage {
                stage: "figures",
                message: "runs over presets; use run_figures".into(),
            }),
        }
    }

    fn emit_steady(&mut self) -> Result<(), PipelineError> {
        let st = self.steady()?.clone();
        let modal = ModalState::from_real(&st.state).map_err(stage("steady"))?;
        let mut t = Table::new("steady_state", &[("k", "mode index"), ("re_a", "1"), ("im_a", "1")])
            .note(format!("residual {:e} in the {} subspace", st.residual, st.subspace.name()));
        for (k, c) in modal.coeffs().iter().enumerate().skip(1) {
            t.push(vec![k.into(), c.re.into(), c.im.into()]);
        }
        self.write(t)?;
        let mut s = Table::new("spectrum", &[("index", "1"), ("re_lambda", "1/time"), ("im_lambda", "1/time")])
            .note(format!("Jacobian restricted to the {} subspace", st.subspace.name()));
        for (i, l) in st.spectral.eigenvalues.iter().enumerate() {
            s.push(vec![i.into(), l.re.into(), l.im.into()]);
        }
        self.write(s)?;
        if st.residual > self.cfg.numerics.shooting.steady_tol {
            self.warn(format!("steady residual {:.3e} above tolerance", st.residual));
        }
        Ok(())
    }

    fn emit_fig1(&mut self) -> Result<(), PipelineError> {
        let half = 0.5 * self.cfg.numerics.shooting.duration;
        let orbit = self.orbit_window(half)?;
        let excursions = orbit.excursions(&self.sys);
        let mut t = Table::new(
            "fig1_orbit",
            &[("t", "time"), ("mode1", "1"), ("mode2", "1"), ("excursion_norm", "1")],
        )
        .note("mode1 = 2|a_1|, mode2 = 2|a_2|; excursion_norm is the distance to the steady state modulo translation");
        for i in 0..orbit.path.len() {
            let (m1, m2) = project_modes_real(orbit.path.state(i));
            t.push(vec![orbit.path.times()[i].into(), m1.into(), m2.into(), excursions[i].into()]);
        }
        self.write(t)
    }

    fn emit_fig2(&mut self) -> Result<(), PipelineError> {
        let st = self.steady()?.clone();
        let mut t = Table::new("fig2_manifolds", &[("branch_id", "label"), ("t", "time"), ("mode1", "1"), ("mode2", "1")])
            .note("proxy: unstable branches integrate the nonlinear flow forward from eigenvector seeds")
            .note("proxy: stable branches follow the leading stable eigenmode of the linearization backward in time");
        let delta = 1e-4;
        let duration = self.cfg.numerics.shooting.duration;
        let icfg = self.cfg.integration(duration)?;
        let u = st.manifold.basis()[0].clone();
        for (label, sign) in [("unstable+", 1.0), ("unstable-", -1.0)] {
            let y0: Vec<f64> = st.state.iter().zip(&u).map(|(s, v)| s + sign * delta * v).collect();
            let path = etdrk4_integrate(&self.sys, &y0, 0.0, &icfg).map_err(stage("manifolds"))?;
            for i in 0..path.len() {
                let (m1, m2) = project_modes_real(path.state(i));
                t.push(vec![label.into(), path.times()[i].into(), m1.into(), m2.into()]);
            }
        }
        if let Some((lambda, v)) = st.spectral.leading_stable() {
            let v = v.to_vec();
            // Grow backward from δ to amplitude 0.1 along e^{λs}v.
            let span = (0.1 / delta).ln() / -lambda.re;
            let spacing = icfg.sample_spacing();
            let n = (span / spacing).ceil() as usize;
            for (label, sign) in [("stable+", 1.0), ("stable-", -1.0)] {
                for i in (0..=n).rev() {
                    let s = -(i as f64) * spacing;
                    let growth = (lambda * s).exp();
                    let y: Vec<f64> = st
                        .state
                        .iter()
                        .zip(&v)
                        .map(|(a, c)| a + sign * delta * (growth * c).re)
                        .collect();
                    let (m1, m2) = project_modes_real(&y);
                    t.push(vec![label.into(), s.into(), m1.into(), m2.into()]);
                }
            }
        }
        self.write(t)
    }

    fn emit_adjoint(&mut self) -> Result<(), PipelineError> {
        let w = self.cfg.numerics.forcing.window;
        let adj = self.adjoint(w)?;
        let check = self.pairing(w)?;
        log::info!("companion pairing drift {:.3e}", check.relative_drift);
        let norms = adj.norms();
        let mut t = Table::new("adjoint", &[("t", "time"), ("psi_norm", "1"), ("pairing", "1")])
            .note(format!("normalization {}, scale {:e}", adj.normalization.name(), adj.scale))
            .note(format!("companion pairing relative drift {:e}", check.relative_drift));
        for i in 0..adj.path.len() {
            t.push(vec![adj.path.times()[i].into(), norms[i].into(), adj.pairing[i].into()]);
        }
        self.write(t)?;
        let tol = self.cfg.numerics.forcing.adjoint_tol;
        if check.relative_drift > tol {
            self.warn(format!("adjoint pairing drift {:.3e} above {tol:e}", check.relative_drift));
        }
        Ok(())
    }

    fn emit_fig3(&mut self) -> Result<(), PipelineError> {
        let r = self.melnikov()?;
        let adj = self.adjoint(self.cfg.numerics.forcing.window)?;
        let g = self.cfg.forcing_profile()?;
        let sampled = sampled_zeros(&adj, &g, &r, 1e-12);
        let mut phase = Table::new("melnikov_phase", &[("t0", "time"), ("M", "1"), ("harmonic", "1")])
            .note(format!("omega {:e}, A {:e}, B {:e}, amplitude {:e}", r.omega, r.a, r.b, r.amplitude));
        for z in &r.zeros {
            phase = phase.note(format!("zero t0 {:e} slope {:e}", z.t0, z.slope));
        }
        for z in &sampled {
            phase = phase.note(format!("sampled zero t0 {z:e}"));
        }
        for (t0, m) in &r.samples {
            phase.push(vec![(*t0).into(), (*m).into(), r.harmonic(*t0).into()]);
        }
        self.write(phase)?;
        let path = self.forced_trajectory()?;
        let mut t = Table::new("fig3_splitting", &[("t", "time"), ("mode1", "1"), ("mode2", "1")])
            .note(format!("forcing {} cos({} t), epsilon {}", g.description, r.omega, self.cfg.numerics.forcing.epsilon));
        for i in 0..path.len() {
            let (m1, m2) = project_modes_real(path.state(i));
            t.push(vec![path.times()[i].into(), m1.into(), m2.into()]);
        }
        self.write(t)
    }

    fn emit_fig4(&mut self) -> Result<(), PipelineError> {
        let rows = self.sweep()?;
        for name in ["fig4_sweep", "melnikov_sweep"] {
            let mut t = Table::new(name, &[("omega", "1/time"), ("A", "1"), ("B", "1"), ("amplitude", "1")]);
            for r in &rows {
                t.push(vec![r.omega.into(), r.a.into(), r.b.into(), r.amplitude.into()]);
            }
            self.write(t)?;
        }
        Ok(())
    }

    fn emit_fig5(&mut self) -> Result<(), PipelineError> {
        let d = self.cfg.numerics.noise.intensity;
        let r = self.ensemble(d, 0)?;
        log::info!(
            "ensemble of {}: mean {:.3e}, variance {:.6e} against predicted {:.6e}",
            r.samples.len(),
            r.sample_mean,
            r.sample_var,
            r.predicted_var
        );
        let mut samples = Table::new("stochastic_samples", &[("index", "1"), ("M", "1")]);
        for (i, m) in r.samples.iter().enumerate() {
            samples.push(vec![i.into(), (*m).into()]);
        }
        self.write(samples)?;
        if r.predicted_var > 0.0 {
            let bins = histogram(&r.samples, r.predicted_var, self.cfg.numerics.noise.bins, 4.0).map_err(stage("histogram"))?;
            for (name, pdf) in [("fig5_hist", "gaussian_pdf"), ("stochastic_hist", "gaussian_pdf_at_center")] {
                let mut t = Table::new(name, &[("bin_left", "1"), ("bin_right", "1"), ("count", "1"), (pdf, "1")])
                    .note(format!("predicted variance {:e}, sample variance {:e}", r.predicted_var, r.sample_var));
                for b in &bins {
                    t.push(vec![b.left.into(), b.right.into(), b.count.into(), b.gaussian_pdf.into()]);
                }
                self.write(t)?;
            }
        } else {
            self.warn("predicted variance is zero, histogram skipped".into());
        }
        let (rows, slope) = self.scaling()?;
        log::info!("rms scaling exponent {slope:.4}");
        let mut t = Table::new("scaling", &[("D", "1"), ("rms", "1"), ("predicted_rms", "1")])
            .note(format!("log-log slope {slope:e}"));
        for r in &rows {
            t.push(vec![r.d.into(), r.rms.into(), r.predicted_rms.into()]);
        }
        self.write(t)
    }

    fn emit_fig6(&mut self) -> Result<(), PipelineError> {
        let path = self.wander()?;
        let orbit = self.orbit_window(self.cfg.numerics.noise.window)?;
        // Orbit points every 0.1 time units are ample for a nearest-point proxy.
        let step = ((0.1 / self.cfg.integration(1.0)?.sample_spacing()).round() as usize).max(1);
        let reference: Vec<&[f64]> = (0..orbit.path.len()).step_by(step).map(|i| orbit.path.state(i)).collect();
        let mut t = Table::new(
            "fig6_wander",
            &[("t", "time"), ("mode1", "1"), ("mode2", "1"), ("manifold_distance_proxy", "1")],
        )
        .note("proxy: manifold_distance_proxy is the Euclidean distance to the nearest sampled point of the unforced orbit");
        for i in 0..path.len() {
            let y = path.state(i);
            let dist = reference
                .iter()
                .map(|r| r.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            let (m1, m2) = project_modes_real(y);
            t.push(vec![path.times()[i].into(), m1.into(), m2.into(), dist.into()]);
        }
        self.write(t)
    }

    fn emit_oracle(&mut self) -> Result<(), PipelineError> {
        let run = oracle_run(1.0, 1e-3, 16)?;
        log::info!(
            "planar oracle: analytic zeros {:?}, brute-force crossings {:?}",
            run.melnikov.zeros.iter().map(|z| z.t0).collect::<Vec<_>>(),
            run.crossings
        );
        let mut t = Table::new("oracle", &[("t0", "time"), ("melnikov", "1"), ("gap_over_epsilon", "1")])
            .note(format!("x'' = x - x^3 forced by (0, cos({} t)), epsilon {}", run.omega, run.epsilon))
            .note(format!("psi_x(0) {:e}", run.psi_normal));
        for (e, q) in &run.ratios {
            t = t.note(format!("gap/epsilon {q:e} at epsilon {e:e}"));
        }
        for (t0, m, g) in &run.samples {
            t.push(vec![(*t0).into(), (*m).into(), (*g).into()]);
        }
        self.write(t)
    }
}

/// Realizations `first_stream .. first_stream + ensemble` split into
/// contiguous blocks, one per thread, and concatenated in stream order.
pub fn run_ensemble_threaded(
    adj: &AdjointTrajectory,
    noise: &NoiseConfig,
    first_stream: u64,
    threads: usize,
) -> Result<EnsembleResult, ksm_core::stochastic::StochasticError> {
    let predicted = predicted_variance(adj, noise)?;
    let n = noise.ensemble as u64;
    let threads = (threads as u64).clamp(1, n);
    let chunk = n.div_ceil(threads);
    let parts: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| {
                let range = first_stream + (k * chunk).min(n)..first_stream + ((k + 1) * chunk).min(n);
                s.spawn(move || sample_range(adj, noise, range))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ensemble worker panicked")).collect()
    });
    let mut samples = Vec::with_capacity(noise.ensemble);
    for p in parts {
        samples.extend(p?);
    }
    Ok(EnsembleResult::from_samples(samples, predicted))
}

/// The planar check: adjoint Melnikov function of the Duffing loop against
/// brute-force manifold gaps.
pub fn oracle_run(omega: f64, epsilon: f64, phases: usize) -> Result<OracleRun, PipelineError> {
    let sys = DuffingSystem::new();
    let orbit = analytic_orbit(15.0, 1e-3);
    let cfg = AdjointConfig {
        integration: ksm_core::IntegrationConfig::new(1e-3, 1.0, 10).map_err(stage("oracle"))?,
        normalization: ksm_core::adjoint::Normalization::UnitNorm,
    };
    let adj = adjoint_solve(&sys, &orbit, &cfg).map_err(stage("oracle"))?;
    let g = ksm_core::adjoint::ForcingProfile::new(vec![0.0, 1.0], "(0, 1)").map_err(stage("oracle"))?;
    let melnikov = melnikov_periodic(&adj, &g, omega).map_err(stage("oracle"))?;
    let split = SplitConfig::default();
    let period = 2.0 * PI / omega;
    let crossings = split_zero_crossings(|t0| brute_force_split(epsilon, omega, t0, &split), period, phases, 1e-4)
        .map_err(stage("oracle"))?;
    let mut samples = Vec::with_capacity(phases);
    for i in 0..phases {
        let t0 = period * i as f64 / phases as f64;
        let gap = brute_force_split(epsilon, omega, t0, &split).map_err(stage("oracle"))?;
        samples.push((t0, melnikov.harmonic(t0), gap / epsilon));
    }
    // Largest splitting sits a quarter period after a zero.
    let t_peak = melnikov.zeros.first().map(|z| z.t0 + 0.25 * period).unwrap_or(0.0);
    let mut ratios = Vec::new();
    for e in [1e-4, 3e-4, 1e-3] {
        let gap = brute_force_split(e, omega, t_peak, &split).map_err(stage("oracle"))?;
        ratios.push((e, gap / e));
    }
    let psi_normal = adj.path.interpolate(0.0).map_err(stage("oracle"))?[0];
    Ok(OracleRun { omega, epsilon, melnikov, crossings, samples, ratios, psi_normal })
}

/// Runs every figure preset into `directory`, sharing one orbit cache.
pub fn run_figures(
    directory: &std::path::Path,
    cache: &std::path::Path,
    seed: Option<&str>,
    threads: usize,
) -> Result<Report, PipelineError> {
    let mut report = Report::default();
    for name in PRESETS {
        let mut cfg = crate::config::preset(name)?;
        cfg.directory = directory.to_path_buf();
        cfg.cache = cache.to_path_buf();
        cfg.apply_seed_override(seed)?;
        log::info!("preset {name}");
        let mut p = Pipeline::new(&cfg, threads)?;
        match name {
            "fig1" => p.emit_fig1()?,
            "fig2" => p.emit_fig2()?,
            "fig3" => p.emit_fig3()?,
            "fig4" => p.emit_fig4()?,
            "fig5" => p.emit_fig5()?,
            _ => p.emit_fig6()?,
        }
        report.absorb(p.report);
    }
    Ok(report)
}

/// Least-squares slope of `ln d(t)` toward the end equilibrium over the last
/// quarter of the orbit, against the leading stable rate there. The orbit may
/// end at a translate of the starting equilibrium whose spectrum within the
/// subspace differs, so the Jacobian is taken at the end point.
pub fn tail_check(pipeline: &mut Pipeline) -> Result<(f64, f64), PipelineError> {
    let orbit = pipeline.orbit()?.clone();
    let subspace = pipeline.steady()?.subspace;
    let rate = ksm_core::homoclinic::tail_decay_rate(pipeline.system(), &orbit, 0.25);
    let dom = pipeline.system().domain();
    let j = jacobian_real(&orbit.end_equilibrium, dom);
    let spectral = match subspace {
        Subspace::Full => eigen_analysis(&j),
        sub => eigen_analysis(&restrict(&j, &sub.coordinates(dom))),
    };
    let expected = spectral
        .leading_stable()
        .map(|(l, _)| l.re)
        .ok_or(PipelineError::Stage { stage: "tail", message: "no stable eigenvalue".into() })?;
    Ok((rate, expected))
}
