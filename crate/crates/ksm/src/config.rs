//! Run configuration: TOML sections, defaults, validation and presets.

use std::path::PathBuf;

use ksm_core::adjoint::{ForcingProfile, Normalization};
use ksm_core::equilibria::{NewtonConfig, Subspace};
use ksm_core::homoclinic::ShootingConfig;
use ksm_core::stochastic::NoiseConfig;
use ksm_core::{DomainConfig, IntegrationConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{field}: {constraint}")]
    Validation { field: &'static str, constraint: String },
    #[error("unknown preset {0:?} (expected fig1 to fig6)")]
    UnknownPreset(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

fn invalid(field: &'static str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field, constraint: constraint.into() }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    domain: RawDomain,
    #[serde(default)]
    integration: RawIntegration,
    #[serde(default)]
    shooting: RawShooting,
    #[serde(default)]
    forcing: RawForcing,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    length: Option<f64>,
    modes: Option<usize>,
    subspace: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegration {
    dt: Option<f64>,
    sample_stride: Option<usize>,
    contour_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShooting {
    steady_tol: Option<f64>,
    seed_amplitude: Option<f64>,
    settle_time: Option<f64>,
    duration: Option<f64>,
    delta_min: Option<f64>,
    delta_max: Option<f64>,
    direction: Option<Vec<f64>>,
    return_tol: Option<f64>,
    max_shots: Option<usize>,
    angle_scan: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    profile: Option<String>,
    mode: Option<usize>,
    epsilon: Option<f64>,
    omega: Option<f64>,
    omega_min: Option<f64>,
    omega_max: Option<f64>,
    omega_step: Option<f64>,
    window: Option<f64>,
    trajectory_time: Option<f64>,
    normalization: Option<String>,
    adjoint_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    intensity: Option<f64>,
    dt: Option<f64>,
    ensemble: Option<usize>,
    seed: Option<u64>,
    window: Option<f64>,
    scaling: Option<Vec<f64>>,
    scaling_ensemble: Option<usize>,
    bins: Option<usize>,
    wander_time: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainSection {
    pub length: f64,
    pub modes: usize,
    pub subspace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrationSection {
    pub dt: f64,
    pub sample_stride: usize,
    pub contour_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingSection {
    pub steady_tol: f64,
    pub seed_amplitude: f64,
    pub settle_time: f64,
    pub duration: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub direction: Vec<f64>,
    pub return_tol: f64,
    pub max_shots: usize,
    pub angle_scan: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForcingSection {
    pub profile: String,
    pub mode: usize,
    pub epsilon: f64,
    pub omega: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_step: f64,
    /// Half-width `T` of the Melnikov integration window `[−T, T]`.
    pub window: f64,
    /// Length of the forced trajectory.
    pub trajectory_time: f64,
    pub normalization: String,
    /// Bound on the relative drift of the adjoint pairing.
    pub adjoint_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSection {
    pub intensity: f64,
    pub dt: f64,
    pub ensemble: usize,
    pub seed: u64,
    /// Half-width of the window the stochastic sum runs over.
    pub window: f64,
    pub scaling: Vec<f64>,
    /// Realizations per intensity of the scaling grid.
    pub scaling_ensemble: usize,
    pub bins: usize,
    pub wander_time: f64,
}

/// Everything that determines the numbers a run produces. The output
/// locations are kept apart so they do not enter the hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Numerics {
    pub domain: DomainSection,
    pub integration: IntegrationSection,
    pub shooting: ShootingSection,
    pub forcing: ForcingSection,
    pub noise: NoiseSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub label: String,
    pub numerics: Numerics,
    pub directory: PathBuf,
    pub cache: PathBuf,
}

macro_rules! fill {
    ($raw:expr, $section:literal, $key:ident, $default:expr) => {
        match $raw.$key {
            Some(v) => v,
            None => {
                let v = $default;
                log::debug!("default {}.{} = {:?}", $section, stringify!($key), v);
                v
            }
        }
    };
}

pub const DEFAULT_SEED: u64 = 20_220_722;

fn parse_error(text: &str, err: toml::de::Error) -> ConfigError {
    let line = err
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    ConfigError::Parse { line, reason: err.message().to_string() }
}

/// Parses and validates a configuration. Every key except the domain length
/// and mode count has a default.
pub fn parse_config(text: &str, label: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let d = raw.domain;
    let length = d.length.ok_or_else(|| invalid("domain.length", "is required"))?;
    let modes = d.modes.ok_or_else(|| invalid("domain.modes", "is required"))?;
    let domain = DomainSection { length, modes, subspace: fill!(d, "domain", subspace, "quarter-odd".to_string()) };
    let i = raw.integration;
    let integration = IntegrationSection {
        dt: fill!(i, "integration", dt, 1e-3),
        sample_stride: fill!(i, "integration", sample_stride, 10),
        contour_points: fill!(i, "integration", contour_points, 32),
    };
    let s = raw.shooting;
    let shooting = ShootingSection {
        steady_tol: fill!(s, "shooting", steady_tol, 1e-8),
        seed_amplitude: fill!(s, "shooting", seed_amplitude, 0.5),
        settle_time: fill!(s, "shooting", settle_time, 50.0),
        duration: fill!(s, "shooting", duration, 200.0),
        delta_min: fill!(s, "shooting", delta_min, 1e-6),
        delta_max: fill!(s, "shooting", delta_max, 5e-2),
        direction: fill!(s, "shooting", direction, vec![0.0]),
        return_tol: fill!(s, "shooting", return_tol, 1e-6),
        max_shots: fill!(s, "shooting", max_shots, 40),
        angle_scan: fill!(s, "shooting", angle_scan, 12),
    };
    let f = raw.forcing;
    let forcing = ForcingSection {
        profile: fill!(f, "forcing", profile, "sin".to_string()),
        mode: fill!(f, "forcing", mode, 1),
        epsilon: fill!(f, "forcing", epsilon, 0.01),
        omega: fill!(f, "forcing", omega, 0.5),
        omega_min: fill!(f, "forcing", omega_min, 0.0),
        omega_max: fill!(f, "forcing", omega_max, 2.0),
        omega_step: fill!(f, "forcing", omega_step, 0.02),
        window: fill!(f, "forcing", window, 150.0),
        trajectory_time: fill!(f, "forcing", trajectory_time, 300.0),
        normalization: fill!(f, "forcing", normalization, "unit-norm".to_string()),
        adjoint_tol: fill!(f, "forcing", adjoint_tol, 1e-8),
    };
    let n = raw.noise;
    let noise = NoiseSection {
        intensity: fill!(n, "noise", intensity, 0.02),
        dt: fill!(n, "noise", dt, 1e-3),
        ensemble: fill!(n, "noise", ensemble, 500),
        seed: fill!(n, "noise", seed, DEFAULT_SEED),
        window: fill!(n, "noise", window, 200.0),
        scaling: fill!(n, "noise", scaling, vec![0.005, 0.01, 0.02, 0.04]),
        scaling_ensemble: fill!(n, "noise", scaling_ensemble, 2000),
        bins: fill!(n, "noise", bins, 30),
        wander_time: fill!(n, "noise", wander_time, 100.0),
    };
    let o = raw.output;
    let directory = fill!(o, "output", directory, PathBuf::from("ksm-out"));
    let cache = fill!(o, "output", cache, directory.join("cache"));
    let cfg = RunConfig {
        label: label.to_string(),
        numerics: Numerics { domain, integration, shooting, forcing, noise },
        directory,
        cache,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), reason: e.to_string() })?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_config(&text, &label)
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and positive, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = &self.numerics;
        self.domain()?;
        self.subspace()?;
        self.integration(1.0)?;
        positive("shooting.steady_tol", n.shooting.steady_tol)?;
        positive("shooting.settle_time", n.shooting.settle_time)?;
        positive("shooting.seed_amplitude", n.shooting.seed_amplitude)?;
        self.shooting()?
            .validate()
            .map_err(|e| invalid("shooting", e.to_string()))?;
        let f = &n.forcing;
        if !(f.epsilon.is_finite() && f.epsilon >= 0.0) {
            return Err(invalid("forcing.epsilon", format!("must be non-negative, got {}", f.epsilon)));
        }
        for (field, v) in [("forcing.omega", f.omega), ("forcing.omega_min", f.omega_min)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, format!("must be non-negative, got {v}")));
            }
        }
        if !(f.omega_max >= f.omega_min) {
            return Err(invalid("forcing.omega_max", "must not be below omega_min"));
        }
        positive("forcing.omega_step", f.omega_step)?;
        positive("forcing.window", f.window)?;
        positive("forcing.trajectory_time", f.trajectory_time)?;
        positive("forcing.adjoint_tol", f.adjoint_tol)?;
        self.normalization()?;
        self.forcing_profile()?;
        self.noise()?.validate().map_err(|e| invalid("noise", e.to_string()))?;
        positive("noise.window", n.noise.window)?;
        positive("noise.wander_time", n.noise.wander_time)?;
        if n.noise.bins == 0 {
            return Err(invalid("noise.bins", "must be at least 1"));
        }
        if n.noise.scaling.len() < 3 || n.noise.scaling.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(invalid("noise.scaling", "needs at least three positive intensities"));
        }
        if n.noise.scaling_ensemble < 2 {
            return Err(invalid("noise.scaling_ensemble", "must be at least 2"));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<DomainConfig, ConfigError> {
        let d = &self.numerics.domain;
        DomainConfig::new(d.length, d.modes).map_err(|e| invalid("domain", e.to_string()))
    }

    pub fn subspace(&self) -> Result<Subspace, ConfigError> {
        Subspace::from_name(&self.numerics.domain.subspace)
            .ok_or_else(|| invalid("domain.subspace", "must be full, odd or quarter-odd"))
    }

    /// Integration settings with the given horizon.
    pub fn integration(&self, horizon: f64) -> Result<IntegrationConfig, ConfigError> {
        let i = &self.numerics.integration;
        IntegrationConfig::new(i.dt, horizon, i.sample_stride)
            .and_then(|c| c.with_contour_points(i.contour_points))
            .map_err(|e| invalid("integration", e.to_string()))
    }

    pub fn newton(&self, subspace: Subspace) -> NewtonConfig {
        NewtonConfig { tol: self.numerics.shooting.steady_tol, subspace, ..NewtonConfig::default() }
    }

    pub fn shooting(&self) -> Result<ShootingConfig, ConfigError> {
        let s = &self.numerics.shooting;
        Ok(ShootingConfig {
            duration: s.duration,
            delta_range: (s.delta_min, s.delta_max),
            direction_params: s.direction.clone(),
            return_tol: s.return_tol,
            integration: self.integration(s.duration)?,
            max_shots: s.max_shots,
            angle_scan: s.angle_scan,
        })
    }

    pub fn normalization(&self) -> Result<Normalization, ConfigError> {
        Normalization::from_name(&self.numerics.forcing.normalization)
            .ok_or_else(|| invalid("forcing.normalization", "must be unit-norm or pairing"))
    }

    pub fn forcing_profile(&self) -> Result<ForcingProfile, ConfigError> {
        let f = &self.numerics.forcing;
        let dom = self.domain()?;
        if f.mode == 0 || f.mode > dom.modes() {
            return Err(invalid("forcing.mode", format!("must lie in 1..={}", dom.modes())));
        }
        match f.profile.as_str() {
            "sin" => Ok(ForcingProfile::sine_mode(&dom, f.mode)),
            "cos" => Ok(ForcingProfile::cosine_mode(&dom, f.mode)),
            _ => Err(invalid("forcing.profile", "must be sin or cos")),
        }
    }

    /// Frequency grid `omega_min, omega_min + step, …, omega_max`.
    pub fn omega_grid(&self) -> Vec<f64> {
        let f = &self.numerics.forcing;
        let n = ((f.omega_max - f.omega_min) / f.omega_step + 1e-9).floor() as usize;
        (0..=n).map(|k| f.omega_min + k as f64 * f.omega_step).collect()
    }

    pub fn noise(&self) -> Result<NoiseConfig, ConfigError> {
        let n = &self.numerics.noise;
        Ok(NoiseConfig { d: n.intensity, dt: n.dt, ensemble: n.ensemble, seed: n.seed })
    }

    /// Applies `KSM_SEED` when it is set.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            let seed = v
                .trim()
                .parse::<u64>()
                .map_err(|_| invalid("KSM_SEED", format!("must be an unsigned 64-bit integer, got {v:?}")))?;
            log::info!("seed {seed} from KSM_SEED");
            self.numerics.noise.seed = seed;
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization of the numerical settings.
    pub fn hash(&self) -> String {
        hash_hex(&self.numerics)
    }
}

pub fn hash_hex<T: Serialize>(value: &T) -> String {
    let text = toml::to_string(value).expect("settings serialize");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub const PRESETS: [&str; 6] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6"];

const FIG1: &str = r#"
[domain]
length = 22.0
modes = 32

[integration]
dt = 1e-3

[shooting]
steady_tol = 1e-8
duration = 200.0
"#;

const FIG3: &str = r#"
[forcing]
epsilon = 0.01
profile = "sin"
mode = 1
omega = 0.5
trajectory_time = 300.0
"#;

const FIG4: &str = r#"
[forcing]
omega_min = 0.0
omega_max = 2.0
omega_step = 0.02
window = 150.0
adjoint_tol = 1e-8
"#;

const FIG5: &str = r#"
[noise]
intensity = 0.02
ensemble = 500
dt = 1e-3
window = 200.0
"#;

const FIG6: &str = r#"
[noise]
intensity = 0.02
wander_time = 100.0
"#;

/// TOML text of a figure preset. Every figure shares the orbit settings of
/// the first; the remaining sections carry that figure's parameters.
pub fn preset_text(name: &str) -> Result<String, ConfigError> {
    let extra = match name {
        "fig1" | "fig2" => "",
        "fig3" => FIG3,
        "fig4" => FIG4,
        "fig5" => FIG5,
        "fig6" => FIG6,
        _ => return Err(ConfigError::UnknownPreset(name.to_string())),
    };
    Ok(format!("{FIG1}{extra}"))
}

pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
    parse_config(&preset_text(name)?, name)
}
