//! Run configuration: strict JSON schema, documented defaults and range checks.

use std::fmt;
use std::path::PathBuf;

use eventum_core::quantum_grid::{GridSpec, Potential, SystemParams};
use eventum_core::sde_engine::Scheme;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyAlgebra,
    SimulateLinear,
    SimulatePosterior,
    GaussianDemo,
    UnravelCheck,
    JumpLimit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyAlgebra => "verify-algebra",
            Command::SimulateLinear => "simulate-linear",
            Command::SimulatePosterior => "simulate-posterior",
            Command::GaussianDemo => "gaussian-demo",
            Command::UnravelCheck => "unravel-check",
            Command::JumpLimit => "jump-limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub hbar: f64,
    pub m: f64,
    pub lambda: Vec<f64>,
    pub potential: Potential,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            hbar: 1.0,
            m: 1.0,
            lambda: vec![0.5],
            potential: Potential::Free,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n: 128,
            x_min: -10.0,
            x_max: 10.0,
        }
    }
}

/// Initial Gaussian packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub q0: f64,
    pub p0: f64,
    pub width: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            q0: 0.0,
            p0: 0.0,
            width: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationSection {
    pub dt: f64,
    /// Final time `T`.
    pub t: f64,
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// Stride of stored states in simulate-* runs; `null` keeps the endpoints.
    pub store_stride: Option<usize>,
    pub scheme: Scheme,
}

impl Default for IntegrationSection {
    fn default() -> Self {
        IntegrationSection {
            dt: 1e-3,
            t: 1.0,
            n_trajectories: 1,
            master_seed: 0,
            store_stride: None,
            scheme: Scheme::EulerMaruyama,
        }
    }
}

/// Jump-model settings used by jump-limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub nus: Vec<f64>,
    /// Jump step is `dt_factor / ν`.
    pub dt_factor: f64,
    /// Step of the diffusion comparison filters.
    pub diffusion_dt: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            nus: vec![1e2, 1e3, 1e4],
            dt_factor: 0.1,
            diffusion_dt: 1e-3,
        }
    }
}

/// Parameters of the deviation-equation demo: input velocity `u`, offset
/// `q` and initial velocity `v0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoSection {
    pub u: f64,
    pub q: f64,
    pub v0: f64,
}

impl Default for DemoSection {
    fn default() -> Self {
        DemoSection { u: 0.5, q: 1.0, v0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub system: SystemSection,
    pub grid: GridSection,
    pub initial: InitialSection,
    pub integration: IntegrationSection,
    pub probe: ProbeSection,
    pub demo: DemoSection,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            system: SystemSection::default(),
            grid: GridSection::default(),
            initial: InitialSection::default(),
            integration: IntegrationSection::default(),
            probe: ProbeSection::default(),
            demo: DemoSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Configuration rejection with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new_at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn new_top(message: impl Into<String>) -> Self {
        ConfigError::new_at("", message)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new_at(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new_at(path, format!("must be a positive finite number, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new_at(path, format!("must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.system;
        positive("system.hbar", s.hbar)?;
        positive("system.m", s.m)?;
        if s.lambda.is_empty() {
            return Err(ConfigError::new_at("system.lambda", "needs at least one channel"));
        }
        for (k, l) in s.lambda.iter().enumerate() {
            if !(*l >= 0.0 && l.is_finite()) {
                return Err(ConfigError::new_at(
                    format!("system.lambda[{k}]"),
                    format!("must be a nonnegative finite number, got {l}"),
                ));
            }
        }
        match s.potential {
            Potential::Free => {}
            Potential::Linear { a } => finite("system.potential.a", a)?,
            Potential::Quadratic { omega } => positive("system.potential.omega", omega)?,
        }

        let g = &self.grid;
        if g.n < 8 {
            return Err(ConfigError::new_at("grid.n", format!("must be at least 8, got {}", g.n)));
        }
        finite("grid.x_min", g.x_min)?;
        finite("grid.x_max", g.x_max)?;
        if g.x_min >= g.x_max {
            return Err(ConfigError::new_at("grid.x_max", "must exceed grid.x_min"));
        }

        finite("initial.q0", self.initial.q0)?;
        finite("initial.p0", self.initial.p0)?;
        positive("initial.width", self.initial.width)?;

        let i = &self.integration;
        positive("integration.dt", i.dt)?;
        positive("integration.t", i.t)?;
        if i.dt > i.t {
            return Err(ConfigError::new_at("integration.dt", "must not exceed integration.t"));
        }
        if i.n_trajectories == 0 {
            return Err(ConfigError::new_at("integration.n_trajectories", "must be at least 1"));
        }
        if i.store_stride == Some(0) {
            return Err(ConfigError::new_at("integration.store_stride", "must be at least 1"));
        }

        let p = &self.probe;
        if p.nus.is_empty() {
            return Err(ConfigError::new_at("probe.nus", "needs at least one intensity"));
        }
        for (k, nu) in p.nus.iter().enumerate() {
            positive(&format!("probe.nus[{k}]"), *nu)?;
        }
        positive("probe.dt_factor", p.dt_factor)?;
        if p.dt_factor > 1.0 {
            return Err(ConfigError::new_at("probe.dt_factor", "must be at most 1"));
        }
        positive("probe.diffusion_dt", p.diffusion_dt)?;

        finite("demo.u", self.demo.u)?;
        finite("demo.q", self.demo.q)?;
        finite("demo.v0", self.demo.v0)?;
        Ok(())
    }

    pub fn system_params(&self) -> eventum_core::Result<SystemParams> {
        let s = &self.system;
        SystemParams::new(s.hbar, s.m, s.lambda.clone(), s.potential)
    }

    pub fn grid_spec(&self) -> eventum_core::Result<GridSpec> {
        GridSpec::new(self.grid.n, self.grid.x_min, self.grid.x_max)
    }

    pub fn n_steps(&self) -> usize {
        (self.integration.t / self.integration.dt).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_fully_defaulted() {
        let cfg = parse_config(r#"{"command": "gaussian-demo"}"#).unwrap();
        assert_eq!(cfg.command, Some(Command::GaussianDemo));
        let expected = RunConfig {
            command: Some(Command::GaussianDemo),
            ..RunConfig::default()
        };
        assert_eq!(cfg, expected);
    }

    #[test]
    fn negative_lambda_names_the_field() {
        let err = parse_config(r#"{"system": {"lambda": [-1.0]}}"#).unwrap_err();
        assert!(err.to_string().contains("system.lambda"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let err = parse_config(r#"{"grid": {"n": 64, "dx": 0.1}}"#).unwrap_err();
        assert_eq!(err.path, "grid.dx");
        assert!(err.message.contains("dx"), "{err}");
        assert!(parse_config(r#"{"colour": 1}"#).is_err());
    }

    #[test]
    fn malformed_json_is_rejected() {
        assert!(parse_config("{\"grid\": ").is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = RunConfig {
            command: Some(Command::JumpLimit),
            ..RunConfig::default()
        };
        cfg.system.potential = Potential::Quadratic { omega: 0.7 };
        cfg.integration.store_stride = Some(5);
        cfg.integration.scheme = Scheme::SplitExponential;
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
