//! Run configuration shared by the command-line front end and the examples.
//!
//! Stored as TOML. Every section is optional and falls back to the platform
//! defaults, so an empty file is a valid configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::LegParams;
use crate::error::{validation, Error, Result};
use crate::gait::{CurvatureMode, NodeOptions};
use crate::param::{OptimizeOptions, PlanBounds, WeightMatrix};
use crate::sdre::{ControlGains, SimOptions};

/// Where the torque reference for the parameterization comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceSource {
    /// Closed-loop torques of the SDRE tracking simulation.
    #[default]
    Sdre,
    /// Inverse-dynamics torques of the recorded motion.
    Human,
}

impl FromStr for ReferenceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdre" => Ok(Self::Sdre),
            "human" => Ok(Self::Human),
            other => Err(validation(format!("unknown reference source `{other}` (expected sdre or human)"))),
        }
    }
}

impl fmt::Display for ReferenceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sdre => "sdre",
            Self::Human => "human",
        })
    }
}

/// Input motion: a CSV file or one of the built-in synthetic motions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProfileSource {
    Walk,
    Squat,
    File(PathBuf),
}

impl FromStr for ProfileSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin:walk" => Ok(Self::Walk),
            "builtin:squat" => Ok(Self::Squat),
            "" => Err(validation("empty profile path")),
            path => Ok(Self::File(PathBuf::from(path))),
        }
    }
}

impl TryFrom<String> for ProfileSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProfileSource> for String {
    fn from(p: ProfileSource) -> String {
        p.to_string()
    }
}

impl fmt::Display for ProfileSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Walk => f.write_str("builtin:walk"),
            Self::Squat => f.write_str("builtin:squat"),
            Self::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub q_diag: [f64; 5],
    pub r_diag: [f64; 2],
    /// Decay rate of the auxiliary state (1/s).
    pub eta: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            q_diag: [500.0, 500.0, 20.0, 20.0, 1.0],
            r_diag: [20.0, 20.0],
            eta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Integration and control step (s).
    pub dt: f64,
    pub care_every: usize,
    pub divergence_bound: f64,
    pub initial_angle_error: [f64; 2],
    pub initial_velocity_error: [f64; 2],
}

impl Default for SimConfig {
    fn default() -> Self {
        let d = SimOptions::default();
        Self {
            dt: d.dt,
            care_every: d.care_every,
            divergence_bound: d.divergence_bound,
            initial_angle_error: [0.0; 2],
            initial_velocity_error: [0.0; 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub min_separation: f64,
    pub prominence: Option<f64>,
    pub curvature_mode: CurvatureMode,
}

impl Default for NodeConfig {
    fn default() -> Self {
        let d = NodeOptions::default();
        Self {
            min_separation: d.min_separation,
            prominence: d.prominence,
            curvature_mode: d.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileSource,
    pub out_dir: PathBuf,
    pub reference: ReferenceSource,
    pub leg: LegParams,
    pub gains: GainsConfig,
    /// Torque-error weights (hip, knee).
    pub w_diag: [f64; 2],
    pub sim: SimConfig,
    pub nodes: NodeConfig,
    pub bounds: PlanBounds,
    pub optimizer: OptimizeOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: ProfileSource::Walk,
            out_dir: PathBuf::from("out"),
            reference: ReferenceSource::Sdre,
            leg: LegParams::platform(),
            gains: GainsConfig::default(),
            w_diag: WeightMatrix::platform().diag(),
            sim: SimConfig::default(),
            nodes: NodeConfig::default(),
            bounds: PlanBounds::default(),
            optimizer: OptimizeOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    /// Reads a TOML file. Relative profile paths are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let ProfileSource::File(p) = &cfg.profile {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.profile = ProfileSource::File(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Checks every setting without running anything.
    pub fn validate(&self) -> Result<()> {
        self.leg.validate()?;
        self.gains()?;
        self.weights()?;
        self.sim_options()?;
        self.bounds.validate()?;
        if !(self.nodes.min_separation >= 0.0) {
            return Err(validation("nodes.min_separation must be >= 0"));
        }
        if self.optimizer.starts == 0 {
            return Err(validation("optimizer.starts must be at least 1"));
        }
        if !(self.optimizer.perturbation >= 0.0) {
            return Err(validation("optimizer.perturbation must be >= 0"));
        }
        if let ProfileSource::File(p) = &self.profile {
            if !p.is_file() {
                return Err(validation(format!("profile `{}` not found", p.display())));
            }
        }
        Ok(())
    }

    pub fn gains(&self) -> Result<ControlGains> {
        ControlGains::from_diagonals(self.gains.q_diag, self.gains.r_diag, self.gains.eta)
    }

    pub fn weights(&self) -> Result<WeightMatrix> {
        WeightMatrix::new(self.w_diag[0], self.w_diag[1])
    }

    pub fn sim_options(&self) -> Result<SimOptions> {
        let s = &self.sim;
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return Err(validation(format!("sim.dt must be > 0, got {}", s.dt)));
        }
        if s.care_every == 0 {
            return Err(validation("sim.care_every must be at least 1"));
        }
        if !(s.divergence_bound > 0.0) {
            return Err(validation("sim.divergence_bound must be > 0"));
        }
        Ok(SimOptions {
            dt: s.dt,
            care_every: s.care_every,
            divergence_bound: s.divergence_bound,
            initial_angle_error: s.initial_angle_error.into(),
            initial_velocity_error: s.initial_velocity_error.into(),
            check_stabilizability: false,
        })
    }

    pub fn node_options(&self) -> NodeOptions {
        NodeOptions {
            min_separation: self.nodes.min_separation,
            prominence: self.nodes.prominence,
            mode: self.nodes.curvature_mode,
        }
    }

    /// SHA-256 over the canonical JSON form of every setting except the
    /// output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("configuration serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses `w_min,w_max,a_min,a_max`.
pub fn parse_bounds(s: &str) -> Result<PlanBounds> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| validation(format!("bad bounds `{s}`: {e}")))?;
    match parts.as_slice() {
        &[w_min, w_max, a_min, a_max] => PlanBounds::new(w_min, w_max, a_min, a_max),
        _ => Err(validation(format!("bounds need four values w_min,w_max,a_min,a_max, got `{s}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.profile = ProfileSource::Squat;
        cfg.sim.dt = 2e-3;
        cfg.nodes.prominence = Some(0.5);
        cfg.reference = ReferenceSource::Human;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::from_toml("[sim]\ndt = 0.002\n[gains]\neta = 2.0\n").unwrap();
        assert_eq!(cfg.sim.dt, 0.002);
        assert_eq!(cfg.sim.care_every, 1);
        assert_eq!(cfg.gains.eta, 2.0);
        assert_eq!(cfg.gains.q_diag, [500.0, 500.0, 20.0, 20.0, 1.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("[sim]\nstep = 1\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn hash_tracks_settings_but_not_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.sim.dt = 2e-3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn bounds_flag() {
        let b = parse_bounds("-5, 5,-30,30").unwrap();
        assert_eq!((b.w_min, b.alpha_max), (-5.0, 30.0));
        assert!(matches!(parse_bounds("5,-5,-30,30"), Err(Error::InfeasibleBounds(_))));
        assert!(matches!(parse_bounds("1,2,3"), Err(Error::Validation(_))));
        assert!(matches!(parse_bounds("a,2,3,4"), Err(Error::Validation(_))));
    }

    #[test]
    fn invalid_settings_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.sim.dt = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.leg.mc2 = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.profile = ProfileSource::File("/no/such/file.csv".into());
        assert!(cfg.validate().is_err());
    }
}
