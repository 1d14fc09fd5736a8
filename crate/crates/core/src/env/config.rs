use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Curriculum, NoiseSpec, SamplerKind};
use crate::error::{Error, Result};
use crate::jointspace::{JointFrame, RotationMode};
use crate::kinematics::KinematicsTier;
use crate::systems::{reference_system, CtrSystem, DomainRandomizationSpec};

/// Where a system comes from: one of the built-in reference systems by
/// index, or a robot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Reference(usize),
    File(PathBuf),
}

impl SystemSource {
    pub fn load(&self) -> Result<CtrSystem> {
        match self {
            SystemSource::Reference(id) if *id < 4 => Ok(reference_system(*id)),
            SystemSource::Reference(id) => Err(Error::InvalidConfig(format!(
                "no reference system {id}; valid ids are 0-3"
            ))),
            SystemSource::File(path) => CtrSystem::load(path),
        }
    }
}

/// How the system index appears in the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemEncoding {
    /// One value, `ψ / (n − 1)`.
    #[default]
    Scaled,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub systems: Vec<SystemSource>,
    pub rotation_mode: RotationMode,
    pub joint_frame: JointFrame,
    pub curriculum: Curriculum,
    /// Sensor noise on observations; `None` for a noise-free environment.
    pub noise: Option<NoiseSpec>,
    /// Compute reward from the noisy tip instead of the true one.
    pub noisy_reward: bool,
    pub domain_randomization: Option<DomainRandomizationSpec>,
    pub sampler: SamplerKind,
    /// Append the system index to the observation. Defaults to on when more
    /// than one system is registered.
    pub include_system_id: Option<bool>,
    pub system_encoding: SystemEncoding,
    pub max_episode_steps: usize,
    pub tier: KinematicsTier,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            systems: vec![SystemSource::Reference(3)],
            rotation_mode: RotationMode::ConstraintFree,
            joint_frame: JointFrame::Egocentric,
            curriculum: Curriculum::default(),
            noise: None,
            noisy_reward: false,
            domain_randomization: None,
            sampler: SamplerKind::Uniform,
            include_system_id: None,
            system_encoding: SystemEncoding::Scaled,
            max_episode_steps: 150,
            tier: KinematicsTier::Rigid,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn single(system: usize) -> Self {
        Self {
            systems: vec![SystemSource::Reference(system)],
            ..Default::default()
        }
    }

    pub fn multi_system(&self) -> bool {
        self.include_system_id.unwrap_or(self.systems.len() > 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(Error::InvalidConfig("at least one system is required".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::InvalidConfig("max_episode_steps must be positive".into()));
        }
        self.curriculum.validate().map_err(Error::InvalidConfig)?;
        if let Some(noise) = &self.noise {
            noise.validate().map_err(Error::InvalidConfig)?;
        }
        if let Some(dr) = &self.domain_randomization {
            dr.validate()?;
        }
        Ok(())
    }

    /// Rewrites relative robot file paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for s in &mut self.systems {
            if let SystemSource::File(p) = s {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn load_systems(&self) -> Result<Vec<CtrSystem>> {
        self.systems.iter().map(SystemSource::load).collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Loads a TOML (or `.json`) environment file; robot file paths are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: EnvConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.into(),
                message: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse {
                path: path.into(),
                message: e.to_string(),
            })?
        };
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }
}
