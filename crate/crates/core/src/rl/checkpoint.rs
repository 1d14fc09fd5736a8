use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ddpg::DdpgAgent;
use super::mlp::Mlp;
use super::normalizer::Normalizer;
use super::train::{ExplorationNoise, TrainConfig};
use crate::env::{CtrEnv, EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::jointspace::ActionVector;
use crate::systems::CtrSystem;

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Trained networks with everything needed to rebuild the environment they
/// were trained in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub env: EnvConfig,
    pub train: TrainConfig,
    /// The system registry in observation order.
    pub systems: Vec<CtrSystem>,
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
    pub normalizer: Normalizer,
    /// SHA-256 of the environment and training configuration.
    pub config_hash: String,
    pub rng_state: ChaCha8Rng,
    pub timesteps: u64,
}

/// SHA-256 hex digest of the value's JSON form.
pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("value serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(env: &EnvConfig, train: &TrainConfig) -> String {
    hash_json(&(env, train))
}

impl Checkpoint {
    pub fn from_agent(
        agent: &DdpgAgent,
        env: &EnvConfig,
        train: &TrainConfig,
        systems: Vec<CtrSystem>,
        rng: &ChaCha8Rng,
        timesteps: u64,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            obs_dim: agent.obs_dim,
            action_dim: ActionVector::DIM,
            env: env.clone(),
            train: train.clone(),
            systems,
            actor: agent.actor.clone(),
            critic: agent.critic.clone(),
            normalizer: agent.normalizer.clone(),
            config_hash: config_hash(env, train),
            rng_state: rng.clone(),
            timesteps,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        ck.check()?;
        Ok(ck)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::IncompatibleCheckpoint(m));
        if self.format != CHECKPOINT_FORMAT {
            return bad(format!("format {} (expected {CHECKPOINT_FORMAT})", self.format));
        }
        if self.actor.input_dim() != self.obs_dim || self.actor.output_dim() != self.action_dim {
            return bad("actor shape does not match declared dimensions".into());
        }
        if self.normalizer.dim() != self.obs_dim {
            return bad("normalizer dimension does not match observation".into());
        }
        if self.actor.params.len() != super::mlp::parameter_count(&self.actor.sizes) {
            return bad("actor parameter count does not match layer sizes".into());
        }
        let mut norm = self.normalizer.clone();
        norm.recompute();
        if norm != self.normalizer {
            return bad("normalizer statistics inconsistent".into());
        }
        Ok(())
    }

    /// An environment matching the one the checkpoint was trained in.
    pub fn make_env(&self) -> Result<CtrEnv> {
        CtrEnv::with_systems(self.env.clone(), self.systems.clone())
    }

    pub fn policy(&self) -> Policy {
        Policy {
            actor: self.actor.clone(),
            normalizer: self.normalizer.clone(),
            obs_dim: self.obs_dim,
        }
    }
}

/// Actor plus frozen observation statistics.
#[derive(Debug, Clone)]
pub struct Policy {
    pub actor: Mlp<f32>,
    pub normalizer: Normalizer,
    pub obs_dim: usize,
}

impl Policy {
    pub fn act_normalized(&self, obs: &[f64]) -> Result<[f64; 6]> {
        if obs.len() != self.obs_dim {
            return Err(Error::DimensionMismatch {
                expected: self.obs_dim,
                actual: obs.len(),
            });
        }
        let mut x: Vec<f32> = Vec::with_capacity(obs.len());
        self.normalizer.normalize_into(obs, &mut x);
        let y = self.actor.forward(&x, 1)?;
        Ok([0, 1, 2, 3, 4, 5].map(|i| y[i] as f64))
    }

    /// Actor output without noise.
    pub fn act(&self, state: &EnvState) -> Result<ActionVector> {
        Ok(ActionVector::from_normalized(&self.act_normalized(&state.to_vec())?))
    }

    /// Actor output with exploration noise, clipped to the action limits.
    pub fn act_stochastic<R: Rng + ?Sized>(&self, state: &EnvState, noise: &ExplorationNoise, rng: &mut R) -> Result<ActionVector> {
        let a = self.act_normalized(&state.to_vec())?;
        Ok(ActionVector::from_normalized(&noise.apply(a, rng)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::ddpg::DdpgConfig;
    use rand::SeedableRng;

    fn checkpoint() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DdpgConfig {
            hidden: vec![16, 16],
            ..Default::default()
        };
        let mut agent = DdpgAgent::new(13, cfg, &mut rng);
        // irrational-looking statistics so float round-tripping is exercised
        agent.normalizer.update(&(0..260).map(|v| (v as f64 * 0.731).sin() * 97.3).collect::<Vec<_>>());
        let env = EnvConfig::single(3);
        let systems = env.load_systems().unwrap();
        Checkpoint::from_agent(&agent, &env, &TrainConfig::default(), systems, &rng, 0)
    }

    #[test]
    fn round_trip_preserves_actions() {
        let ck = checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let mut env = back.make_env().unwrap();
        let s = env.reset().unwrap();
        assert_eq!(ck.policy().act(&s).unwrap(), back.policy().act(&s).unwrap());
        assert_eq!(ck.config_hash, back.config_hash);
        assert_eq!(ck.rng_state, back.rng_state);
    }

    #[test]
    fn actions_respect_limits_and_noise_free_matches() {
        let ck = checkpoint();
        let policy = ck.policy();
        let mut env = ck.make_env().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = env.reset().unwrap();
            let a = policy.act(&s).unwrap();
            assert!(a.within_limits());
            assert_eq!(a, policy.act(&s).unwrap());
            assert_eq!(policy.act_stochastic(&s, &ExplorationNoise::none(), &mut rng).unwrap(), a);
            assert!(policy
                .act_stochastic(&s, &ExplorationNoise::default(), &mut rng)
                .unwrap()
                .within_limits());
        }
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let policy = checkpoint().policy();
        assert!(matches!(
            policy.act_normalized(&[0.0; 14]),
            Err(Error::DimensionMismatch { expected: 13, actual: 14 })
        ));
    }

    #[test]
    fn version_mismatch_is_incompatible() {
        let mut ck = checkpoint();
        ck.format = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::IncompatibleCheckpoint(_))));
    }
}
