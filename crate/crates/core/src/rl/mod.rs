//! Goal-conditioned DDPG with hindsight experience replay.

mod checkpoint;
mod ddpg;
mod her;
mod mlp;
mod normalizer;
mod optim;
mod replay;
mod train;

pub use checkpoint::{config_hash, hash_json, Checkpoint, Policy, CHECKPOINT_FORMAT};
pub use ddpg::{actor_loss, actor_sizes, concat_rows, critic_loss, critic_sizes, DdpgAgent, DdpgConfig, UpdateStats};
pub use her::{her_relabel, relabel, sample_future_index};
pub use mlp::{parameter_count, Activation, ForwardCache, Mlp, Real};
pub use normalizer::Normalizer;
pub use optim::Adam;
pub use replay::{Batch, ReplayBuffer};
pub use train::{
    save_train_log, train, train_on, write_train_log, ExperimentConfig, ExplorationNoise, TrainConfig, TrainLogRow,
    TrainOutcome,
};

use crate::env::{CtrEnv, EnvState};
use crate::error::Result;
use crate::jointspace::ActionVector;

/// Anything that picks an action from an observation. The environment is
/// passed for harness agents that need ground truth.
pub trait Agent {
    fn act(&mut self, state: &EnvState, env: &CtrEnv) -> Result<ActionVector>;

    /// Called before each evaluation episode so stochastic agents can
    /// reseed and stay independent of how episodes are scheduled.
    fn begin_episode(&mut self, _seed: u64) {}
}

impl Agent for Policy {
    fn act(&mut self, state: &EnvState, _env: &CtrEnv) -> Result<ActionVector> {
        Policy::act(self, state)
    }
}
