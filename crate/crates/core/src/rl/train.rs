use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::ddpg::{DdpgAgent, DdpgConfig, UpdateStats};
use super::her::her_relabel;
use super::replay::{Batch, ReplayBuffer};
use crate::env::{CtrEnv, EnvConfig, Transition};
use crate::error::{Error, Result};
use crate::jointspace::{ActionVector, MAX_EXTENSION_STEP, MAX_ROTATION_STEP};
use crate::systems::CtrSystem;

/// Exploration applied to normalized actions during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationNoise {
    /// Gaussian noise on rotation actions, degrees.
    pub rotation_std_deg: f64,
    /// Gaussian noise on extension actions, mm.
    pub extension_std_mm: f64,
    /// Probability of a uniformly random action.
    pub random_eps: f64,
}

impl Default for ExplorationNoise {
    fn default() -> Self {
        Self {
            rotation_std_deg: 2.0,
            extension_std_mm: 0.5,
            random_eps: 0.2,
        }
    }
}

impl ExplorationNoise {
    pub fn none() -> Self {
        Self {
            rotation_std_deg: 0.0,
            extension_std_mm: 0.0,
            random_eps: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rotation_std_deg >= 0.0
            && self.extension_std_mm >= 0.0
            && (0.0..=1.0).contains(&self.random_eps);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid exploration noise {self:?}")))
        }
    }

    /// Perturbs a normalized action and clips it back into `[-1, 1]⁶`.
    pub fn apply<R: Rng + ?Sized>(&self, action: [f64; 6], rng: &mut R) -> [f64; 6] {
        if self.random_eps > 0.0 && rng.random::<f64>() < self.random_eps {
            return [0; 6].map(|_| rng.random_range(-1.0..=1.0));
        }
        let stds = [
            self.extension_std_mm / MAX_EXTENSION_STEP,
            self.rotation_std_deg.to_radians() / MAX_ROTATION_STEP,
        ];
        let mut out = action;
        for (i, v) in out.iter_mut().enumerate() {
            let std = stds[i / 3];
            if std > 0.0 {
                *v += Normal::new(0.0, std).expect("finite std").sample(rng);
            }
            *v = v.clamp(-1.0, 1.0);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_timesteps: u64,
    /// Steps over which the goal tolerance shrinks; overrides the
    /// environment's curriculum length.
    pub curriculum_steps: u64,
    pub ddpg: DdpgConfig,
    pub exploration: ExplorationNoise,
    /// Relabeled copies per transition.
    pub her_k: usize,
    pub buffer_capacity: usize,
    /// Gradient updates per environment step; fractional values accumulate.
    pub updates_per_step: f64,
    /// Steps of uniformly random actions before the policy acts.
    pub warmup_steps: u64,
    /// Training log cadence, steps.
    pub log_interval: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_timesteps: 3_000_000,
            curriculum_steps: 1_500_000,
            ddpg: DdpgConfig::default(),
            exploration: ExplorationNoise::default(),
            her_k: 4,
            buffer_capacity: 500_000,
            updates_per_step: 0.5,
            warmup_steps: 1_000,
            log_interval: 10_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.total_timesteps == 0 {
            return fail("total_timesteps must be positive");
        }
        if self.curriculum_steps == 0 || self.curriculum_steps > self.total_timesteps {
            return fail("curriculum_steps must be in 1..=total_timesteps");
        }
        if self.ddpg.batch_size == 0 || self.buffer_capacity == 0 {
            return fail("batch_size and buffer_capacity must be positive");
        }
        if !(0.0..1.0).contains(&self.ddpg.gamma) || !(0.0..=1.0).contains(&self.ddpg.tau) {
            return fail("gamma must be in [0, 1) and tau in [0, 1]");
        }
        if !(self.updates_per_step >= 0.0) || self.log_interval == 0 {
            return fail("updates_per_step must be >= 0 and log_interval positive");
        }
        self.exploration.validate()
    }
}

/// Environment and trainer settings in one file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Robot file paths are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        cfg.env.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.env.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub timestep: u64,
    pub episodes: u64,
    /// Mean undiscounted return of episodes finished since the last row.
    pub mean_episode_reward: f64,
    /// Fraction of those episodes ending within tolerance.
    pub success_rate: f64,
    /// Mean true final error of those episodes, mm.
    pub mean_final_error: f64,
    pub tolerance: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_q: f64,
    pub buffer_len: usize,
}

pub fn write_train_log<W: Write>(rows: &[TrainLogRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<train log>", e))?;
    Ok(())
}

pub fn save_train_log(rows: &[TrainLogRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_train_log(rows, std::io::BufWriter::new(f))
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<TrainLogRow>,
}

#[derive(Default)]
struct Window {
    episodes: u64,
    reward: f64,
    successes: u64,
    final_error: f64,
    stats: UpdateStats,
    updates: u64,
}

/// Trains on the configured systems.
pub fn train(env_config: &EnvConfig, cfg: &TrainConfig, progress: &mut dyn FnMut(&TrainLogRow)) -> Result<TrainOutcome> {
    let systems = env_config.load_systems()?;
    train_on(env_config, systems, cfg, progress)
}

/// Trains with an explicit system registry.
pub fn train_on(
    env_config: &EnvConfig,
    systems: Vec<CtrSystem>,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&TrainLogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut env_config = env_config.clone();
    env_config.curriculum.n_steps = cfg.curriculum_steps;
    env_config.seed = cfg.seed;
    let mut env = CtrEnv::with_systems(env_config.clone(), systems.clone())?;
    let obs_dim = env.observation_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut agent = DdpgAgent::new(obs_dim, cfg.ddpg.clone(), &mut rng);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, obs_dim, ActionVector::DIM);
    let mut batch = Batch::default();
    let mut log = Vec::new();
    let mut window = Window::default();
    let mut total_episodes = 0u64;
    let mut update_budget = 0.0;
    let mut t = 0u64;
    let mut obs_rows = Vec::new();
    let mut next_rows = Vec::new();

    while t < cfg.total_timesteps {
        let mut state = env.reset()?;
        let mut episode: Vec<Transition> = Vec::new();
        let mut episode_reward = 0.0;
        loop {
            let obs = state.to_vec();
            let action = if t < cfg.warmup_steps {
                [0; 6].map(|_| rng.random_range(-1.0..=1.0))
            } else {
                cfg.exploration.apply(agent.act(&obs), &mut rng)
            };
            let step = env.step_normalized(&action)?;
            t += 1;
            episode_reward += step.reward;
            episode.push(Transition {
                state,
                action: ActionVector::from_normalized(&action),
                reward: step.reward,
                next_state: step.state,
                achieved_goal: if env.config().noisy_reward {
                    step.state.achieved_goal
                } else {
                    step.info.achieved_goal
                },
                desired_goal: env.desired_goal(),
                terminal: step.info.success,
            });

            update_budget += cfg.updates_per_step;
            while update_budget >= 1.0 && buffer.len() >= cfg.ddpg.batch_size {
                update_budget -= 1.0;
                buffer.sample(cfg.ddpg.batch_size, &mut rng, &mut batch);
                let stats = agent.update(&batch);
                agent.update_targets();
                if !(stats.critic_loss.is_finite() && stats.actor_loss.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "loss diverged at timestep {t}: critic {} actor {}",
                        stats.critic_loss, stats.actor_loss
                    )));
                }
                window.stats.critic_loss += stats.critic_loss;
                window.stats.actor_loss += stats.actor_loss;
                window.stats.mean_q += stats.mean_q;
                window.updates += 1;
            }
            update_budget = update_budget.min(1.0 + cfg.updates_per_step);

            state = step.state;
            if t.is_multiple_of(cfg.log_interval) {
                if !agent.is_finite() {
                    return Err(Error::NonFinite(format!("network parameters non-finite at timestep {t}")));
                }
                let row = log_row(&window, t, total_episodes, env.tolerance(), buffer.len());
                progress(&row);
                log.push(row);
                window = Window::default();
            }
            if step.terminal || t >= cfg.total_timesteps {
                window.episodes += 1;
                window.reward += episode_reward;
                window.successes += step.info.success as u64;
                window.final_error += step.info.error;
                total_episodes += 1;
                break;
            }
        }

        let stored = her_relabel(&episode, cfg.her_k, &mut rng);
        obs_rows.clear();
        for tr in &stored {
            next_rows.clear();
            let start = obs_rows.len();
            tr.state.write(&mut obs_rows);
            tr.next_state.write(&mut next_rows);
            buffer.push(&obs_rows[start..], &tr.action.to_normalized(), tr.reward, &next_rows);
        }
        agent.normalizer.update(&obs_rows);
    }
    if !agent.is_finite() {
        return Err(Error::NonFinite("network parameters non-finite at end of training".into()));
    }
    let checkpoint = Checkpoint::from_agent(&agent, &env_config, cfg, systems, &rng, t);
    Ok(TrainOutcome { checkpoint, log })
}

fn log_row(w: &Window, t: u64, episodes: u64, tolerance: f64, buffer_len: usize) -> TrainLogRow {
    let ne = w.episodes.max(1) as f64;
    let nu = w.updates.max(1) as f64;
    TrainLogRow {
        timestep: t,
        episodes,
        mean_episode_reward: w.reward / ne,
        success_rate: w.successes as f64 / ne,
        mean_final_error: w.final_error / ne,
        tolerance,
        critic_loss: w.stats.critic_loss / nu,
        actor_loss: w.stats.actor_loss / nu,
        mean_q: w.stats.mean_q / nu,
        buffer_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = [0.1, -0.2, 0.3, 0.9, -1.0, 0.0];
        assert_eq!(ExplorationNoise::none().apply(a, &mut rng), a);
    }

    #[test]
    fn noisy_actions_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let noise = ExplorationNoise {
            rotation_std_deg: 50.0,
            extension_std_mm: 5.0,
            random_eps: 0.3,
        };
        for _ in 0..1000 {
            let out = noise.apply([0.9; 6], &mut rng);
            assert!(out.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn curriculum_longer_than_training_is_rejected() {
        let cfg = TrainConfig {
            total_timesteps: 10,
            curriculum_steps: 20,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn experiment_config_parses() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [env]
            systems = [3]
            [train]
            total_timesteps = 1000
            curriculum_steps = 500
            [train.ddpg]
            hidden = [64, 64]
            [train.exploration]
            random_eps = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(cfg.train.ddpg.hidden, vec![64, 64]);
        assert_eq!(cfg.train.ddpg.gamma, 0.95);
        assert_eq!(cfg.train.exploration.random_eps, 0.1);
        assert_eq!(cfg.train.exploration.rotation_std_deg, 2.0);
    }
}
