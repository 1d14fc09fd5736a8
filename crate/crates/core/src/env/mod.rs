//! The goal-conditioned environment: observations, sparse reward, goal
//! tolerance schedule, episode lifecycle and system selection.

mod config;
mod curriculum;
mod noise;
mod sampler;

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

mod trace;
pub use trace::{record_trace, save_trace, scripted_actions, write_trace, TraceRow};
pub use config::{EnvConfig, SystemEncoding, SystemSource};
pub use curriculum::{Curriculum, CurriculumKind};
pub use noise::{extension_std_from_rotation, observe_with_noise, NoiseSpec, GEAR_RATIO};
pub use sampler::{SamplerKind, SystemSampler};

use crate::error::{Error, Result};
use crate::jointspace::{apply_action, sample_valid_joints, to_trig, ActionVector, JointFrame, TrigJointRep};
use crate::kinematics::{tip_position, JointConfig};
use crate::systems::{randomize, CtrSystem};

/// System index as it appears in the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemTag {
    pub index: usize,
    pub count: usize,
    pub encoding: SystemEncoding,
}

impl SystemTag {
    pub fn dim(&self) -> usize {
        match self.encoding {
            SystemEncoding::Scaled => 1,
            SystemEncoding::OneHot => self.count,
        }
    }

    fn write(&self, out: &mut Vec<f64>) {
        match self.encoding {
            SystemEncoding::Scaled => {
                let denom = (self.count.max(2) - 1) as f64;
                out.push(self.index as f64 / denom);
            }
            SystemEncoding::OneHot => out.extend((0..self.count).map(|k| if k == self.index { 1.0 } else { 0.0 })),
        }
    }
}

/// One observation. The flat vector is
/// `[γ₁, γ₂, γ₃, G_a − G_d, δ, ψ?]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Joint encoding in the configured frame, from the (possibly noisy)
    /// joint readings.
    pub trig: TrigJointRep,
    /// Measured tip, mm.
    pub achieved_goal: Vector3<f64>,
    pub desired_goal: Vector3<f64>,
    /// Goal tolerance, mm.
    pub tolerance: f64,
    pub system: Option<SystemTag>,
}

/// Observation length for a given system tag layout.
pub fn observation_dim(system: Option<&SystemTag>) -> usize {
    13 + system.map_or(0, SystemTag::dim)
}

impl EnvState {
    /// Builds the observation from joint readings and goals. Pure.
    pub fn assemble(
        q: &JointConfig,
        frame: JointFrame,
        achieved_goal: Vector3<f64>,
        desired_goal: Vector3<f64>,
        tolerance: f64,
        system: Option<SystemTag>,
    ) -> Self {
        Self {
            trig: to_trig(&frame.express(q)),
            achieved_goal,
            desired_goal,
            tolerance,
            system,
        }
    }

    pub fn goal_delta(&self) -> Vector3<f64> {
        self.achieved_goal - self.desired_goal
    }

    pub fn dim(&self) -> usize {
        observation_dim(self.system.as_ref())
    }

    pub fn write(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.trig.flatten());
        out.extend(self.goal_delta().iter());
        out.push(self.tolerance);
        if let Some(tag) = &self.system {
            tag.write(out);
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.write(&mut v);
        v
    }

    pub fn with_goal(&self, desired_goal: Vector3<f64>) -> Self {
        Self { desired_goal, ..*self }
    }
}

/// `r = 0` if `e ≤ δ`, else `−1`.
pub fn sparse_reward(error: f64, tolerance: f64) -> f64 {
    if error <= tolerance {
        0.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: EnvState,
    pub action: ActionVector,
    pub reward: f64,
    pub next_state: EnvState,
    /// True tip after the step, mm.
    pub achieved_goal: Vector3<f64>,
    pub desired_goal: Vector3<f64>,
    pub terminal: bool,
}

/// Noiseless ground truth after a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub joints: JointConfig,
    pub achieved_goal: Vector3<f64>,
    /// `‖G_a − G_d‖` from the true tip, mm.
    pub error: f64,
    pub success: bool,
    /// Episode ended on the step limit rather than on success.
    pub truncated: bool,
    pub clamped: bool,
    pub action_clipped: bool,
    pub timestep: u64,
    pub episode_step: usize,
    pub system_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: f64,
    /// Success or step limit.
    pub terminal: bool,
    pub info: StepInfo,
}

/// Axis-aligned bounds with per-entry names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpace {
    pub names: Vec<String>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoxSpace {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    fn push(&mut self, name: impl Into<String>, low: f64, high: f64) {
        self.names.push(name.into());
        self.low.push(low);
        self.high.push(high);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogRow {
    pub step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub achieved_x: f64,
    pub achieved_y: f64,
    pub achieved_z: f64,
    pub desired_x: f64,
    pub desired_y: f64,
    pub desired_z: f64,
    pub error: f64,
    pub reward: f64,
}

pub fn write_episode_log<W: Write>(rows: &[EpisodeLogRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<episode log>", e))?;
    Ok(())
}

pub fn save_episode_log(rows: &[EpisodeLogRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_episode_log(rows, std::io::BufWriter::new(f))
}

pub struct CtrEnv {
    config: EnvConfig,
    registry: Vec<CtrSystem>,
    sampler: SystemSampler,
    rng: ChaCha8Rng,
    system_index: usize,
    system: CtrSystem,
    joints: JointConfig,
    goal_joints: JointConfig,
    achieved: Vector3<f64>,
    desired: Vector3<f64>,
    observation: EnvState,
    timestep: u64,
    advance_timestep: bool,
    episode_step: usize,
    finished: bool,
    log: Option<Vec<EpisodeLogRow>>,
}

impl std::fmt::Debug for CtrEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CtrEnv")
            .field("system_index", &self.system_index)
            .field("joints", &self.joints)
            .field("desired", &self.desired)
            .field("timestep", &self.timestep)
            .field("episode_step", &self.episode_step)
            .finish()
    }
}

impl CtrEnv {
    /// Loads the configured systems and resets once.
    pub fn new(config: EnvConfig) -> Result<Self> {
        let systems = config.load_systems()?;
        Self::with_systems(config, systems)
    }

    /// Uses `systems` as the registry instead of the configured sources.
    pub fn with_systems(config: EnvConfig, systems: Vec<CtrSystem>) -> Result<Self> {
        config.validate()?;
        if systems.is_empty() {
            return Err(Error::InvalidConfig("at least one system is required".into()));
        }
        let systems = systems.into_iter().map(CtrSystem::validated).collect::<Result<Vec<_>>>()?;
        let sampler = SystemSampler::new(config.sampler, &systems);
        let system = systems[0].clone();
        let placeholder = EnvState::assemble(
            &JointConfig::home(),
            config.joint_frame,
            Vector3::zeros(),
            Vector3::zeros(),
            config.curriculum.tolerance(0),
            None,
        );
        let mut env = Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            registry: systems,
            sampler,
            system_index: 0,
            system,
            joints: JointConfig::home(),
            goal_joints: JointConfig::home(),
            achieved: Vector3::zeros(),
            desired: Vector3::zeros(),
            observation: placeholder,
            timestep: 0,
            advance_timestep: true,
            episode_step: 0,
            finished: true,
            log: None,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn registry(&self) -> &[CtrSystem] {
        &self.registry
    }

    pub fn seed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn tag(&self) -> Option<SystemTag> {
        self.config.multi_system().then_some(SystemTag {
            index: self.system_index,
            count: self.registry.len(),
            encoding: self.config.system_encoding,
        })
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(self.tag().as_ref())
    }

    pub fn tolerance(&self) -> f64 {
        self.config.curriculum.tolerance(self.timestep)
    }

    /// Curriculum timestep.
    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn set_timestep(&mut self, t: u64) {
        self.timestep = t;
        self.observation.tolerance = self.tolerance();
    }

    /// Whether each step advances the curriculum timestep (on by default).
    pub fn set_advance_timestep(&mut self, on: bool) {
        self.advance_timestep = on;
    }

    pub fn set_max_episode_steps(&mut self, n: usize) {
        self.config.max_episode_steps = n.max(1);
    }

    pub fn set_logging(&mut self, on: bool) {
        self.log = on.then(Vec::new);
    }

    /// Rows of the current episode, if logging is on.
    pub fn episode_log(&self) -> Option<&[EpisodeLogRow]> {
        self.log.as_deref()
    }

    pub fn system(&self) -> &CtrSystem {
        &self.system
    }

    pub fn system_index(&self) -> usize {
        self.system_index
    }

    pub fn joints(&self) -> &JointConfig {
        &self.joints
    }

    /// Joints that produced the current desired goal.
    pub fn goal_joints(&self) -> &JointConfig {
        &self.goal_joints
    }

    /// True tip, mm.
    pub fn achieved_goal(&self) -> Vector3<f64> {
        self.achieved
    }

    pub fn desired_goal(&self) -> Vector3<f64> {
        self.desired
    }

    /// True tip error, mm.
    pub fn error(&self) -> f64 {
        (self.achieved - self.desired).norm()
    }

    pub fn episode_step(&self) -> usize {
        self.episode_step
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// The last observation returned.
    pub fn state(&self) -> &EnvState {
        &self.observation
    }

    fn observe(&mut self) -> EnvState {
        let (q, tip) = match &self.config.noise {
            Some(spec) if !spec.is_zero() => observe_with_noise(&self.joints, &self.achieved, spec, &mut self.rng),
            _ => (self.joints, self.achieved),
        };
        self.observation = EnvState::assemble(
            &q,
            self.config.joint_frame,
            tip,
            self.desired,
            self.tolerance(),
            self.tag(),
        );
        self.observation
    }

    fn tip(&self, q: &JointConfig) -> Result<Vector3<f64>> {
        tip_position(&self.system, q, self.config.tier)
    }

    /// Samples a system, optionally perturbs it, then samples start joints
    /// and an independent goal.
    pub fn reset(&mut self) -> Result<EnvState> {
        self.reset_with(None, None, None)
    }

    /// Reset with any of the system index, start joints or goal joints
    /// fixed. Unset parts are sampled as in [`reset`](Self::reset).
    pub fn reset_with(
        &mut self,
        system_index: Option<usize>,
        start: Option<JointConfig>,
        goal: Option<JointConfig>,
    ) -> Result<EnvState> {
        let index = match system_index {
            Some(i) if i < self.registry.len() => i,
            Some(i) => {
                return Err(Error::InvalidConfig(format!(
                    "system index {i} out of range for {} systems",
                    self.registry.len()
                )))
            }
            None => self.sampler.sample(&mut self.rng),
        };
        self.system_index = index;
        self.system = match &self.config.domain_randomization {
            Some(spec) => randomize(&self.registry[index], spec, &mut self.rng)?,
            None => self.registry[index].clone(),
        };
        let mode = self.config.rotation_mode;
        let start = match start {
            Some(q) => q,
            None => sample_valid_joints(&self.system, &mut self.rng, mode),
        };
        start.check(&self.system)?;
        let goal = match goal {
            Some(q) => q,
            None => sample_valid_joints(&self.system, &mut self.rng, mode),
        };
        goal.check(&self.system)?;
        self.joints = start;
        self.goal_joints = goal;
        self.achieved = self.tip(&start)?;
        self.desired = self.tip(&goal)?;
        self.episode_step = 0;
        self.finished = false;
        if let Some(log) = &mut self.log {
            log.clear();
        }
        Ok(self.observe())
    }

    /// Replaces the desired goal and starts a new episode from the current
    /// joints.
    pub fn set_goal(&mut self, goal: Vector3<f64>) -> EnvState {
        self.desired = goal;
        self.episode_step = 0;
        self.finished = false;
        if let Some(log) = &mut self.log {
            log.clear();
        }
        self.observe()
    }

    pub fn set_joints(&mut self, q: JointConfig) -> Result<EnvState> {
        q.check(&self.system)?;
        self.achieved = self.tip(&q)?;
        self.joints = q;
        Ok(self.observe())
    }

    /// Scales `[-1, 1]⁶` to physical limits and steps.
    pub fn step_normalized(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != ActionVector::DIM {
            return Err(Error::DimensionMismatch {
                expected: ActionVector::DIM,
                actual: action.len(),
            });
        }
        self.step(&ActionVector::from_normalized(action))
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<StepResult> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        if action.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("action {action:?}")));
        }
        let outcome = apply_action(&self.joints, action, self.config.rotation_mode, &self.system);
        self.joints = outcome.joints;
        self.achieved = self.tip(&self.joints)?;
        if self.advance_timestep {
            self.timestep = self.timestep.saturating_add(1);
        }
        self.episode_step += 1;
        let state = self.observe();
        let error = self.error();
        let reward_error = if self.config.noisy_reward {
            state.goal_delta().norm()
        } else {
            error
        };
        let reward = sparse_reward(reward_error, state.tolerance);
        let success = reward == 0.0;
        let truncated = !success && self.episode_step >= self.config.max_episode_steps;
        let terminal = success || truncated;
        self.finished = terminal;
        if let Some(log) = &mut self.log {
            let (b, a) = (self.joints.beta, self.joints.alpha);
            log.push(EpisodeLogRow {
                step: self.episode_step,
                beta1: b[0],
                beta2: b[1],
                beta3: b[2],
                alpha1: a[0],
                alpha2: a[1],
                alpha3: a[2],
                achieved_x: self.achieved.x,
                achieved_y: self.achieved.y,
                achieved_z: self.achieved.z,
                desired_x: self.desired.x,
                desired_y: self.desired.y,
                desired_z: self.desired.z,
                error,
                reward,
            });
        }
        Ok(StepResult {
            state,
            reward,
            terminal,
            info: StepInfo {
                joints: self.joints,
                achieved_goal: self.achieved,
                error,
                success,
                truncated,
                clamped: outcome.clamped,
                action_clipped: outcome.action_clipped,
                timestep: self.timestep,
                episode_step: self.episode_step,
                system_index: self.system_index,
            },
        })
    }

    pub fn observation_space(&self) -> BoxSpace {
        let lmax = self
            .registry
            .iter()
            .map(CtrSystem::robot_length)
            .fold(0.0, f64::max)
            * 1.1;
        let mut space = BoxSpace {
            names: vec![],
            low: vec![],
            high: vec![],
        };
        for i in 1..=3 {
            space.push(format!("cos_alpha{i}"), -1.0, 1.0);
            space.push(format!("sin_alpha{i}"), -1.0, 1.0);
            space.push(format!("beta{i}"), -lmax, lmax);
        }
        for axis in ["x", "y", "z"] {
            space.push(format!("goal_delta_{axis}"), -2.0 * lmax, 2.0 * lmax);
        }
        let c = &self.config.curriculum;
        space.push("tolerance", c.delta_final, c.delta_initial.max(c.delta_final));
        if let Some(tag) = self.tag() {
            match tag.encoding {
                SystemEncoding::Scaled => space.push("system_id", 0.0, 1.0),
                SystemEncoding::OneHot => (0..tag.count).for_each(|k| space.push(format!("system_{k}"), 0.0, 1.0)),
            }
        }
        space
    }

    /// Physical action bounds, mm and rad.
    pub fn action_space(&self) -> BoxSpace {
        let lim = ActionVector::limits();
        BoxSpace {
            names: ["d_beta1", "d_beta2", "d_beta3", "d_alpha1", "d_alpha2", "d_alpha3"]
                .map(String::from)
                .to_vec(),
            low: lim.iter().map(|l| -l).collect(),
            high: lim.to_vec(),
        }
    }
}
