//! Inverse-kinematics evaluation batteries, error statistics and the
//! exports used for workspace and rotation error plots.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{jacobian_controller, policy_controller, JacobianGains, TrackingResult};
use crate::env::{CtrEnv, EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::jointspace::{wrap_angle, ActionVector};
use crate::kinematics::{JointConfig, KinematicsTier};
use crate::rl::Agent;
use crate::systems::CtrSystem;

/// Error below which an episode counts as a success, mm.
pub const SUCCESS_THRESHOLD_MM: f64 = 1.0;
/// Errors above this are singled out in workspace exports, mm.
pub const LARGE_ERROR_MM: f64 = 2.0;

/// Mean and population standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Percentage of the overall robot length (the innermost tube).
pub fn percent_of_length(error: f64, sys: &CtrSystem) -> f64 {
    100.0 * error / sys.robot_length()
}

/// Moves straight toward the episode's goal joints at the largest speed the
/// action limits allow. A harness self-check, not a controller.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAgent;

impl Agent for OracleAgent {
    fn act(&mut self, _state: &EnvState, env: &CtrEnv) -> Result<ActionVector> {
        let (q, g) = (env.joints(), env.goal_joints());
        let full = ActionVector {
            delta_beta: [0, 1, 2].map(|i| g.beta[i] - q.beta[i]),
            delta_alpha: [0, 1, 2].map(|i| g.alpha[i] - q.alpha[i]),
        };
        let worst = full
            .to_normalized()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if worst > 1.0 { 1.0 / worst } else { 1.0 };
        Ok(ActionVector::from_array(full.to_array().map(|v| v * scale)))
    }
}

/// Uniform random actions over the action limits.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _state: &EnvState, _env: &CtrEnv) -> Result<ActionVector> {
        let a: Vec<f64> = (0..ActionVector::DIM).map(|_| self.rng.random_range(-1.0..=1.0)).collect();
        Ok(ActionVector::from_normalized(&a))
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkEvalConfig {
    pub episodes: usize,
    /// Step budget per episode; the environment's episode length when unset.
    pub max_steps: Option<usize>,
    /// Evaluate on this registry entry only; sampled per episode when unset.
    pub system: Option<usize>,
    pub seed: u64,
    pub workers: usize,
}

impl Default for IkEvalConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            max_steps: None,
            system: None,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub system_index: usize,
    pub start_joints: JointConfig,
    pub final_joints: JointConfig,
    pub desired_goal: Vector3<f64>,
    pub achieved_goal: Vector3<f64>,
    /// Initial tip-to-goal distance, mm.
    pub initial_distance: f64,
    /// Noiseless final tip error, mm.
    pub error: f64,
    pub steps: usize,
}

impl EpisodeRecord {
    pub fn success(&self) -> bool {
        self.error < SUCCESS_THRESHOLD_MM
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkEvalReport {
    pub max_steps: usize,
    /// Goal tolerance the environment used to end episodes early, mm.
    pub tolerance: f64,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
}

/// Flat CSV form of an [`EpisodeRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct EpisodeRow {
    episode: usize,
    system_index: usize,
    start_beta1: f64,
    start_beta2: f64,
    start_beta3: f64,
    start_alpha1: f64,
    start_alpha2: f64,
    start_alpha3: f64,
    final_beta1: f64,
    final_beta2: f64,
    final_beta3: f64,
    final_alpha1: f64,
    final_alpha2: f64,
    final_alpha3: f64,
    desired_x: f64,
    desired_y: f64,
    desired_z: f64,
    achieved_x: f64,
    achieved_y: f64,
    achieved_z: f64,
    initial_distance: f64,
    error: f64,
    steps: usize,
}

impl From<&EpisodeRecord> for EpisodeRow {
    fn from(r: &EpisodeRecord) -> Self {
        let (s, f) = (r.start_joints, r.final_joints);
        Self {
            episode: r.episode,
            system_index: r.system_index,
            start_beta1: s.beta[0],
            start_beta2: s.beta[1],
            start_beta3: s.beta[2],
            start_alpha1: s.alpha[0],
            start_alpha2: s.alpha[1],
            start_alpha3: s.alpha[2],
            final_beta1: f.beta[0],
            final_beta2: f.beta[1],
            final_beta3: f.beta[2],
            final_alpha1: f.alpha[0],
            final_alpha2: f.alpha[1],
            final_alpha3: f.alpha[2],
            desired_x: r.desired_goal.x,
            desired_y: r.desired_goal.y,
            desired_z: r.desired_goal.z,
            achieved_x: r.achieved_goal.x,
            achieved_y: r.achieved_goal.y,
            achieved_z: r.achieved_goal.z,
            initial_distance: r.initial_distance,
            error: r.error,
            steps: r.steps,
        }
    }
}

impl From<EpisodeRow> for EpisodeRecord {
    fn from(r: EpisodeRow) -> Self {
        Self {
            episode: r.episode,
            system_index: r.system_index,
            start_joints: JointConfig::new(
                [r.start_beta1, r.start_beta2, r.start_beta3],
                [r.start_alpha1, r.start_alpha2, r.start_alpha3],
            ),
            final_joints: JointConfig::new(
                [r.final_beta1, r.final_beta2, r.final_beta3],
                [r.final_alpha1, r.final_alpha2, r.final_alpha3],
            ),
            desired_goal: Vector3::new(r.desired_x, r.desired_y, r.desired_z),
            achieved_goal: Vector3::new(r.achieved_x, r.achieved_y, r.achieved_z),
            initial_distance: r.initial_distance,
            error: r.error,
            steps: r.steps,
        }
    }
}

/// Aggregates printed alongside a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkSummary {
    pub episodes: usize,
    pub max_steps: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub success_rate: f64,
}

impl IkEvalReport {
    pub fn errors(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.error).collect()
    }

    pub fn mean_error(&self) -> f64 {
        mean_std(&self.errors()).0
    }

    pub fn std_error(&self) -> f64 {
        mean_std(&self.errors()).1
    }

    pub fn success_rate(&self) -> f64 {
        success_rate(self.episodes.iter())
    }

    /// Success rate over the episodes that ran on registry entry `system`.
    pub fn success_rate_for(&self, system: usize) -> f64 {
        success_rate(self.episodes.iter().filter(|e| e.system_index == system))
    }

    pub fn summary(&self) -> IkSummary {
        IkSummary {
            episodes: self.episodes.len(),
            max_steps: self.max_steps,
            mean_error: self.mean_error(),
            std_error: self.std_error(),
            success_rate: self.success_rate(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for e in &self.episodes {
            wtr.serialize(EpisodeRow::from(e))?;
        }
        wtr.flush().map_err(|e| Error::io("<evaluation csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Per-episode records from a CSV written by [`write_csv`](Self::write_csv).
    pub fn read_episodes<R: Read>(r: R) -> Result<Vec<EpisodeRecord>> {
        let mut rdr = csv::Reader::from_reader(r);
        rdr.deserialize::<EpisodeRow>()
            .map(|row| Ok(EpisodeRecord::from(row?)))
            .collect()
    }
}

fn success_rate<'a>(eps: impl Iterator<Item = &'a EpisodeRecord>) -> f64 {
    let (mut n, mut ok) = (0usize, 0usize);
    for e in eps {
        n += 1;
        ok += e.success() as usize;
    }
    if n == 0 {
        f64::NAN
    } else {
        ok as f64 / n as f64
    }
}

/// Seed for episode `i`, independent of scheduling.
fn episode_seed(base: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(i as u64 + 1);
    rng.random()
}

fn run_episode(env: &mut CtrEnv, agent: &mut dyn Agent, i: usize, cfg: &IkEvalConfig) -> Result<EpisodeRecord> {
    let seed = episode_seed(cfg.seed, i);
    env.seed(seed);
    agent.begin_episode(seed);
    let mut state = env.reset_with(cfg.system, None, None)?;
    let start_joints = *env.joints();
    let initial_distance = env.error();
    let mut steps = 0;
    while !env.is_finished() {
        let a = agent.act(&state, env)?;
        state = env.step(&a)?.state;
        steps += 1;
    }
    Ok(EpisodeRecord {
        episode: i,
        system_index: env.system_index(),
        start_joints,
        final_joints: *env.joints(),
        desired_goal: env.desired_goal(),
        achieved_goal: env.achieved_goal(),
        initial_distance,
        error: env.error(),
        steps,
    })
}

/// Runs `cfg.episodes` episodes with the goal tolerance fixed at its final
/// value. Episodes are seeded by index, so the report does not depend on
/// the number of workers.
pub fn evaluate_ik<A>(agent: &A, env_config: &EnvConfig, systems: &[CtrSystem], cfg: &IkEvalConfig) -> Result<IkEvalReport>
where
    A: Agent + Clone + Send,
{
    let make_env = || -> Result<CtrEnv> {
        let mut env = CtrEnv::with_systems(env_config.clone(), systems.to_vec())?;
        env.set_timestep(u64::MAX);
        env.set_advance_timestep(false);
        if let Some(n) = cfg.max_steps {
            env.set_max_episode_steps(n);
        }
        Ok(env)
    };
    let probe = make_env()?;
    let (tolerance, max_steps) = (probe.tolerance(), cfg.max_steps.unwrap_or(env_config.max_episode_steps));
    drop(probe);

    let workers = cfg.workers.clamp(1, cfg.episodes.max(1));
    let chunk = cfg.episodes.div_ceil(workers).max(1);
    let mut episodes: Vec<EpisodeRecord> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let mut agent = agent.clone();
                let make_env = &make_env;
                scope.spawn(move || -> Result<Vec<EpisodeRecord>> {
                    let mut env = make_env()?;
                    let range = (w * chunk)..((w + 1) * chunk).min(cfg.episodes);
                    range.map(|i| run_episode(&mut env, &mut agent, i, cfg)).collect()
                })
            })
            .collect();
        let mut all = Vec::with_capacity(cfg.episodes);
        for h in handles {
            all.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok::<_, Error>(all)
    })?;
    episodes.sort_by_key(|e| e.episode);
    Ok(IkEvalReport {
        max_steps,
        tolerance,
        seed: cfg.seed,
        episodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRegression {
    /// Final error per unit of initial goal distance.
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<ErrorRegression> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least two points, got {}", xs.len())));
    }
    let (mx, _) = mean_std(xs);
    let (my, _) = mean_std(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * xs.len() as f64 {
        return Err(Error::DegenerateFit("all initial distances are equal".into()));
    }
    let slope = sxy / sxx;
    Ok(ErrorRegression {
        slope,
        intercept: my - slope * mx,
    })
}

/// Final error against initial goal distance over every episode.
pub fn error_regression(report: &IkEvalReport) -> Result<ErrorRegression> {
    let xs: Vec<f64> = report.episodes.iter().map(|e| e.initial_distance).collect();
    least_squares(&xs, &report.errors())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspacePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationPoint {
    pub tube: usize,
    /// Final rotation wrapped to (−π, π].
    pub alpha: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkspaceExport {
    /// One row per episode at the achieved tip position.
    pub all: Vec<WorkspacePoint>,
    /// Rows with error above [`LARGE_ERROR_MM`].
    pub large: Vec<WorkspacePoint>,
    /// Three rows per episode, one per tube.
    pub rotation: Vec<RotationPoint>,
}

pub fn workspace_errors(report: &IkEvalReport) -> WorkspaceExport {
    let mut out = WorkspaceExport::default();
    for e in &report.episodes {
        let p = WorkspacePoint {
            x: e.achieved_goal.x,
            y: e.achieved_goal.y,
            z: e.achieved_goal.z,
            error: e.error,
        };
        out.all.push(p);
        if e.error > LARGE_ERROR_MM {
            out.large.push(p);
        }
        for (tube, a) in e.final_joints.alpha.iter().enumerate() {
            out.rotation.push(RotationPoint {
                tube: tube + 1,
                alpha: wrap_angle(*a),
                error: e.error,
            });
        }
    }
    out
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path, header: &[&str]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::BufWriter::new(f));
    wtr.write_record(header)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Paths written by [`export_workspace_errors`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceFiles {
    pub all: PathBuf,
    pub large: PathBuf,
    pub rotation: PathBuf,
}

/// Writes `workspace_errors.csv`, `workspace_errors_gt2mm.csv` and
/// `rotation_errors.csv` into `dir`.
pub fn export_workspace_errors(report: &IkEvalReport, dir: impl AsRef<Path>) -> Result<(WorkspaceExport, WorkspaceFiles)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let export = workspace_errors(report);
    let files = WorkspaceFiles {
        all: dir.join("workspace_errors.csv"),
        large: dir.join("workspace_errors_gt2mm.csv"),
        rotation: dir.join("rotation_errors.csv"),
    };
    let xyz = ["x", "y", "z", "error"];
    write_rows(&export.all, &files.all, &xyz)?;
    write_rows(&export.large, &files.large, &xyz)?;
    write_rows(&export.rotation, &files.rotation, &["tube", "alpha", "error"])?;
    Ok((export, files))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerComparison {
    pub policy: TrackingResult,
    pub jacobian: TrackingResult,
}

/// Tracks the same waypoints from the same start joints with a policy and
/// with the damped least-squares controller.
pub fn compare_controllers(
    agent: &mut dyn Agent,
    env: &mut CtrEnv,
    waypoints: &[Vector3<f64>],
    q0: &JointConfig,
    gains: &JacobianGains,
    steps_per_waypoint: usize,
) -> Result<ControllerComparison> {
    env.set_joints(*q0)?;
    let policy = policy_controller(agent, env, waypoints, steps_per_waypoint)?.tracking;
    let tier: KinematicsTier = env.config().tier;
    let jacobian = jacobian_controller(env.system(), waypoints, q0, gains, tier)?;
    Ok(ControllerComparison { policy, jacobian })
}
