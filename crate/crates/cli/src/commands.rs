use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ctr_core::control::{
    generate_path, jacobian_controller, nearest_start, policy_controller, JacobianGains, PathSpec, TrackingResult,
};
use ctr_core::env::{record_trace, save_trace, scripted_actions, write_trace, CtrEnv, EnvConfig, NoiseSpec};
use ctr_core::eval::{
    compare_controllers, error_regression, evaluate_ik, export_workspace_errors, percent_of_length, IkEvalConfig,
    IkEvalReport,
};
use ctr_core::kinematics::{forward_kinematics, JointConfig, KinematicsTier, DEFAULT_SAMPLES_PER_SEGMENT};
use ctr_core::rl::{hash_json, save_train_log, train_on, Checkpoint, ExperimentConfig};
use ctr_core::systems::{reference_system, CtrSystem};

use crate::manifest::{out_dir, RunManifest};
use crate::{
    CompareArgs, ControllerKind, EvaluateArgs, ExportArgs, FollowArgs, GainArgs, PathArgs, PolicyEnvArgs,
    ShapeArgs, TraceArgs, TrainArgs,
};

/// Candidates drawn when picking start joints near a path.
const START_SAMPLES: usize = 5000;

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(t) = a.timesteps {
        // keep the schedule's share of the run unless it is set explicitly
        let share = cfg.train.curriculum_steps as f64 / cfg.train.total_timesteps.max(1) as f64;
        cfg.train.curriculum_steps = ((t as f64 * share).round() as u64).clamp(1, t.max(1));
        cfg.train.total_timesteps = t;
    }
    if let Some(n) = a.curriculum_steps {
        cfg.train.curriculum_steps = n;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.train.validate()?;
    let systems = cfg.env.load_systems()?;
    let dir = out_dir(a.out.out, "train")?;
    let mut manifest = RunManifest::start("train", ctr_core::rl::config_hash(&cfg.env, &cfg.train), cfg.train.seed);
    let probe = CtrEnv::with_systems(cfg.env.clone(), systems.clone())?;
    eprintln!(
        "systems: {}  observation dim: {}  timesteps: {}",
        systems.len(),
        probe.observation_dim(),
        cfg.train.total_timesteps
    );
    drop(probe);
    let outcome = train_on(&cfg.env, systems, &cfg.train, &mut |r| {
        eprintln!(
            "t={:>8}  success {:.3}  final error {:8.3} mm  tolerance {:6.3} mm  critic {:.4}  q {:.3}",
            r.timestep, r.success_rate, r.mean_final_error, r.tolerance, r.critic_loss, r.mean_q
        );
    })?;
    outcome.checkpoint.save(manifest.output(&dir.join("checkpoint.json")))?;
    save_train_log(&outcome.log, manifest.output(&dir.join("train_log.csv")))?;
    let config_path = manifest.output(&dir.join("config.toml"));
    std::fs::write(&config_path, toml::to_string(&cfg)?).with_context(|| format!("writing {}", config_path.display()))?;
    manifest.finish(&dir)?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

/// The checkpoint's environment with noise and randomization set for
/// evaluation.
fn eval_env_config(ck: &Checkpoint, p: &PolicyEnvArgs) -> EnvConfig {
    let mut env = ck.env.clone();
    env.noise = p.noise.then(NoiseSpec::sensor);
    if !p.randomized {
        env.domain_randomization = None;
    }
    env
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.policy.checkpoint)?;
    let env_cfg = eval_env_config(&ck, &a.policy);
    let cfg = IkEvalConfig {
        episodes: a.episodes,
        max_steps: a.max_steps,
        system: a.system,
        seed: a.seed,
        workers: a.workers,
    };
    let dir = out_dir(a.out.out, "evaluate")?;
    let mut manifest = RunManifest::start("evaluate", hash_json(&(&ck.config_hash, &env_cfg, &cfg)), a.seed);
    let report = evaluate_ik(&ck.policy(), &env_cfg, &ck.systems, &cfg)?;
    report.save_csv(manifest.output(&dir.join("evaluation.csv")))?;
    let summary = report.summary();
    let summary_path = manifest.output(&dir.join("summary.json"));
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    print_summary(&report, &ck.systems);
    manifest.finish(&dir)?;
    Ok(())
}

fn print_summary(report: &IkEvalReport, systems: &[CtrSystem]) {
    let s = report.summary();
    println!("episodes       {}", s.episodes);
    println!("max steps      {}", s.max_steps);
    println!("mean error mm  {:.6}", s.mean_error);
    println!("std error mm   {:.6}", s.std_error);
    println!("success rate   {:.6}", s.success_rate);
    if let Ok(fit) = error_regression(report) {
        println!("error slope    {:.6}", fit.slope);
        println!("error offset   {:.6}", fit.intercept);
    }
    if systems.len() > 1 {
        for (i, sys) in systems.iter().enumerate() {
            let errs: Vec<f64> = report.episodes.iter().filter(|e| e.system_index == i).map(|e| e.error).collect();
            if errs.is_empty() {
                continue;
            }
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            println!(
                "system {i} ({}): success {:.4}  mean error {:.4} mm ({:.4}% of length)",
                sys.label(),
                report.success_rate_for(i),
                mean,
                percent_of_length(mean, sys)
            );
        }
    }
}

pub fn export_workspace(a: ExportArgs) -> Result<()> {
    let file = std::fs::File::open(&a.report).with_context(|| format!("file not found: {}", a.report.display()))?;
    let episodes = IkEvalReport::read_episodes(file)?;
    if episodes.is_empty() {
        bail!("{} holds no episodes", a.report.display());
    }
    let report = IkEvalReport {
        max_steps: 0,
        tolerance: 0.0,
        seed: 0,
        episodes,
    };
    let dir = out_dir(a.out.out, "export-workspace")?;
    let mut manifest = RunManifest::start("export-workspace", hash_json(&a.report), 0);
    let (export, files) = export_workspace_errors(&report, &dir)?;
    for f in [&files.all, &files.large, &files.rotation] {
        manifest.output(f);
    }
    println!("rows {}  above 2 mm {}", export.all.len(), export.large.len());
    manifest.finish(&dir)
}

/// Parses `b1,b2,b3,a1,a2,a3` with rotations in degrees.
fn parse_joints(text: &str) -> Result<JointConfig> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad joint value {s:?}")))
        .collect::<Result<_>>()?;
    if v.len() != 6 {
        bail!("expected 6 comma-separated joint values, got {}", v.len());
    }
    Ok(JointConfig::new([v[0], v[1], v[2]], [v[3], v[4], v[5]].map(f64::to_radians)))
}

/// A reference system id or a TOML file.
fn parse_system(text: &str) -> Result<CtrSystem> {
    match text.parse::<usize>() {
        Ok(id) if id < 4 => Ok(reference_system(id)),
        Ok(id) => bail!("reference system ids are 0 to 3, got {id}"),
        Err(_) => Ok(CtrSystem::load(text)?),
    }
}

fn gains(g: &GainArgs) -> JacobianGains {
    JacobianGains {
        kp: [g.kp; 3],
        lambda: g.lambda,
        dt: g.dt,
        iterations: g.iterations,
    }
}

fn start_joints(p: &PathArgs, sys: &CtrSystem, first: &nalgebra::Vector3<f64>, tier: KinematicsTier) -> Result<JointConfig> {
    let q = match &p.q0 {
        Some(text) => parse_joints(text)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            nearest_start(sys, first, START_SAMPLES, &mut rng, tier)?
        }
    };
    q.check(sys)?;
    Ok(q)
}

fn load_path(p: &PathArgs) -> Result<Vec<nalgebra::Vector3<f64>>> {
    Ok(generate_path(&PathSpec::load(&p.path)?)?)
}

fn save_shapes(sys: &CtrSystem, tracking: &TrackingResult, tier: KinematicsTier, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    wtr.write_record(["waypoint", "s", "x", "y", "z"])?;
    for w in &tracking.waypoints {
        let shape = forward_kinematics(sys, &w.joints, tier, DEFAULT_SAMPLES_PER_SEGMENT)?;
        for p in &shape.points {
            wtr.serialize((w.index, p.s, p.position.x, p.position.y, p.position.z))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn print_tracking(label: &str, t: &TrackingResult) {
    println!(
        "{label}: waypoints {}  mean error {:.4} mm  std {:.4} mm  saturated waypoints {}",
        t.waypoints.len(),
        t.mean_error(),
        t.std_error(),
        t.saturation_events()
    );
}

fn policy_env(ck: &Checkpoint, system: usize, noise: bool) -> Result<CtrEnv> {
    let mut cfg = ck.env.clone();
    cfg.domain_randomization = None;
    cfg.noise = noise.then(NoiseSpec::sensor);
    let mut env = CtrEnv::with_systems(cfg, ck.systems.clone())?;
    env.reset_with(Some(system), None, None)?;
    Ok(env)
}

pub fn follow_path(a: FollowArgs) -> Result<()> {
    let waypoints = load_path(&a.path)?;
    let dir = out_dir(a.out.out, "follow-path")?;
    let mut manifest = RunManifest::start("follow-path", hash_json(&(&a.path.path, &a.system)), a.path.seed);
    let ck = a.checkpoint.as_ref().map(Checkpoint::load).transpose()?;
    let (tracking, sys, tier) = match (a.controller, &ck) {
        (ControllerKind::Policy, None) => bail!("the policy controller needs --checkpoint"),
        (ControllerKind::Policy, Some(ck)) => {
            let index: usize = a.system.parse().context("--system must be an index into the checkpoint's systems")?;
            let mut env = policy_env(ck, index, a.noise)?;
            let sys = env.system().clone();
            let tier = env.config().tier;
            env.set_joints(start_joints(&a.path, &sys, &waypoints[0], tier)?)?;
            let mut policy = ck.policy();
            let run = policy_controller(&mut policy, &mut env, &waypoints, a.path.steps_per_waypoint)?;
            let actions = manifest.output(&dir.join("actions.csv"));
            let mut wtr = csv::Writer::from_path(&actions)?;
            wtr.write_record(["db1", "db2", "db3", "da1", "da2", "da3"])?;
            for act in &run.actions {
                wtr.serialize(act.to_array())?;
            }
            wtr.flush()?;
            (run.tracking, sys, tier)
        }
        (ControllerKind::Jacobian, ck) => {
            let (sys, tier) = match ck {
                Some(ck) => {
                    let index: usize = a.system.parse().context("--system must be an index into the checkpoint's systems")?;
                    let sys = ck.systems.get(index).with_context(|| format!("checkpoint has no system {index}"))?;
                    (sys.clone(), ck.env.tier)
                }
                None => (parse_system(&a.system)?, KinematicsTier::Rigid),
            };
            let q0 = start_joints(&a.path, &sys, &waypoints[0], tier)?;
            (jacobian_controller(&sys, &waypoints, &q0, &gains(&a.gains), tier)?, sys, tier)
        }
    };
    tracking.save_csv(manifest.output(&dir.join("tracking.csv")))?;
    save_shapes(&sys, &tracking, tier, &manifest.output(&dir.join("shapes.csv")))?;
    print_tracking(
        match a.controller {
            ControllerKind::Policy => "policy",
            ControllerKind::Jacobian => "jacobian",
        },
        &tracking,
    );
    manifest.finish(&dir)
}

pub fn compare_jacobian(a: CompareArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let waypoints = load_path(&a.path)?;
    let dir = out_dir(a.out.out, "compare-jacobian")?;
    let mut manifest = RunManifest::start(
        "compare-jacobian",
        hash_json(&(&ck.config_hash, &a.path.path, a.system)),
        a.path.seed,
    );
    let mut env = policy_env(&ck, a.system, false)?;
    let sys = env.system().clone();
    let q0 = start_joints(&a.path, &sys, &waypoints[0], env.config().tier)?;
    let mut policy = ck.policy();
    let cmp = compare_controllers(&mut policy, &mut env, &waypoints, &q0, &gains(&a.gains), a.path.steps_per_waypoint)?;
    cmp.policy.save_csv(manifest.output(&dir.join("policy_tracking.csv")))?;
    cmp.jacobian.save_csv(manifest.output(&dir.join("jacobian_tracking.csv")))?;
    print_tracking("policy", &cmp.policy);
    print_tracking("jacobian", &cmp.jacobian);
    manifest.finish(&dir)
}

pub fn trace(a: TraceArgs) -> Result<()> {
    let cfg = EnvConfig::load(&a.config)?;
    let mut env = CtrEnv::new(cfg)?;
    let rows = record_trace(&mut env, a.seed, &scripted_actions(a.steps))?;
    match &a.output {
        Some(path) => save_trace(&rows, path)?,
        None => write_trace(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

pub fn shape(a: ShapeArgs) -> Result<()> {
    let sys = parse_system(&a.system)?;
    let q = parse_joints(&a.q)?;
    let tier = if a.compliant {
        KinematicsTier::TorsionallyCompliant
    } else {
        KinematicsTier::Rigid
    };
    let shape = forward_kinematics(&sys, &q, tier, a.samples_per_segment)?;
    shape.write_csv(std::io::stdout().lock())?;
    Ok(())
}
