//! `ctr`: train, evaluate and path-follow with concentric tube robot
//! policies.

mod commands;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ctr", version, about = "Concentric tube robot kinematics and reinforcement learning workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a DDPG+HER policy from an experiment config.
    Train(TrainArgs),
    /// Run inverse-kinematics evaluation episodes with a trained policy.
    Evaluate(EvaluateArgs),
    /// Track a generated path with a policy or the Jacobian controller.
    FollowPath(FollowArgs),
    /// Track one path with both the policy and the Jacobian controller.
    CompareJacobian(CompareArgs),
    /// Split an evaluation CSV into workspace and rotation error files.
    ExportWorkspace(ExportArgs),
    /// Render a CSV produced by another subcommand to a PNG.
    Plot(PlotArgs),
    /// Record a scripted episode for cross-checking other front ends.
    Trace(TraceArgs),
    /// Print the backbone of one configuration as CSV.
    Shape(ShapeArgs),
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory. Defaults to `$CTR_OUT_ROOT/<subcommand>`, with
    /// `runs` as the root when the variable is unset.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Experiment config (TOML) with `[env]` and `[train]` tables.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    out: OutArgs,
    #[arg(long)]
    timesteps: Option<u64>,
    /// Length of the goal-tolerance schedule in timesteps.
    #[arg(long)]
    curriculum_steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PolicyEnvArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Add sensor noise (1° encoders, 0.8 mm tip tracking) to observations.
    #[arg(long)]
    noise: bool,
    /// Keep the checkpoint's domain randomization instead of the nominal
    /// systems.
    #[arg(long)]
    randomized: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    policy: PolicyEnvArgs,
    #[command(flatten)]
    out: OutArgs,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    /// Steps per episode; the training episode length when omitted.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Evaluate only on this entry of the checkpoint's system list.
    #[arg(long)]
    system: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ControllerKind {
    Policy,
    Jacobian,
}

#[derive(Debug, Args)]
struct GainArgs {
    /// Proportional gain (applied to all three axes).
    #[arg(long, default_value_t = 2.0)]
    kp: f64,
    /// Damping factor.
    #[arg(long, default_value_t = 0.45)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Jacobian iterations per waypoint.
    #[arg(long, default_value_t = 50)]
    iterations: usize,
}

#[derive(Debug, Args)]
struct PathArgs {
    /// Path spec file (TOML or JSON).
    #[arg(long)]
    path: PathBuf,
    /// Start joints `b1,b2,b3,a1,a2,a3` (mm, degrees). Defaults to the
    /// sampled configuration whose tip is nearest the first waypoint.
    #[arg(long, allow_hyphen_values = true)]
    q0: Option<String>,
    /// Policy steps per waypoint.
    #[arg(long, default_value_t = 20)]
    steps_per_waypoint: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FollowArgs {
    /// Required for the policy controller.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// With a checkpoint, an index into its system list. Without one, a
    /// reference system id or a system TOML file.
    #[arg(long, default_value = "0")]
    system: String,
    #[arg(long, value_enum, default_value_t = ControllerKind::Policy)]
    controller: ControllerKind,
    /// Add sensor noise to policy observations.
    #[arg(long)]
    noise: bool,
    #[command(flatten)]
    path: PathArgs,
    #[command(flatten)]
    gains: GainArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Index into the checkpoint's system list.
    #[arg(long, default_value_t = 0)]
    system: usize,
    #[command(flatten)]
    path: PathArgs,
    #[command(flatten)]
    gains: GainArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Per-episode CSV written by `evaluate`.
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, value_enum)]
    kind: plot::PlotKind,
    /// Output PNG.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 800)]
    size: u32,
}

#[derive(Debug, Args)]
struct TraceArgs {
    /// Environment config (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ShapeArgs {
    /// Reference system id or a system TOML file.
    #[arg(long, default_value = "0")]
    system: String,
    /// Joints `b1,b2,b3,a1,a2,a3` (mm, degrees).
    #[arg(long, allow_hyphen_values = true)]
    q: String,
    /// Use the torsionally compliant model.
    #[arg(long)]
    compliant: bool,
    #[arg(long, default_value_t = 10)]
    samples_per_segment: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::FollowPath(a) => commands::follow_path(a),
        Command::CompareJacobian(a) => commands::compare_jacobian(a),
        Command::ExportWorkspace(a) => commands::export_workspace(a),
        Command::Plot(a) => plot::run(&a.csv, a.kind, &a.output, a.size),
        Command::Trace(a) => commands::trace(a),
        Command::Shape(a) => commands::shape(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
