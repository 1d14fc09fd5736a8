//! Path generation, the policy path-following controller and a damped
//! least-squares Jacobian baseline.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::env::CtrEnv;
use crate::error::{Error, Result};
use crate::jointspace::{project_extensions, sample_valid_joints, ActionVector, RotationMode};
use crate::kinematics::{jacobian, tip_position, JointConfig, KinematicsTier};
use crate::rl::Agent;
use crate::systems::CtrSystem;

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn closed() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathShape {
    Line {
        start: [f64; 3],
        end: [f64; 3],
    },
    Circle {
        center: [f64; 3],
        radius: f64,
        #[serde(default = "z_axis")]
        normal: [f64; 3],
    },
    /// Rises along `axis` by `pitch` per turn.
    Helix {
        center: [f64; 3],
        radius: f64,
        pitch: f64,
        turns: f64,
        #[serde(default = "z_axis")]
        axis: [f64; 3],
    },
    Polygon {
        vertices: Vec<[f64; 3]>,
        #[serde(default = "closed")]
        closed: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    #[serde(flatten)]
    pub shape: PathShape,
    pub num_points: usize,
}

impl PathSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| Error::Parse {
            path: path.into(),
            message,
        })
    }
}

/// Two unit vectors spanning the plane normal to `n`.
fn plane_basis(n: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let n = n.normalize();
    let seed = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = (seed - n * n.dot(&seed)).normalize();
    (u, n.cross(&u))
}

pub fn generate_path(spec: &PathSpec) -> Result<Vec<Vector3<f64>>> {
    let n = spec.num_points;
    if n < 2 {
        return Err(Error::InvalidSpec(format!("num_points must be at least 2, got {n}")));
    }
    let v = |a: &[f64; 3]| Vector3::from(*a);
    let unit = |a: &[f64; 3], what: &str| {
        let u = v(a);
        if u.norm() > 0.0 {
            Ok(u)
        } else {
            Err(Error::InvalidSpec(format!("{what} must be non-zero")))
        }
    };
    let points: Vec<Vector3<f64>> = match &spec.shape {
        PathShape::Line { start, end } => {
            let (a, b) = (v(start), v(end));
            (0..n).map(|k| a + (b - a) * (k as f64 / (n - 1) as f64)).collect()
        }
        PathShape::Circle { center, radius, normal } => {
            let (u, w) = plane_basis(unit(normal, "normal")?);
            let c = v(center);
            (0..n)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    c + (u * t.cos() + w * t.sin()) * *radius
                })
                .collect()
        }
        PathShape::Helix {
            center,
            radius,
            pitch,
            turns,
            axis,
        } => {
            let a = unit(axis, "axis")?.normalize();
            let (u, w) = plane_basis(a);
            let c = v(center);
            (0..n)
                .map(|k| {
                    let f = k as f64 / (n - 1) as f64;
                    let t = 2.0 * PI * turns * f;
                    c + (u * t.cos() + w * t.sin()) * *radius + a * (pitch * turns * f)
                })
                .collect()
        }
        PathShape::Polygon { vertices, closed } => {
            if vertices.len() < 2 {
                return Err(Error::InvalidSpec("polygon needs at least two vertices".into()));
            }
            let mut corners: Vec<Vector3<f64>> = vertices.iter().map(v).collect();
            if *closed {
                corners.push(corners[0]);
            }
            let lengths: Vec<f64> = corners.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
            let perimeter: f64 = lengths.iter().sum();
            if perimeter == 0.0 {
                return Err(Error::InvalidSpec("polygon has zero perimeter".into()));
            }
            let denom = if *closed { n } else { n - 1 } as f64;
            (0..n)
                .map(|k| {
                    let mut s = perimeter * k as f64 / denom;
                    for (i, len) in lengths.iter().enumerate() {
                        if s <= *len || i + 1 == lengths.len() {
                            let f = if *len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                            return corners[i] + (corners[i + 1] - corners[i]) * f;
                        }
                        s -= len;
                    }
                    unreachable!()
                })
                .collect()
        }
    };
    if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidSpec("path contains non-finite points".into()));
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointResult {
    pub index: usize,
    pub desired: Vector3<f64>,
    pub achieved: Vector3<f64>,
    /// True tip error after the waypoint's budget, mm.
    pub error: f64,
    pub steps: usize,
    /// A requested joint change was projected back onto the joint limits.
    pub saturated: bool,
    pub joints: JointConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingResult {
    pub waypoints: Vec<WaypointResult>,
}

#[derive(Debug, Serialize)]
struct TrackingRow {
    index: usize,
    desired_x: f64,
    desired_y: f64,
    desired_z: f64,
    achieved_x: f64,
    achieved_y: f64,
    achieved_z: f64,
    error: f64,
    steps: usize,
    saturated: bool,
}

impl TrackingResult {
    pub fn errors(&self) -> Vec<f64> {
        self.waypoints.iter().map(|w| w.error).collect()
    }

    pub fn mean_error(&self) -> f64 {
        crate::eval::mean_std(&self.errors()).0
    }

    pub fn std_error(&self) -> f64 {
        crate::eval::mean_std(&self.errors()).1
    }

    pub fn saturation_events(&self) -> usize {
        self.waypoints.iter().filter(|w| w.saturated).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.waypoints {
            wtr.serialize(TrackingRow {
                index: r.index,
                desired_x: r.desired.x,
                desired_y: r.desired.y,
                desired_z: r.desired.z,
                achieved_x: r.achieved.x,
                achieved_y: r.achieved.y,
                achieved_z: r.achieved.z,
                error: r.error,
                steps: r.steps,
                saturated: r.saturated,
            })?;
        }
        wtr.flush().map_err(|e| Error::io("<tracking csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Policy steps allowed per waypoint.
pub const POLICY_STEPS_PER_WAYPOINT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    pub actions: Vec<ActionVector>,
    pub tracking: TrackingResult,
}

/// Gives each waypoint to the agent as the desired goal and lets it act for
/// up to `steps_per_waypoint` steps, moving on early when the environment
/// reports the goal reached and moving on regardless when the budget runs
/// out. Joints carry over between waypoints. The environment's tolerance
/// is pinned to its final value.
pub fn policy_controller(
    agent: &mut dyn Agent,
    env: &mut CtrEnv,
    waypoints: &[Vector3<f64>],
    steps_per_waypoint: usize,
) -> Result<PolicyRun> {
    env.set_timestep(u64::MAX);
    env.set_advance_timestep(false);
    env.set_max_episode_steps(steps_per_waypoint);
    let mut actions = Vec::new();
    let mut tracking = TrackingResult::default();
    for (index, goal) in waypoints.iter().enumerate() {
        let mut state = env.set_goal(*goal);
        let mut steps = 0;
        let mut saturated = false;
        while steps < steps_per_waypoint {
            let a = agent.act(&state, env)?;
            let r = env.step(&a)?;
            actions.push(a);
            steps += 1;
            saturated |= r.info.clamped;
            state = r.state;
            if r.terminal {
                break;
            }
        }
        tracking.waypoints.push(WaypointResult {
            index,
            desired: *goal,
            achieved: env.achieved_goal(),
            error: env.error(),
            steps,
            saturated,
            joints: *env.joints(),
        });
    }
    Ok(PolicyRun { actions, tracking })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianGains {
    /// Diagonal of the proportional gain.
    pub kp: [f64; 3],
    /// Damping factor Λ.
    pub lambda: f64,
    /// Integration step.
    pub dt: f64,
    /// Iterations per waypoint.
    pub iterations: usize,
}

impl Default for JacobianGains {
    fn default() -> Self {
        Self {
            kp: [2.0; 3],
            lambda: 0.45,
            dt: 0.1,
            iterations: 50,
        }
    }
}

/// `(JᵀJ + Λ²I)⁻¹Jᵀ`.
pub fn dls_pseudoinverse(j: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let n = j.ncols();
    let a = j.transpose() * j + DMatrix::identity(n, n) * (lambda * lambda);
    let lu = a.lu();
    let inv = lu.try_inverse().ok_or(Error::SingularUpdate)?;
    if !inv.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularUpdate);
    }
    Ok(inv * j.transpose())
}

/// Joint update `dt·J†[ẋ_d + K_p(x_d − x)]`.
pub fn dls_step(
    j: &DMatrix<f64>,
    lambda: f64,
    dt: f64,
    kp: &[f64; 3],
    xd_dot: &Vector3<f64>,
    error: &Vector3<f64>,
) -> Result<DVector<f64>> {
    let v = DVector::from_iterator(3, (0..3).map(|i| xd_dot[i] + kp[i] * error[i]));
    Ok(dls_pseudoinverse(j, lambda)? * v * dt)
}

/// Damped least-squares tracking. The control law ignores joint limits;
/// extensions are projected back onto the feasible set after each update
/// and the projection is reported as saturation.
pub fn jacobian_controller(
    sys: &CtrSystem,
    waypoints: &[Vector3<f64>],
    q0: &JointConfig,
    gains: &JacobianGains,
    tier: KinematicsTier,
) -> Result<TrackingResult> {
    q0.check(sys)?;
    let mut q = *q0;
    let mut tracking = TrackingResult::default();
    let horizon = gains.iterations as f64 * gains.dt;
    for (index, goal) in waypoints.iter().enumerate() {
        let feedforward = match waypoints.get(index + 1) {
            Some(next) if horizon > 0.0 => (next - goal) / horizon,
            _ => Vector3::zeros(),
        };
        let mut saturated = false;
        for _ in 0..gains.iterations {
            let x = tip_position(sys, &q, tier)?;
            let j = jacobian(sys, &q, tier)?;
            let jd = DMatrix::from_column_slice(3, 6, j.as_slice());
            let dq = dls_step(&jd, gains.lambda, gains.dt, &gains.kp, &feedforward, &(goal - x))?;
            let requested = [0, 1, 2].map(|i| q.beta[i] + dq[i]);
            let (beta, clamped) = project_extensions(sys, requested);
            saturated |= clamped;
            q = JointConfig {
                beta,
                alpha: [0, 1, 2].map(|i| q.alpha[i] + dq[3 + i]),
            };
        }
        let achieved = tip_position(sys, &q, tier)?;
        tracking.waypoints.push(WaypointResult {
            index,
            desired: *goal,
            achieved,
            error: (achieved - goal).norm(),
            steps: gains.iterations,
            saturated,
            joints: q,
        });
    }
    Ok(tracking)
}

/// Of `samples` random feasible configurations, the one whose tip lies
/// closest to `target`. Gives path followers a start near the path.
pub fn nearest_start<R: rand::Rng + ?Sized>(
    sys: &CtrSystem,
    target: &Vector3<f64>,
    samples: usize,
    rng: &mut R,
    tier: KinematicsTier,
) -> Result<JointConfig> {
    let mut best = (f64::INFINITY, JointConfig::retracted(sys));
    for _ in 0..samples.max(1) {
        let q = sample_valid_joints(sys, rng, RotationMode::Constrained);
        let d = (tip_position(sys, &q, tier)? - target).norm();
        if d < best.0 {
            best = (d, q);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, EnvState};
    use crate::systems::reference_system;
    use approx::assert_relative_eq;

    fn spec(shape: PathShape, n: usize) -> PathSpec {
        PathSpec { shape, num_points: n }
    }

    #[test]
    fn line_is_uniform() {
        let p = generate_path(&spec(
            PathShape::Line {
                start: [0.0; 3],
                end: [0.0, 0.0, 10.0],
            },
            11,
        ))
        .unwrap();
        for (k, q) in p.iter().enumerate() {
            assert_relative_eq!(q.z, k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn circle_points_on_radius() {
        let c = Vector3::new(1.0, 2.0, 3.0);
        let p = generate_path(&spec(
            PathShape::Circle {
                center: [1.0, 2.0, 3.0],
                radius: 20.0,
                normal: [0.3, 0.1, 1.0],
            },
            36,
        ))
        .unwrap();
        for q in &p {
            assert_relative_eq!((q - c).norm(), 20.0, epsilon = 1e-12);
        }
        let step = (p[1] - p[0]).norm();
        assert_relative_eq!((p[0] - p[35]).norm(), step, epsilon = 1e-9);
    }

    #[test]
    fn helix_rises_monotonically() {
        let p = generate_path(&spec(
            PathShape::Helix {
                center: [0.0, 0.0, 100.0],
                radius: 10.0,
                pitch: 5.0,
                turns: 2.0,
                axis: z_axis(),
            },
            50,
        ))
        .unwrap();
        assert!(p.windows(2).all(|w| w[1].z > w[0].z));
        assert_relative_eq!(p[49].z - p[0].z, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn polygon_uniform_along_perimeter() {
        let p = generate_path(&spec(
            PathShape::Polygon {
                vertices: vec![[0.0; 3], [4.0, 0.0, 0.0], [4.0, 4.0, 0.0], [0.0, 4.0, 0.0]],
                closed: true,
            },
            8,
        ))
        .unwrap();
        assert_eq!(p.len(), 8);
        assert_relative_eq!(p[1].x, 2.0, epsilon = 1e-12);
        assert_relative_eq!(p[2].x, 4.0, epsilon = 1e-12);
        assert_relative_eq!(p[3].y, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let line = PathShape::Line {
            start: [0.0; 3],
            end: [1.0; 3],
        };
        assert!(matches!(generate_path(&spec(line, 1)), Err(Error::InvalidSpec(_))));
        let circle = PathShape::Circle {
            center: [0.0; 3],
            radius: 1.0,
            normal: [0.0; 3],
        };
        assert!(generate_path(&spec(circle, 4)).is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let s = PathSpec::from_toml_str(
            "shape = \"helix\"\ncenter = [0, 0, 100]\nradius = 10\npitch = 5\nturns = 2\nnum_points = 100\n",
        )
        .unwrap();
        assert_eq!(generate_path(&s).unwrap().len(), 100);
    }

    #[test]
    fn undamped_square_inverse() {
        let j = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.5, 3.0, 0.2, 0.0, 0.4, 1.5]);
        let pinv = dls_pseudoinverse(&j, 0.0).unwrap();
        let inv = j.clone().try_inverse().unwrap();
        assert!((pinv - inv).norm() < 1e-12);
    }

    #[test]
    fn undamped_wide_jacobian_is_singular() {
        let j = DMatrix::from_row_slice(3, 6, &[1.0; 18]);
        assert!(matches!(dls_pseudoinverse(&j, 0.0), Err(Error::SingularUpdate)));
        assert!(dls_pseudoinverse(&j, 1e-3).is_ok());
    }

    #[test]
    fn damping_shrinks_update_monotonically() {
        let sys = reference_system(0);
        let q = JointConfig::new([-120.0, -90.0, -40.0], [0.3, 1.2, -0.4]);
        let j = jacobian(&sys, &q, KinematicsTier::Rigid).unwrap();
        let jd = DMatrix::from_column_slice(3, 6, j.as_slice());
        let err = Vector3::new(1.0, -2.0, 0.5);
        let mut prev = f64::INFINITY;
        for lambda in [0.01, 0.1, 1.0, 10.0, 100.0, 1e4] {
            let n = dls_step(&jd, lambda, 0.1, &[2.0; 3], &Vector3::zeros(), &err).unwrap().norm();
            assert!(n < prev, "{lambda}: {n} >= {prev}");
            prev = n;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn jacobian_controller_reaches_nearby_points() {
        let sys = reference_system(0);
        let q0 = JointConfig::new([-200.0, -150.0, -60.0], [0.2, 1.0, -0.5]);
        let tip = tip_position(&sys, &q0, KinematicsTier::Rigid).unwrap();
        let path: Vec<_> = (0..5).map(|k| tip + Vector3::new(0.5 * k as f64, 0.0, 0.0)).collect();
        let r = jacobian_controller(&sys, &path, &q0, &JacobianGains::default(), KinematicsTier::Rigid).unwrap();
        assert_eq!(r.waypoints.len(), 5);
        assert!(r.mean_error() < 0.5, "{}", r.mean_error());
        for w in &r.waypoints {
            assert!(w.joints.is_feasible(&sys));
        }
    }

    /// Moves the joints straight to the generating configuration.
    struct Teleport(JointConfig);

    impl Agent for Teleport {
        fn act(&mut self, _state: &EnvState, env: &CtrEnv) -> Result<ActionVector> {
            let q = env.joints();
            Ok(ActionVector {
                delta_beta: [0, 1, 2].map(|i| self.0.beta[i] - q.beta[i]),
                delta_alpha: [0, 1, 2].map(|i| self.0.alpha[i] - q.alpha[i]),
            })
        }
    }

    struct Idle;

    impl Agent for Idle {
        fn act(&mut self, _state: &EnvState, _env: &CtrEnv) -> Result<ActionVector> {
            Ok(ActionVector::zero())
        }
    }

    #[test]
    fn nearest_start_beats_random_sample() {
        use rand::SeedableRng;
        let sys = reference_system(0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let known = sample_valid_joints(&sys, &mut rng, RotationMode::Constrained);
        let target = tip_position(&sys, &known, KinematicsTier::Rigid).unwrap();
        let dist = |q: &JointConfig| (tip_position(&sys, q, KinematicsTier::Rigid).unwrap() - target).norm();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let q = nearest_start(&sys, &target, 2000, &mut rng, KinematicsTier::Rigid).unwrap();
        assert!(q.is_feasible(&sys));

        // replaying the same stream: the result is the closest draw, well below a typical draw
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<f64> = (0..2000)
            .map(|_| dist(&sample_valid_joints(&sys, &mut rng, RotationMode::Constrained)))
            .collect();
        let best = draws.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert_eq!(dist(&q), best);
        assert!(best < mean / 5.0, "best {best} mean {mean}");
    }

    #[test]
    fn waypoint_at_tip_uses_one_step() {
        let mut env = CtrEnv::new(EnvConfig::single(3)).unwrap();
        env.reset().unwrap();
        let tip = env.achieved_goal();
        let run = policy_controller(&mut Idle, &mut env, &[tip, tip, tip], 20).unwrap();
        assert!(run.tracking.waypoints.iter().all(|w| w.steps == 1 && w.error == 0.0));
        assert_eq!(run.actions.len(), 3);
    }

    #[test]
    fn unreachable_waypoints_use_full_budget() {
        let mut env = CtrEnv::new(EnvConfig::single(3)).unwrap();
        env.reset().unwrap();
        let start_error = {
            let far = env.achieved_goal() + Vector3::new(50.0, 0.0, 0.0);
            (env.achieved_goal() - far).norm()
        };
        let far = env.achieved_goal() + Vector3::new(50.0, 0.0, 0.0);
        let run = policy_controller(&mut Idle, &mut env, &[far, far], 20).unwrap();
        for w in &run.tracking.waypoints {
            assert_eq!(w.steps, 20);
            assert_relative_eq!(w.error, start_error, epsilon = 1e-12);
        }
    }

    #[test]
    fn small_moves_are_tracked_by_joint_agent() {
        let mut env = CtrEnv::new(EnvConfig::single(3)).unwrap();
        env.reset().unwrap();
        let goal_q = *env.joints();
        let mut shifted = goal_q;
        shifted.beta[0] -= 0.5;
        let goal_tip = tip_position(env.system(), &goal_q, KinematicsTier::Rigid).unwrap();
        env.set_joints(shifted).unwrap();
        let run = policy_controller(&mut Teleport(goal_q), &mut env, &[goal_tip], 20).unwrap();
        assert!(run.tracking.waypoints[0].error < 1e-9);
    }
}
