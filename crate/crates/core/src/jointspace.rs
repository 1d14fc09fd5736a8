//! Joint representations, rotation modes, action application and joint
//! sampling.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kinematics::JointConfig;
use crate::systems::CtrSystem;

/// Largest extension change per step, mm.
pub const MAX_EXTENSION_STEP: f64 = 1.0;
/// Largest rotation change per step, rad (5°).
pub const MAX_ROTATION_STEP: f64 = 5.0 * PI / 180.0;

/// `(cos α_i, sin α_i, β_i)` per tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigJointRep {
    pub gamma: [[f64; 3]; 3],
}

impl TrigJointRep {
    pub fn flatten(&self) -> [f64; 9] {
        let g = &self.gamma;
        [
            g[0][0], g[0][1], g[0][2], g[1][0], g[1][1], g[1][2], g[2][0], g[2][1], g[2][2],
        ]
    }

    pub fn beta(&self) -> [f64; 3] {
        [self.gamma[0][2], self.gamma[1][2], self.gamma[2][2]]
    }
}

/// No rotation bounds are applied; the encoding is defined for any angle.
pub fn to_trig(q: &JointConfig) -> TrigJointRep {
    TrigJointRep {
        gamma: [0, 1, 2].map(|i| {
            let (s, c) = q.alpha[i].sin_cos();
            [c, s, q.beta[i]]
        }),
    }
}

/// Rotations in `(-π, π]` via `atan2`.
pub fn rotation_from_trig(rep: &TrigJointRep) -> [f64; 3] {
    rep.gamma.map(|g| g[1].atan2(g[0]))
}

pub fn from_trig(rep: &TrigJointRep) -> JointConfig {
    JointConfig {
        alpha: rotation_from_trig(rep),
        beta: rep.beta(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// Rotations clipped to `[-π, π]`.
    Constrained,
    /// Rotations unbounded.
    #[default]
    ConstraintFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointFrame {
    /// Every joint referenced to the base.
    Proprioceptive,
    /// Each tube referenced to the next inner tube.
    #[default]
    Egocentric,
}

fn difference(v: [f64; 3]) -> [f64; 3] {
    [v[0], v[1] - v[0], v[2] - v[1]]
}

fn cumulative(v: [f64; 3]) -> [f64; 3] {
    [v[0], v[0] + v[1], v[0] + v[1] + v[2]]
}

/// Adjacent differences of both rotations and extensions. Angles are not
/// wrapped.
pub fn to_egocentric(alpha: [f64; 3], beta: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    (difference(alpha), difference(beta))
}

pub fn to_proprioceptive(alpha_ego: [f64; 3], beta_ego: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    (cumulative(alpha_ego), cumulative(beta_ego))
}

impl JointFrame {
    /// Joint values as seen in this frame.
    pub fn express(self, q: &JointConfig) -> JointConfig {
        match self {
            JointFrame::Proprioceptive => *q,
            JointFrame::Egocentric => {
                let (alpha, beta) = to_egocentric(q.alpha, q.beta);
                JointConfig { alpha, beta }
            }
        }
    }
}

/// `(Δβ₁, Δβ₂, Δβ₃, Δα₁, Δα₂, Δα₃)` in mm and rad, applied to the actuator
/// (proprioceptive) joints.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionVector {
    pub delta_beta: [f64; 3],
    pub delta_alpha: [f64; 3],
}

impl ActionVector {
    pub const DIM: usize = 6;

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn limits() -> [f64; 6] {
        [
            MAX_EXTENSION_STEP,
            MAX_EXTENSION_STEP,
            MAX_EXTENSION_STEP,
            MAX_ROTATION_STEP,
            MAX_ROTATION_STEP,
            MAX_ROTATION_STEP,
        ]
    }

    pub fn to_array(&self) -> [f64; 6] {
        let (b, a) = (self.delta_beta, self.delta_alpha);
        [b[0], b[1], b[2], a[0], a[1], a[2]]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            delta_beta: [v[0], v[1], v[2]],
            delta_alpha: [v[3], v[4], v[5]],
        }
    }

    /// Scales a vector in `[-1, 1]⁶` to physical limits.
    pub fn from_normalized(v: &[f64]) -> Self {
        let lim = Self::limits();
        let mut out = [0.0; 6];
        for i in 0..6 {
            out[i] = v[i].clamp(-1.0, 1.0) * lim[i];
        }
        Self::from_array(out)
    }

    pub fn to_normalized(&self) -> [f64; 6] {
        let lim = Self::limits();
        let v = self.to_array();
        [0, 1, 2, 3, 4, 5].map(|i| v[i] / lim[i])
    }

    pub fn clipped(&self) -> Self {
        let lim = Self::limits();
        let v = self.to_array();
        Self::from_array([0, 1, 2, 3, 4, 5].map(|i| v[i].clamp(-lim[i], lim[i])))
    }

    pub fn within_limits(&self) -> bool {
        let lim = Self::limits();
        self.to_array()
            .iter()
            .zip(lim)
            .all(|(v, l)| v.abs() <= l + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionOutcome {
    pub joints: JointConfig,
    /// The requested action exceeded the per-step limits.
    pub action_clipped: bool,
    /// Extensions were projected onto the feasible set, or a rotation hit
    /// `±π` in constrained mode.
    pub clamped: bool,
}

/// Projects extensions onto the feasible set by clamping each tube in turn,
/// innermost first, against the bounds implied by the previous one.
pub fn project_extensions(sys: &CtrSystem, beta: [f64; 3]) -> ([f64; 3], bool) {
    let l = sys.lengths();
    let mut out = beta;
    out[0] = out[0].clamp(-l[0], 0.0);
    for i in 1..3 {
        let lo = out[i - 1].max(-l[i]);
        let hi = (out[i - 1] + l[i - 1] - l[i]).min(0.0);
        out[i] = out[i].clamp(lo, hi);
    }
    let changed = out.iter().zip(beta).any(|(a, b)| (a - b).abs() > 1e-12);
    (out, changed)
}

pub fn apply_action(q: &JointConfig, a: &ActionVector, mode: RotationMode, sys: &CtrSystem) -> ActionOutcome {
    let clipped = a.clipped();
    let action_clipped = clipped != *a;
    let requested = [0, 1, 2].map(|i| q.beta[i] + clipped.delta_beta[i]);
    let (beta, mut clamped) = project_extensions(sys, requested);
    let mut alpha = [0, 1, 2].map(|i| q.alpha[i] + clipped.delta_alpha[i]);
    if mode == RotationMode::Constrained {
        for v in alpha.iter_mut() {
            let c = v.clamp(-PI, PI);
            if c != *v {
                clamped = true;
                *v = c;
            }
        }
    }
    ActionOutcome {
        joints: JointConfig { alpha, beta },
        action_clipped,
        clamped,
    }
}

/// Extensions drawn tube by tube from the interval left feasible by the
/// previous draw; rotations uniform in `[-π, π]`.
pub fn sample_valid_joints<R: Rng + ?Sized>(sys: &CtrSystem, rng: &mut R, _mode: RotationMode) -> JointConfig {
    let l = sys.lengths();
    let mut beta = [0.0; 3];
    beta[0] = rng.random_range(-l[0]..=0.0);
    for i in 1..3 {
        let lo = beta[i - 1].max(-l[i]);
        let hi = (beta[i - 1] + l[i - 1] - l[i]).min(0.0);
        beta[i] = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    }
    let alpha = [0, 1, 2].map(|_| rng.random_range(-PI..=PI));
    JointConfig { alpha, beta }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}
