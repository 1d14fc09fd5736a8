//! Unloaded concentric-tube kinematics.
//!
//! The backbone is parameterized by arc length `s` measured from the front
//! plate. Tube `i` is exposed on `[0, L_i + β_i]` and its precurved section
//! occupies the distal `length_curved` of that span. On every segment the
//! backbone bends with the stiffness-weighted average of the tubes'
//! precurvature vectors, each rotated by the tube's current twist angle.
//!
//! Two tiers are provided. [`KinematicsTier::Rigid`] treats the tubes as
//! torsionally rigid, so every segment is an exact constant-curvature arc.
//! [`KinematicsTier::TorsionallyCompliant`] solves the twist boundary value
//! problem by shooting and integrates the backbone with RK4.
//!
//! Curvature vectors are "bending direction" vectors in the cross-section
//! plane: a single tube at zero rotation bends toward `+x`.

mod compliant;
mod rigid;

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x6, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{bending_stiffness, CtrSystem};

pub use compliant::ShootingOptions;

/// Feasibility slack for the extension constraints, mm.
pub const JOINT_TOLERANCE: f64 = 1e-9;

/// Boundaries closer than this are merged, mm.
const BOUNDARY_MERGE: f64 = 1e-9;

/// Actuator rotations (radians) and extensions (millimeters, `β ≤ 0`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointConfig {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
}

impl JointConfig {
    pub fn new(beta: [f64; 3], alpha: [f64; 3]) -> Self {
        Self { alpha, beta }
    }

    /// Fully extended, unrotated.
    pub fn home() -> Self {
        Self::default()
    }

    /// Fully retracted.
    pub fn retracted(sys: &CtrSystem) -> Self {
        let l = sys.lengths();
        Self {
            alpha: [0.0; 3],
            beta: [-l[0], -l[1], -l[2]],
        }
    }

    /// Exposed length `L_i + β_i` of each tube.
    pub fn exposed_lengths(&self, sys: &CtrSystem) -> [f64; 3] {
        let l = sys.lengths();
        [l[0] + self.beta[0], l[1] + self.beta[1], l[2] + self.beta[2]]
    }

    /// Checks `0 ≥ β₃ ≥ β₂ ≥ β₁` and `0 ≤ L₃+β₃ ≤ L₂+β₂ ≤ L₁+β₁`.
    pub fn check(&self, sys: &CtrSystem) -> Result<()> {
        let b = self.beta;
        let e = self.exposed_lengths(sys);
        let tol = JOINT_TOLERANCE;
        if !(b.iter().chain(self.alpha.iter()).all(|v| v.is_finite())) {
            return Err(Error::InvalidJoints("non-finite joint value".into()));
        }
        if !(b[2] <= tol && b[1] <= b[2] + tol && b[0] <= b[1] + tol) {
            return Err(Error::InvalidJoints(format!(
                "extensions must satisfy 0 >= b3 >= b2 >= b1, got {b:?}"
            )));
        }
        if !(e[2] >= -tol && e[2] <= e[1] + tol && e[1] <= e[0] + tol) {
            return Err(Error::InvalidJoints(format!(
                "exposed lengths must satisfy 0 <= L3+b3 <= L2+b2 <= L1+b1, got {e:?}"
            )));
        }
        Ok(())
    }

    pub fn is_feasible(&self, sys: &CtrSystem) -> bool {
        self.check(sys).is_ok()
    }

    /// Feasible interval of `β_i` with the other two extensions held fixed.
    pub fn beta_range(&self, sys: &CtrSystem, i: usize) -> (f64, f64) {
        let l = sys.lengths();
        let b = self.beta;
        let mut lo = -l[i];
        let mut hi: f64 = 0.0;
        if i > 0 {
            // β_i ≥ β_{i-1}, L_i + β_i ≤ L_{i-1} + β_{i-1}
            lo = lo.max(b[i - 1]);
            hi = hi.min(b[i - 1] + l[i - 1] - l[i]);
        }
        if i < 2 {
            // β_{i+1} ≥ β_i, L_{i+1} + β_{i+1} ≤ L_i + β_i
            hi = hi.min(b[i + 1]);
            lo = lo.max(b[i + 1] + l[i + 1] - l[i]);
        }
        (lo, hi)
    }

    pub fn to_array(&self) -> [f64; 6] {
        let (a, b) = (self.alpha, self.beta);
        [b[0], b[1], b[2], a[0], a[1], a[2]]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            beta: [v[0], v[1], v[2]],
            alpha: [v[3], v[4], v[5]],
        }
    }
}

/// A maximal arc-length interval over which the same tubes are present and
/// the same precurved sections are active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub s_start: f64,
    pub s_end: f64,
    pub present: [bool; 3],
    pub curved: [bool; 3],
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.s_end - self.s_start
    }
}

/// Splits the exposed backbone into segments. Boundaries are the sorted,
/// de-duplicated set of `0`, the start of each tube's curved section and the
/// end of each tube, over tubes with positive exposed length.
pub fn segment_tubes(sys: &CtrSystem, q: &JointConfig) -> Result<Vec<Segment>> {
    q.check(sys)?;
    let ends = q.exposed_lengths(sys).map(|e| e.max(0.0));
    let mut bounds = vec![0.0];
    for i in 0..3 {
        if ends[i] > BOUNDARY_MERGE {
            bounds.push((ends[i] - sys.tubes[i].length_curved).max(0.0));
            bounds.push(ends[i]);
        }
    }
    bounds.sort_by(|a, b| a.total_cmp(b));
    bounds.dedup_by(|a, b| (*a - *b).abs() <= BOUNDARY_MERGE);

    let mut out = Vec::with_capacity(bounds.len().saturating_sub(1));
    for w in bounds.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let mid = 0.5 * (s0 + s1);
        let mut seg = Segment {
            s_start: s0,
            s_end: s1,
            present: [false; 3],
            curved: [false; 3],
        };
        for i in 0..3 {
            if ends[i] > BOUNDARY_MERGE && mid < ends[i] {
                seg.present[i] = true;
                seg.curved[i] = mid > ends[i] - sys.tubes[i].length_curved;
            }
        }
        out.push(seg);
    }
    Ok(out)
}

/// Per-tube constants in crate units.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TubeConstants {
    pub bending: [f64; 3],
    pub torsion: [f64; 3],
    pub kappa: [f64; 3],
}

impl TubeConstants {
    pub fn new(sys: &CtrSystem) -> Self {
        let t = &sys.tubes;
        Self {
            bending: [0, 1, 2].map(|i| bending_stiffness(&t[i])),
            torsion: [0, 1, 2].map(|i| t[i].torsional_stiffness()),
            kappa: [0, 1, 2].map(|i| t[i].precurvature_per_mm()),
        }
    }

    /// Stiffness-weighted resultant curvature on a segment, mm⁻¹.
    pub fn resultant(&self, seg: &Segment, theta: &[f64; 3]) -> [f64; 2] {
        let mut num = [0.0; 2];
        let mut den = 0.0;
        for i in 0..3 {
            if !seg.present[i] {
                continue;
            }
            den += self.bending[i];
            if seg.curved[i] {
                let (s, c) = theta[i].sin_cos();
                num[0] += self.bending[i] * self.kappa[i] * c;
                num[1] += self.bending[i] * self.kappa[i] * s;
            }
        }
        if den > 0.0 {
            [num[0] / den, num[1] / den]
        } else {
            [0.0, 0.0]
        }
    }
}

/// `u = Σ K_i Rz(θ_i) (κ̂_i, 0)ᵀ / Σ K_i` over the tubes present on `segment`;
/// straight sections add stiffness but no curvature.
pub fn resultant_curvature(sys: &CtrSystem, segment: &Segment, theta: &[f64; 3]) -> [f64; 2] {
    TubeConstants::new(sys).resultant(segment, theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KinematicsTier {
    #[default]
    Rigid,
    TorsionallyCompliant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackbonePoint {
    pub s: f64,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneShape {
    pub points: Vec<BackbonePoint>,
    pub tip: Vector3<f64>,
}

impl BackboneShape {
    /// Total arc length covered by the samples.
    pub fn arc_length(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.s)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["s", "x", "y", "z"])?;
        for p in &self.points {
            wtr.serialize((p.s, p.position.x, p.position.y, p.position.z))?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

pub const DEFAULT_SAMPLES_PER_SEGMENT: usize = 10;

/// Backbone shape with `samples_per_segment` samples on every segment.
pub fn forward_kinematics(
    sys: &CtrSystem,
    q: &JointConfig,
    tier: KinematicsTier,
    samples_per_segment: usize,
) -> Result<BackboneShape> {
    let segments = segment_tubes(sys, q)?;
    let consts = TubeConstants::new(sys);
    let samples = samples_per_segment.max(1);
    match tier {
        KinematicsTier::Rigid => Ok(rigid::shape(&consts, &segments, q, samples)),
        KinematicsTier::TorsionallyCompliant => {
            compliant::shape(&consts, &segments, q, Some(samples), &ShootingOptions::default())
        }
    }
}

/// Tip position only; skips backbone sampling.
pub fn tip_position(sys: &CtrSystem, q: &JointConfig, tier: KinematicsTier) -> Result<Vector3<f64>> {
    let segments = segment_tubes(sys, q)?;
    let consts = TubeConstants::new(sys);
    match tier {
        KinematicsTier::Rigid => Ok(rigid::tip(&consts, &segments, q)),
        KinematicsTier::TorsionallyCompliant => {
            compliant::shape(&consts, &segments, q, None, &ShootingOptions::default()).map(|s| s.tip)
        }
    }
}

/// Compliant-tier tip with explicit solver settings.
pub fn compliant_tip(sys: &CtrSystem, q: &JointConfig, opts: &ShootingOptions) -> Result<Vector3<f64>> {
    let segments = segment_tubes(sys, q)?;
    compliant::shape(&TubeConstants::new(sys), &segments, q, None, opts).map(|s| s.tip)
}

/// Default finite-difference step, mm for extensions and rad for rotations.
pub const JACOBIAN_STEP: f64 = 1e-3;

/// ∂tip/∂(β₁, β₂, β₃, α₁, α₂, α₃) by central differences.
pub fn jacobian(sys: &CtrSystem, q: &JointConfig, tier: KinematicsTier) -> Result<Matrix3x6<f64>> {
    jacobian_with_step(sys, q, tier, JACOBIAN_STEP)
}

/// Extension steps are clamped into the feasible interval of each joint, so
/// differences become one-sided at a constraint boundary.
pub fn jacobian_with_step(
    sys: &CtrSystem,
    q: &JointConfig,
    tier: KinematicsTier,
    step: f64,
) -> Result<Matrix3x6<f64>> {
    q.check(sys)?;
    let mut jac = Matrix3x6::zeros();
    for j in 0..6 {
        let (h_minus, h_plus) = if j < 3 {
            let (lo, hi) = q.beta_range(sys, j);
            let b = q.beta[j];
            (step.min((b - lo).max(0.0)), step.min((hi - b).max(0.0)))
        } else {
            (step, step)
        };
        if h_minus + h_plus <= 0.0 {
            continue;
        }
        let mut plus = q.to_array();
        let mut minus = q.to_array();
        plus[j] += h_plus;
        minus[j] -= h_minus;
        let tp = tip_position(sys, &JointConfig::from_array(plus), tier)?;
        let tm = tip_position(sys, &JointConfig::from_array(minus), tier)?;
        jac.set_column(j, &((tp - tm) / (h_plus + h_minus)));
    }
    Ok(jac)
}

/// Rotation by `angle` about unit `axis`.
pub(crate) fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let k = skew(axis);
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Frame angular rate for a bending-direction curvature `u`.
pub(crate) fn bending_rate(u: [f64; 2]) -> Vector3<f64> {
    Vector3::new(-u[1], u[0], 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::reference_system;
    use approx::assert_relative_eq;

    fn sys3() -> CtrSystem {
        reference_system(3)
    }

    #[test]
    fn system3_segment_boundaries() {
        let q = JointConfig::new([-50.0, -40.0, -30.0], [0.0; 3]);
        let segs = segment_tubes(&sys3(), &q).unwrap();
        let mut b: Vec<f64> = segs.iter().map(|s| s.s_start).collect();
        b.push(segs.last().unwrap().s_end);
        let expected = [0.0, 31.2, 38.4, 40.0, 60.0, 100.0];
        assert_eq!(b.len(), expected.len());
        for (x, e) in b.iter().zip(expected) {
            assert_relative_eq!(*x, e, epsilon = 1e-9);
        }
        // [38.4, 40]: all three present, all curved
        assert_eq!(segs[2].present, [true; 3]);
        assert_eq!(segs[2].curved, [true; 3]);
        // [0, 31.2]: all present, only the inner tube curved (its curved span is the full 100 mm)
        assert_eq!(segs[0].curved, [true, false, false]);
        // [60, 100]: inner tube alone
        assert_eq!(segs[4].present, [true, false, false]);
    }

    #[test]
    fn fully_retracted_has_no_segments() {
        let q = JointConfig::retracted(&sys3());
        assert!(segment_tubes(&sys3(), &q).unwrap().is_empty());
        let tip = tip_position(&sys3(), &q, KinematicsTier::Rigid).unwrap();
        assert_eq!(tip, Vector3::zeros());
        let tip = tip_position(&sys3(), &q, KinematicsTier::TorsionallyCompliant).unwrap();
        assert_eq!(tip, Vector3::zeros());
    }

    #[test]
    fn single_tube_extended() {
        // outer tubes fully retracted leave at most L1 - L2 of the inner tube exposed
        let mut sys = sys3();
        sys.tubes[0].length_curved = 20.0;
        let q = JointConfig::new([-120.0, -100.0, -70.0], [0.0; 3]);
        let segs = segment_tubes(&sys, &q).unwrap();
        assert_eq!(segs.len(), 2);
        assert_relative_eq!(segs[0].s_end, 10.0, epsilon = 1e-12);
        assert_relative_eq!(segs[1].s_end, 30.0, epsilon = 1e-12);
        assert_eq!(segs[0].curved, [false; 3]);
        assert_eq!(segs[1].curved, [true, false, false]);
        assert!(segs.iter().all(|s| s.present == [true, false, false]));
    }

    #[test]
    fn infeasible_joints_rejected() {
        let sys = sys3();
        for q in [
            JointConfig::new([-10.0, -20.0, -30.0], [0.0; 3]),
            JointConfig::new([-10.0, -5.0, 1.0], [0.0; 3]),
            // L2+b2 = 95 > L1+b1 = 90
            JointConfig::new([-60.0, -5.0, -5.0], [0.0; 3]),
        ] {
            assert!(matches!(segment_tubes(&sys, &q), Err(Error::InvalidJoints(_))));
            assert!(jacobian(&sys, &q, KinematicsTier::Rigid).is_err());
        }
    }

    #[test]
    fn resultant_single_and_opposed() {
        let sys = sys3();
        let seg = Segment {
            s_start: 0.0,
            s_end: 1.0,
            present: [true, false, false],
            curved: [true, false, false],
        };
        let u = resultant_curvature(&sys, &seg, &[0.0; 3]);
        assert_relative_eq!(u[0], sys.tubes[0].precurvature_per_mm(), epsilon = 1e-15);
        assert_eq!(u[1], 0.0);

        let mut twin = sys.clone();
        twin.tubes[1] = twin.tubes[0];
        let seg = Segment {
            present: [true, true, false],
            curved: [true, true, false],
            ..seg
        };
        let u = resultant_curvature(&twin, &seg, &[0.0, std::f64::consts::PI, 0.0]);
        assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
    }

    #[test]
    fn resultant_three_tubes_hand_evaluated() {
        // System 0, all curved, θ = (0, π/2, π); values from an independent
        // evaluation of the weighted sum (K in N·mm², κ in mm⁻¹):
        //   K = (6158.503, 223807.061, 143007.308), κ = (0.0213, 0.0131, 0.0035)
        //   ux = (K1κ1 − K3κ3)/ΣK, uy = K2κ2/ΣK
        let seg = Segment {
            s_start: 0.0,
            s_end: 1.0,
            present: [true; 3],
            curved: [true; 3],
        };
        let pi = std::f64::consts::PI;
        let u = resultant_curvature(&reference_system(0), &seg, &[0.0, pi / 2.0, pi]);
        assert_relative_eq!(u[0], -0.0009902850446722952, max_relative = 1e-12);
        assert_relative_eq!(u[1], 0.007860819681344791, max_relative = 1e-12);
    }

    #[test]
    fn straight_tubes_give_axial_tip() {
        let mut sys = sys3();
        for t in sys.tubes.iter_mut() {
            t.precurvature = 0.0;
        }
        let q = JointConfig::new([-40.0, -35.0, -20.0], [0.3, -2.0, 5.0]);
        for tier in [KinematicsTier::Rigid, KinematicsTier::TorsionallyCompliant] {
            let tip = tip_position(&sys, &q, tier).unwrap();
            assert_relative_eq!(tip, Vector3::new(0.0, 0.0, 110.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn single_arc_closed_form() {
        let sys = sys3();
        let kappa = sys.tubes[0].precurvature_per_mm();
        // inner tube alone with its whole exposed length curved
        let q = JointConfig::new([-110.0, -100.0, -70.0], [0.0; 3]);
        let l = 40.0;
        let tip = tip_position(&sys, &q, KinematicsTier::Rigid).unwrap();
        let expected = Vector3::new((1.0 - (kappa * l).cos()) / kappa, 0.0, (kappa * l).sin() / kappa);
        assert_relative_eq!(tip, expected, epsilon = 1e-9);
    }

    #[test]
    fn shape_endpoints_and_arc_length() {
        let sys = reference_system(0);
        let q = JointConfig::new([-100.0, -80.0, -20.0], [0.4, 1.0, -2.0]);
        for tier in [KinematicsTier::Rigid, KinematicsTier::TorsionallyCompliant] {
            let shape = forward_kinematics(&sys, &q, tier, 10).unwrap();
            assert_eq!(shape.points[0].position, Vector3::zeros());
            assert_eq!(shape.points.last().unwrap().position, shape.tip);
            assert_relative_eq!(shape.arc_length(), 331.0, epsilon = 1e-9);
            let tip = tip_position(&sys, &q, tier).unwrap();
            assert_relative_eq!(tip, shape.tip, epsilon = 1e-9);
            // chord sum of a fine sampling approaches the arc length from below
            let chord: f64 = shape
                .points
                .windows(2)
                .map(|w| (w[1].position - w[0].position).norm())
                .sum();
            assert!(chord <= 331.0 + 1e-9 && chord > 330.0, "{chord}");
        }
    }

    #[test]
    fn rotation_periodicity() {
        let sys = reference_system(1);
        let q = JointConfig::new([-60.0, -50.0, -20.0], [0.2, 1.1, -0.7]);
        let two_pi = std::f64::consts::TAU;
        for tier in [KinematicsTier::Rigid, KinematicsTier::TorsionallyCompliant] {
            let base = tip_position(&sys, &q, tier).unwrap();
            for i in 0..3 {
                let mut shifted = q;
                shifted.alpha[i] += two_pi;
                let t = tip_position(&sys, &shifted, tier).unwrap();
                assert_relative_eq!(t, base, epsilon = 1e-8);
            }
            let mut all = q;
            all.alpha = all.alpha.map(|a| a + two_pi);
            let ja = jacobian(&sys, &q, tier).unwrap();
            let jb = jacobian(&sys, &all, tier).unwrap();
            assert_relative_eq!(ja, jb, epsilon = 1e-5);
        }
    }

    #[test]
    fn straight_jacobian_columns() {
        let mut sys = sys3();
        for t in sys.tubes.iter_mut() {
            t.precurvature = 0.0;
        }
        // inner tube alone sets the length
        let q = JointConfig::new([-40.0, -35.0, -20.0], [0.3, -2.0, 5.0]);
        let j = jacobian(&sys, &q, KinematicsTier::Rigid).unwrap();
        assert_relative_eq!(j.column(0).into_owned(), Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-9);
        for c in 1..6 {
            assert!(j.column(c).norm() < 1e-9, "column {c}");
        }
    }

    #[test]
    fn jacobian_clamps_at_boundaries() {
        let sys = sys3();
        // β₃ = 0 sits on its upper bound; column must still be finite and one-sided
        let q = JointConfig::new([-50.0, -20.0, 0.0], [0.1, 0.2, 0.3]);
        let j = jacobian(&sys, &q, KinematicsTier::Rigid).unwrap();
        assert!(j.iter().all(|v| v.is_finite()));
        let (lo, hi) = q.beta_range(&sys, 2);
        assert_eq!(hi, 0.0);
        assert!(lo < 0.0);
    }

    #[test]
    fn jacobian_richardson_consistency() {
        // Central differences: halving the step shrinks the truncation error by ~4.
        let sys = reference_system(0);
        let q = JointConfig::new([-150.0, -120.0, -60.0], [0.3, -0.8, 1.9]);
        let tier = KinematicsTier::Rigid;
        let j1 = jacobian_with_step(&sys, &q, tier, 0.4).unwrap();
        let j2 = jacobian_with_step(&sys, &q, tier, 0.2).unwrap();
        let j3 = jacobian_with_step(&sys, &q, tier, 0.1).unwrap();
        for col in 3..6 {
            let d1 = (j1.column(col) - j2.column(col)).norm();
            let d2 = (j2.column(col) - j3.column(col)).norm();
            let ratio = d1 / d2;
            assert!((ratio - 4.0).abs() < 0.2, "column {col}: ratio {ratio}");
        }
        // and the default step agrees with the finest of these to O(h²)
        let j = jacobian(&sys, &q, tier).unwrap();
        assert!((j - j3).norm() < 2.0 * (j2 - j3).norm());
    }
}
