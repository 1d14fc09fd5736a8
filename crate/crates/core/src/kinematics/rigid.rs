use nalgebra::{Matrix3, Vector3};

use super::{axis_angle, bending_rate, skew, BackbonePoint, BackboneShape, JointConfig, Segment, TubeConstants};

/// Below this curvature an arc is treated by its series expansion, mm⁻¹.
const STRAIGHT_CURVATURE: f64 = 1e-9;

/// Local transform of a constant-curvature arc of length `len`.
pub(crate) fn arc(u: [f64; 2], len: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let kappa = u[0].hypot(u[1]);
    if kappa < STRAIGHT_CURVATURE {
        let w = bending_rate(u);
        let r = Matrix3::identity() + skew(&w) * len;
        let p = Vector3::new(0.5 * u[0] * len * len, 0.5 * u[1] * len * len, len);
        return (r, p);
    }
    let axis = bending_rate(u) / kappa;
    let phi = kappa * len;
    let r = axis_angle(&axis, phi);
    // sin(κℓ)/κ along z, (1 − cos κℓ)/κ toward the bending direction
    let lateral = 2.0 * (0.5 * phi).sin().powi(2) / kappa;
    let p = Vector3::new(u[0] / kappa * lateral, u[1] / kappa * lateral, phi.sin() / kappa);
    (r, p)
}

pub(crate) fn tip(consts: &TubeConstants, segments: &[Segment], q: &JointConfig) -> Vector3<f64> {
    let mut r = Matrix3::identity();
    let mut p = Vector3::zeros();
    for seg in segments {
        let u = consts.resultant(seg, &q.alpha);
        let (dr, dp) = arc(u, seg.length());
        p += r * dp;
        r *= dr;
    }
    p
}

pub(crate) fn shape(
    consts: &TubeConstants,
    segments: &[Segment],
    q: &JointConfig,
    samples: usize,
) -> BackboneShape {
    let mut r = Matrix3::identity();
    let mut p = Vector3::zeros();
    let mut points = vec![BackbonePoint { s: 0.0, position: p }];
    for seg in segments {
        let u = consts.resultant(seg, &q.alpha);
        let len = seg.length();
        for k in 1..=samples {
            let sigma = len * k as f64 / samples as f64;
            let (_, dp) = arc(u, sigma);
            points.push(BackbonePoint {
                s: seg.s_start + sigma,
                position: p + r * dp,
            });
        }
        let (dr, dp) = arc(u, len);
        p += r * dp;
        r *= dr;
        // the last sample and the composed transform agree up to rounding
        points.last_mut().unwrap().position = p;
    }
    if let Some(last) = segments.last() {
        points.last_mut().unwrap().s = last.s_end;
    }
    BackboneShape { points, tip: p }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn arc_matches_series_near_zero() {
        let u = [3e-10, -1e-10];
        let (r, p) = arc(u, 50.0);
        assert_relative_eq!(p.z, 50.0, epsilon = 1e-12);
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        // just above the branch point the exact form matches the series
        let k = 1.0001e-9;
        let (_, p_above) = arc([k, 0.0], 50.0);
        assert_relative_eq!(p_above.x, 0.5 * k * 2500.0, max_relative = 1e-9);
        assert_relative_eq!(p_above.z, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn arc_is_rotation() {
        let (r, p) = arc([0.01, 0.02], 80.0);
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-13);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-13);
        // chord length of an arc: 2 sin(κℓ/2)/κ
        let k = 0.01f64.hypot(0.02);
        assert_relative_eq!(p.norm(), 2.0 * (k * 40.0).sin() / k, epsilon = 1e-11);
    }
}
