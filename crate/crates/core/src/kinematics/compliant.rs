//! Torsionally compliant tier.
//!
//! Each tube twists along the backbone according to
//!
//! ```text
//! θ_i' = τ_i
//! τ_i' = (K_i / GJ_i) κ_i(s) (u_x sin θ_i − u_y cos θ_i)
//! ```
//!
//! with `u` the resultant curvature at `s`. The straight transmission behind
//! the front plate twists at the constant base rate, so
//! `θ_i(0) = α_i − β_i τ_i(0)`, and every tube is torsion free at its distal
//! end, `τ_i(L_i + β_i) = 0`. The unknown base rates are found by Newton
//! shooting with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{bending_rate, skew, BackbonePoint, BackboneShape, JointConfig, Segment, TubeConstants};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    /// Maximum RK4 step, mm.
    pub max_step: f64,
    /// Converged when every distal torsion rate is below this, rad/mm.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            max_step: 0.1,
            tolerance: 1e-11,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct State {
    theta: [f64; 3],
    tau: [f64; 3],
    p: Vector3<f64>,
    r: Matrix3<f64>,
}

impl State {
    fn axpy(&self, h: f64, d: &State) -> State {
        State {
            theta: [0, 1, 2].map(|i| self.theta[i] + h * d.theta[i]),
            tau: [0, 1, 2].map(|i| self.tau[i] + h * d.tau[i]),
            p: self.p + d.p * h,
            r: self.r + d.r * h,
        }
    }
}

fn derivative(consts: &TubeConstants, seg: &Segment, y: &State, with_frame: bool) -> State {
    let u = consts.resultant(seg, &y.theta);
    let mut d = State {
        theta: [0.0; 3],
        tau: [0.0; 3],
        p: Vector3::zeros(),
        r: Matrix3::zeros(),
    };
    for i in 0..3 {
        if !seg.present[i] {
            continue;
        }
        d.theta[i] = y.tau[i];
        if seg.curved[i] {
            let (s, c) = y.theta[i].sin_cos();
            d.tau[i] = consts.bending[i] / consts.torsion[i] * consts.kappa[i] * (u[0] * s - u[1] * c);
        }
    }
    if with_frame {
        d.p = y.r.column(2).into_owned();
        d.r = y.r * skew(&bending_rate(u));
    }
    d
}

fn rk4(consts: &TubeConstants, seg: &Segment, y: &State, h: f64, with_frame: bool) -> State {
    let k1 = derivative(consts, seg, y, with_frame);
    let k2 = derivative(consts, seg, &y.axpy(0.5 * h, &k1), with_frame);
    let k3 = derivative(consts, seg, &y.axpy(0.5 * h, &k2), with_frame);
    let k4 = derivative(consts, seg, &y.axpy(h, &k3), with_frame);
    let mut out = *y;
    for i in 0..3 {
        out.theta[i] += h / 6.0 * (k1.theta[i] + 2.0 * k2.theta[i] + 2.0 * k3.theta[i] + k4.theta[i]);
        out.tau[i] += h / 6.0 * (k1.tau[i] + 2.0 * k2.tau[i] + 2.0 * k3.tau[i] + k4.tau[i]);
    }
    if with_frame {
        out.p += (k1.p + k2.p * 2.0 + k3.p * 2.0 + k4.p) * (h / 6.0);
        out.r += (k1.r + k2.r * 2.0 + k3.r * 2.0 + k4.r) * (h / 6.0);
    }
    out
}

struct Integration {
    /// τ_i at the distal end of tube i.
    distal_tau: [f64; 3],
    tip: Vector3<f64>,
    points: Vec<BackbonePoint>,
}

fn integrate(
    consts: &TubeConstants,
    segments: &[Segment],
    q: &JointConfig,
    base_rates: &[f64; 3],
    max_step: f64,
    with_frame: bool,
    samples: Option<usize>,
) -> Integration {
    let mut y = State {
        theta: [0, 1, 2].map(|i| q.alpha[i] - q.beta[i] * base_rates[i]),
        tau: *base_rates,
        p: Vector3::zeros(),
        r: Matrix3::identity(),
    };
    let mut distal_tau = [0.0; 3];
    let mut points = Vec::new();
    if samples.is_some() {
        points.push(BackbonePoint { s: 0.0, position: y.p });
    }
    for (k, seg) in segments.iter().enumerate() {
        let len = seg.length();
        let mut n = (len / max_step).ceil().max(1.0) as usize;
        let stride = match samples {
            Some(m) => {
                n = n.div_ceil(m) * m;
                n / m
            }
            None => usize::MAX,
        };
        let h = len / n as f64;
        for j in 1..=n {
            y = rk4(consts, seg, &y, h, with_frame);
            if j % stride == 0 {
                points.push(BackbonePoint {
                    s: seg.s_start + h * j as f64,
                    position: y.p,
                });
            }
        }
        let next = segments.get(k + 1);
        for i in 0..3 {
            if seg.present[i] && !next.is_some_and(|n| n.present[i]) {
                distal_tau[i] = y.tau[i];
            }
        }
    }
    if let (Some(last), Some(seg)) = (points.last_mut(), segments.last()) {
        last.s = seg.s_end;
    }
    Integration {
        distal_tau,
        tip: y.p,
        points,
    }
}

pub(super) fn shape(
    consts: &TubeConstants,
    segments: &[Segment],
    q: &JointConfig,
    samples: Option<usize>,
    opts: &ShootingOptions,
) -> Result<BackboneShape> {
    if segments.is_empty() {
        return Ok(BackboneShape {
            points: vec![BackbonePoint {
                s: 0.0,
                position: Vector3::zeros(),
            }],
            tip: Vector3::zeros(),
        });
    }
    let active: Vec<usize> = (0..3).filter(|&i| segments.iter().any(|s| s.present[i])).collect();
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let mut rates = [0.0; 3];
        for (k, &i) in active.iter().enumerate() {
            rates[i] = x[k];
        }
        let out = integrate(consts, segments, q, &rates, opts.max_step, false, None);
        DVector::from_iterator(active.len(), active.iter().map(|&i| out.distal_tau[i]))
    };

    let n = active.len();
    let mut x = DVector::zeros(n);
    let mut r = residual(&x);
    let mut iterations = 0;
    while r.amax() > opts.tolerance {
        if iterations == opts.max_iterations {
            return Err(Error::ShootingNoConvergence {
                iterations,
                residual: r.amax(),
            });
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = 1e-7 * x[k].abs().max(1e-3);
            let mut xp = x.clone();
            xp[k] += h;
            jac.set_column(k, &((residual(&xp) - &r) / h));
        }
        let Some(dx) = jac.lu().solve(&(-&r)) else {
            return Err(Error::ShootingNoConvergence {
                iterations,
                residual: r.amax(),
            });
        };
        // backtracking on the residual norm
        let mut t = 1.0;
        loop {
            let cand = &x + &dx * t;
            let rc = residual(&cand);
            if rc.norm() < r.norm() || t < 1e-4 {
                x = cand;
                r = rc;
                break;
            }
            t *= 0.5;
        }
    }

    let mut rates = [0.0; 3];
    for (k, &i) in active.iter().enumerate() {
        rates[i] = x[k];
    }
    let out = integrate(consts, segments, q, &rates, opts.max_step, true, samples);
    let mut points = out.points;
    if points.is_empty() {
        points.push(BackbonePoint {
            s: 0.0,
            position: Vector3::zeros(),
        });
    }
    Ok(BackboneShape { points, tip: out.tip })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::systems::reference_system;

    #[test]
    fn converges_at_nominal_stiffness_for_system3() {
        let sys = reference_system(3);
        let q = JointConfig::new([-40.0, -30.0, -20.0], [0.0, 2.5, -1.0]);
        let rigid = tip_position(&sys, &q, KinematicsTier::Rigid).unwrap();
        let compliant = tip_position(&sys, &q, KinematicsTier::TorsionallyCompliant).unwrap();
        // torsion matters but does not change the picture completely
        let d = (rigid - compliant).norm();
        assert!(d > 1e-3 && d < 30.0, "{d}");
    }

    #[test]
    fn aligned_tubes_do_not_twist() {
        // all tubes at the same rotation: no torsional moment anywhere
        let sys = reference_system(0);
        let q = JointConfig::new([-120.0, -90.0, -30.0], [0.7; 3]);
        let rigid = tip_position(&sys, &q, KinematicsTier::Rigid).unwrap();
        let compliant = tip_position(&sys, &q, KinematicsTier::TorsionallyCompliant).unwrap();
        assert!((rigid - compliant).norm() < 1e-8);
    }

    #[test]
    fn iteration_budget_is_reported() {
        let sys = reference_system(3);
        let q = JointConfig::new([-40.0, -30.0, -20.0], [0.0, 2.5, -1.0]);
        let opts = ShootingOptions {
            max_iterations: 0,
            ..Default::default()
        };
        match compliant_tip(&sys, &q, &opts) {
            Err(Error::ShootingNoConvergence { iterations, residual }) => {
                assert_eq!(iterations, 0);
                assert!(residual > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
