use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::kinematics::JointConfig;

/// Gear ratio between rotation encoder and extension leadscrew.
pub const GEAR_RATIO: f64 = 0.001;

/// Zero-mean Gaussian sensor noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Rotation encoder noise, degrees.
    pub rotation_encoder_std_deg: f64,
    /// Extension encoder noise, mm.
    pub extension_encoder_std_mm: f64,
    /// Tip tracking noise, mm.
    pub tracking_std_mm: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::sensor()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            rotation_encoder_std_deg: 0.0,
            extension_encoder_std_mm: 0.0,
            tracking_std_mm: 0.0,
        }
    }

    /// 1° rotation encoder noise, extension noise from the same encoder
    /// through the gear ratio, 0.8 mm tracking noise.
    pub fn sensor() -> Self {
        Self {
            rotation_encoder_std_deg: 1.0,
            extension_encoder_std_mm: extension_std_from_rotation(1.0),
            tracking_std_mm: 0.8,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rotation_encoder_std_deg == 0.0 && self.extension_encoder_std_mm == 0.0 && self.tracking_std_mm == 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.rotation_encoder_std_deg,
            self.extension_encoder_std_mm,
            self.tracking_std_mm,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(format!("noise standard deviations must be finite and >= 0, got {all:?}"))
        }
    }
}

/// Rotation encoder std in degrees, expressed in radians of motor shaft,
/// scaled by the gear ratio.
pub fn extension_std_from_rotation(rotation_std_deg: f64) -> f64 {
    GEAR_RATIO * rotation_std_deg * 2.0 * PI / 360.0
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).expect("finite std").sample(rng)
}

/// Noisy joint readings and tip measurement.
pub fn observe_with_noise<R: Rng + ?Sized>(
    q: &JointConfig,
    achieved: &Vector3<f64>,
    spec: &NoiseSpec,
    rng: &mut R,
) -> (JointConfig, Vector3<f64>) {
    let rot = spec.rotation_encoder_std_deg.to_radians();
    let mut noisy = *q;
    for i in 0..3 {
        noisy.alpha[i] += gaussian(rng, rot);
        noisy.beta[i] += gaussian(rng, spec.extension_encoder_std_mm);
    }
    let tip = achieved + Vector3::from_fn(|_, _| gaussian(rng, spec.tracking_std_mm));
    (noisy, tip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_spec_is_identity() {
        let q = JointConfig::new([-3.0, -2.0, -1.0], [0.1, 0.2, 0.3]);
        let g = Vector3::new(1.0, 2.0, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(observe_with_noise(&q, &g, &NoiseSpec::none(), &mut rng), (q, g));
    }

    #[test]
    fn gear_ratio_extension_std() {
        assert_eq!(NoiseSpec::sensor().extension_encoder_std_mm, 0.001 * (2.0 * PI / 360.0));
    }

    #[test]
    fn channel_std_matches_spec() {
        let spec = NoiseSpec::sensor();
        let q = JointConfig::new([-3.0, -2.0, -1.0], [0.0; 3]);
        let g = Vector3::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut sums = [0.0f64; 3];
        for _ in 0..n {
            let (nq, ng) = observe_with_noise(&q, &g, &spec, &mut rng);
            sums[0] += nq.alpha[1].powi(2);
            sums[1] += (nq.beta[1] + 2.0).powi(2);
            sums[2] += ng.x.powi(2);
        }
        let expected = [spec.rotation_encoder_std_deg.to_radians(), spec.extension_encoder_std_mm, spec.tracking_std_mm];
        for k in 0..3 {
            let std = (sums[k] / n as f64).sqrt();
            assert!((std / expected[k] - 1.0).abs() < 0.02, "channel {k}: {std} vs {}", expected[k]);
        }
    }
}
