use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumKind {
    Constant,
    Linear,
    #[default]
    Decay,
}

/// Goal tolerance schedule over training timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Curriculum {
    pub kind: CurriculumKind,
    /// mm
    pub delta_initial: f64,
    /// mm
    pub delta_final: f64,
    /// Timesteps over which the tolerance shrinks.
    pub n_steps: u64,
}

impl Default for Curriculum {
    fn default() -> Self {
        Self {
            kind: CurriculumKind::Decay,
            delta_initial: 20.0,
            delta_final: 1.0,
            n_steps: 1_500_000,
        }
    }
}

impl Curriculum {
    pub fn constant(delta: f64) -> Self {
        Self {
            kind: CurriculumKind::Constant,
            delta_initial: delta,
            delta_final: delta,
            n_steps: 1,
        }
    }

    /// Slope `a` of the linear schedule, mm per step.
    pub fn linear_slope(&self) -> f64 {
        (self.delta_final - self.delta_initial) / self.n_steps as f64
    }

    /// Per-step decay rate `r` with `δ(t) = δ_initial (1 − r)^t`.
    pub fn decay_rate(&self) -> f64 {
        1.0 - (self.delta_final / self.delta_initial).powf(1.0 / self.n_steps as f64)
    }

    /// Tolerance at training timestep `t`, mm.
    pub fn tolerance(&self, t: u64) -> f64 {
        let t = t as f64;
        let n = self.n_steps.max(1) as f64;
        let value = match self.kind {
            CurriculumKind::Constant => return self.delta_final,
            CurriculumKind::Linear => self.linear_slope() * t + self.delta_initial,
            // (1 − r)^t written as exp(t/N · ln(δ_final/δ_initial)); raising the
            // rounded base to a large power would lose about N ulps
            CurriculumKind::Decay => self.delta_initial * ((t / n) * (self.delta_final / self.delta_initial).ln()).exp(),
        };
        value.max(self.delta_final)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta_final > 0.0 && self.delta_initial >= self.delta_final) {
            return Err(format!(
                "curriculum needs 0 < delta_final <= delta_initial, got {} and {}",
                self.delta_final, self.delta_initial
            ));
        }
        if self.n_steps == 0 {
            return Err("curriculum n_steps must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn curriculum(kind: CurriculumKind) -> Curriculum {
        Curriculum {
            kind,
            ..Default::default()
        }
    }

    #[test]
    fn linear_endpoints() {
        let c = curriculum(CurriculumKind::Linear);
        assert_eq!(c.tolerance(0), 20.0);
        assert_relative_eq!(c.tolerance(c.n_steps), 1.0, max_relative = 1e-12);
        assert_eq!(c.tolerance(10 * c.n_steps), 1.0);
    }

    #[test]
    fn decay_endpoints_and_midpoint() {
        let c = curriculum(CurriculumKind::Decay);
        assert_eq!(c.tolerance(0), 20.0);
        assert_relative_eq!(c.tolerance(c.n_steps), 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.tolerance(c.n_steps / 2), 20f64.sqrt(), max_relative = 1e-12);
        // the rate form agrees with the evaluated form
        let r = c.decay_rate();
        assert_relative_eq!(20.0 * (1.0 - r).powf(1000.0), c.tolerance(1000), max_relative = 1e-12);
    }

    #[test]
    fn constant_is_final() {
        let c = curriculum(CurriculumKind::Constant);
        assert_eq!(c.tolerance(0), 1.0);
        assert_eq!(c.tolerance(123_456), 1.0);
    }

    #[test]
    fn schedules_are_monotone() {
        for kind in [CurriculumKind::Constant, CurriculumKind::Linear, CurriculumKind::Decay] {
            let c = Curriculum {
                kind,
                n_steps: 1000,
                ..Default::default()
            };
            let mut prev = f64::INFINITY;
            for t in 0..1500 {
                let d = c.tolerance(t);
                assert!(d <= prev && d >= c.delta_final && d <= c.delta_initial);
                prev = d;
            }
        }
    }
}
