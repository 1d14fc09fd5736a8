use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::systems::CtrSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Uniform,
    /// Probability proportional to each system's overall length.
    LengthProportional,
}

/// Draws the system index at each reset.
#[derive(Debug, Clone)]
pub struct SystemSampler {
    kind: SamplerKind,
    probabilities: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl SystemSampler {
    pub fn new(kind: SamplerKind, systems: &[CtrSystem]) -> Self {
        assert!(!systems.is_empty(), "system registry is empty");
        let weights: Vec<f64> = match kind {
            SamplerKind::Uniform => vec![1.0; systems.len()],
            SamplerKind::LengthProportional => systems.iter().map(|s| s.robot_length()).collect(),
        };
        let total: f64 = weights.iter().sum();
        let probabilities = weights.iter().map(|w| w / total).collect();
        let index = WeightedIndex::new(&weights).expect("positive weights");
        Self {
            kind,
            probabilities,
            index,
        }
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.probabilities.len() == 1 {
            return 0;
        }
        self.index.sample(rng)
    }
}
