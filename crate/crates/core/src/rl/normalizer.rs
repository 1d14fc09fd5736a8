use serde::{Deserialize, Serialize};

/// Running per-feature mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub count: f64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    /// Normalized values are clipped to `±clip`.
    pub clip: f64,
    /// Lower bound on the standard deviation.
    pub eps: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Normalizer {
    pub fn new(dim: usize, clip: f64) -> Self {
        Self {
            count: 0.0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
            clip,
            eps: 1e-2,
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    /// Adds rows of a `n × dim` block to the statistics.
    pub fn update(&mut self, rows: &[f64]) {
        let d = self.dim();
        for row in rows.chunks_exact(d) {
            for i in 0..d {
                self.sum[i] += row[i];
                self.sum_sq[i] += row[i] * row[i];
            }
            self.count += 1.0;
        }
        self.recompute();
    }

    pub fn recompute(&mut self) {
        if self.count == 0.0 {
            return;
        }
        for i in 0..self.dim() {
            let m = self.sum[i] / self.count;
            let var = (self.sum_sq[i] / self.count - m * m).max(self.eps * self.eps);
            self.mean[i] = m;
            self.std[i] = var.sqrt();
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn normalize_into<T: super::Real>(&self, x: &[f64], out: &mut Vec<T>) {
        let d = self.dim();
        debug_assert_eq!(x.len() % d, 0);
        for row in x.chunks_exact(d) {
            for i in 0..d {
                let z = ((row[i] - self.mean[i]) / self.std[i]).clamp(-self.clip, self.clip);
                out.push(T::lift(z));
            }
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.normalize_into(x, &mut out);
        out
    }
}
