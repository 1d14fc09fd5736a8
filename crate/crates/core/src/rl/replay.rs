use rand::Rng;

/// Fixed-capacity ring of transitions stored as flat `f32` rows.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    obs_dim: usize,
    act_dim: usize,
    capacity: usize,
    obs: Vec<f32>,
    next_obs: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    len: usize,
    head: usize,
    inserted: u64,
}

/// Rows gathered for one update.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub size: usize,
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0);
        Self {
            obs_dim,
            act_dim,
            capacity,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            len: 0,
            head: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn evicted(&self) -> u64 {
        self.inserted - self.len as u64
    }

    /// Overwrites the oldest row once full.
    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64]) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(next_obs.len(), self.obs_dim);
        debug_assert_eq!(action.len(), self.act_dim);
        let (od, ad) = (self.obs_dim, self.act_dim);
        if self.len < self.capacity {
            self.obs.extend(obs.iter().map(|v| *v as f32));
            self.next_obs.extend(next_obs.iter().map(|v| *v as f32));
            self.actions.extend(action.iter().map(|v| *v as f32));
            self.rewards.push(reward as f32);
            self.len += 1;
        } else {
            let h = self.head;
            for (d, s) in self.obs[h * od..(h + 1) * od].iter_mut().zip(obs) {
                *d = *s as f32;
            }
            for (d, s) in self.next_obs[h * od..(h + 1) * od].iter_mut().zip(next_obs) {
                *d = *s as f32;
            }
            for (d, s) in self.actions[h * ad..(h + 1) * ad].iter_mut().zip(action) {
                *d = *s as f32;
            }
            self.rewards[h] = reward as f32;
        }
        self.head = (self.head + 1) % self.capacity;
        self.inserted += 1;
    }

    /// Reward of row `i` in insertion order among the rows currently held.
    pub fn reward_at(&self, i: usize) -> f32 {
        let start = if self.len < self.capacity { 0 } else { self.head };
        self.rewards[(start + i) % self.capacity]
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R, out: &mut Batch) {
        assert!(self.len > 0, "sampling from an empty buffer");
        let (od, ad) = (self.obs_dim, self.act_dim);
        out.size = size;
        out.obs.clear();
        out.next_obs.clear();
        out.actions.clear();
        out.rewards.clear();
        for _ in 0..size {
            let i = rng.random_range(0..self.len);
            out.obs.extend(self.obs[i * od..(i + 1) * od].iter().map(|v| *v as f64));
            out.next_obs
                .extend(self.next_obs[i * od..(i + 1) * od].iter().map(|v| *v as f64));
            out.actions.extend_from_slice(&self.actions[i * ad..(i + 1) * ad]);
            out.rewards.push(self.rewards[i]);
        }
    }
}
