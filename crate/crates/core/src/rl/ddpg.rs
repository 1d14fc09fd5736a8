//! Deterministic policy gradient agent over normalized observations and
//! actions in `[-1, 1]⁶`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, ForwardCache, Mlp, Real};
use super::normalizer::Normalizer;
use super::optim::Adam;
use super::replay::Batch;
use crate::jointspace::ActionVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    /// Target smoothing coefficient.
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    /// Weight of the mean squared normalized action in the actor loss.
    pub action_l2: f64,
    /// Observation clip after normalization.
    pub clip_obs: f64,
    /// Clip critic targets to `[-1/(1-γ), 0]`, the range of returns under
    /// the sparse reward.
    pub clip_target: bool,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256, 256],
            gamma: 0.95,
            tau: 0.005,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            batch_size: 256,
            action_l2: 1.0,
            clip_obs: 5.0,
            clip_target: true,
        }
    }
}

pub fn actor_sizes(obs_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut s = vec![obs_dim];
    s.extend_from_slice(hidden);
    s.push(ActionVector::DIM);
    s
}

pub fn critic_sizes(obs_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut s = vec![obs_dim + ActionVector::DIM];
    s.extend_from_slice(hidden);
    s.push(1);
    s
}

/// Row-wise `[a_i, b_i]`.
pub fn concat_rows<T: Copy>(a: &[T], da: usize, b: &[T], db: usize, batch: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(batch * (da + db));
    for i in 0..batch {
        out.extend_from_slice(&a[i * da..(i + 1) * da]);
        out.extend_from_slice(&b[i * db..(i + 1) * db]);
    }
    out
}

/// Mean squared error of `Q(o, a)` against `targets`, and its gradient with
/// respect to the critic parameters.
pub fn critic_loss<T: Real>(critic: &Mlp<T>, obs: &[T], actions: &[T], targets: &[T], batch: usize) -> (f64, Vec<T>) {
    let od = critic.input_dim() - ActionVector::DIM;
    let input = concat_rows(obs, od, actions, ActionVector::DIM, batch);
    let mut cache = ForwardCache::default();
    critic.forward_cached(&input, batch, &mut cache).expect("critic input");
    let q = cache.output();
    let n = T::lift(batch as f64);
    let two = T::lift(2.0);
    let mut loss = 0.0;
    let mut dq = Vec::with_capacity(batch);
    for i in 0..batch {
        let d = q[i] - targets[i];
        loss += d.as_f64() * d.as_f64();
        dq.push(two * d / n);
    }
    let mut grad = vec![T::zero(); critic.params.len()];
    critic.backward(&cache, &dq, Some(&mut grad));
    (loss / batch as f64, grad)
}

/// `−mean Q(o, π(o)) + λ·mean(π(o)²)` and its gradient with respect to the
/// actor parameters. Also returns the mean Q.
pub fn actor_loss<T: Real>(actor: &Mlp<T>, critic: &Mlp<T>, obs: &[T], batch: usize, action_l2: f64) -> (f64, Vec<T>, f64) {
    let od = actor.input_dim();
    let ad = ActionVector::DIM;
    let mut acache = ForwardCache::default();
    actor.forward_cached(obs, batch, &mut acache).expect("actor input");
    let pi = acache.output().to_vec();
    let input = concat_rows(obs, od, &pi, ad, batch);
    let mut ccache = ForwardCache::default();
    critic.forward_cached(&input, batch, &mut ccache).expect("critic input");
    let q = ccache.output();
    let mean_q = q.iter().map(|v| v.as_f64()).sum::<f64>() / batch as f64;
    let l2 = pi.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / (batch * ad) as f64;
    let loss = -mean_q + action_l2 * l2;

    let dq = vec![T::lift(-1.0 / batch as f64); batch];
    let dinput = critic.backward(&ccache, &dq, None);
    let l2_scale = T::lift(2.0 * action_l2 / (batch * ad) as f64);
    let mut dpi = Vec::with_capacity(batch * ad);
    for i in 0..batch {
        let row = &dinput[i * (od + ad) + od..(i + 1) * (od + ad)];
        for j in 0..ad {
            dpi.push(row[j] + l2_scale * pi[i * ad + j]);
        }
    }
    let mut grad = vec![T::zero(); actor.params.len()];
    actor.backward(&acache, &dpi, Some(&mut grad));
    (loss, grad, mean_q)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub config: DdpgConfig,
    pub obs_dim: usize,
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
    pub actor_target: Mlp<f32>,
    pub critic_target: Mlp<f32>,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub normalizer: Normalizer,
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, config: DdpgConfig, rng: &mut R) -> Self {
        let actor = Mlp::init(
            &actor_sizes(obs_dim, &config.hidden),
            Activation::Relu,
            Activation::Tanh,
            3e-3,
            rng,
        );
        let critic = Mlp::init(
            &critic_sizes(obs_dim, &config.hidden),
            Activation::Relu,
            Activation::Identity,
            3e-3,
            rng,
        );
        Self {
            actor_opt: Adam::new(actor.params.len(), config.actor_lr),
            critic_opt: Adam::new(critic.params.len(), config.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            normalizer: Normalizer::new(obs_dim, config.clip_obs),
            obs_dim,
            config,
        }
    }

    /// Deterministic action in `[-1, 1]⁶` for one raw observation.
    pub fn act(&self, obs: &[f64]) -> [f64; 6] {
        let mut x: Vec<f32> = Vec::with_capacity(obs.len());
        self.normalizer.normalize_into(obs, &mut x);
        let y = self.actor.forward(&x, 1).expect("observation dimension");
        [0, 1, 2, 3, 4, 5].map(|i| y[i] as f64)
    }

    pub fn update(&mut self, batch: &Batch) -> UpdateStats {
        let n = batch.size;
        let mut obs: Vec<f32> = Vec::with_capacity(n * self.obs_dim);
        self.normalizer.normalize_into(&batch.obs, &mut obs);
        let mut next: Vec<f32> = Vec::with_capacity(n * self.obs_dim);
        self.normalizer.normalize_into(&batch.next_obs, &mut next);

        let next_actions = self.actor_target.forward(&next, n).expect("actor input");
        let next_input = concat_rows(&next, self.obs_dim, &next_actions, ActionVector::DIM, n);
        let next_q = self.critic_target.forward(&next_input, n).expect("critic input");
        let lo = -1.0 / (1.0 - self.config.gamma);
        let targets: Vec<f32> = (0..n)
            .map(|i| {
                let y = batch.rewards[i] as f64 + self.config.gamma * next_q[i] as f64;
                let y = if self.config.clip_target { y.clamp(lo, 0.0) } else { y };
                y as f32
            })
            .collect();

        let (c_loss, c_grad) = critic_loss(&self.critic, &obs, &batch.actions, &targets, n);
        self.critic_opt.step(&mut self.critic.params, &c_grad);
        let (a_loss, a_grad, mean_q) = actor_loss(&self.actor, &self.critic, &obs, n, self.config.action_l2);
        self.actor_opt.step(&mut self.actor.params, &a_grad);
        UpdateStats {
            critic_loss: c_loss,
            actor_loss: a_loss,
            mean_q,
        }
    }

    pub fn update_targets(&mut self) {
        self.actor_target.soft_update(&self.actor, self.config.tau);
        self.critic_target.soft_update(&self.critic, self.config.tau);
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }
}
