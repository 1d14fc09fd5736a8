//! Hindsight relabeling with the "future" strategy.

use rand::Rng;

use crate::env::{sparse_reward, Transition};

/// Index of the step whose achieved goal replaces the desired goal of step
/// `t`, uniform over `t..len`.
pub fn sample_future_index<R: Rng + ?Sized>(t: usize, len: usize, rng: &mut R) -> usize {
    rng.random_range(t..len)
}

/// Returns every transition followed by `k` copies whose desired goal is the
/// achieved goal of the same or a later step. Rewards of the copies are
/// recomputed against the tolerance recorded with the transition.
pub fn her_relabel<R: Rng + ?Sized>(episode: &[Transition], k: usize, rng: &mut R) -> Vec<Transition> {
    let mut out = Vec::with_capacity(episode.len() * (k + 1));
    for (t, tr) in episode.iter().enumerate() {
        out.push(*tr);
        for _ in 0..k {
            let j = sample_future_index(t, episode.len(), rng);
            out.push(relabel(tr, episode[j].achieved_goal));
        }
    }
    out
}

/// `tr` with its desired goal replaced and the reward recomputed.
pub fn relabel(tr: &Transition, goal: nalgebra::Vector3<f64>) -> Transition {
    let reward = sparse_reward((tr.achieved_goal - goal).norm(), tr.next_state.tolerance);
    Transition {
        state: tr.state.with_goal(goal),
        next_state: tr.next_state.with_goal(goal),
        desired_goal: goal,
        reward,
        terminal: reward == 0.0,
        ..*tr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CtrEnv, EnvConfig};
    use crate::jointspace::ActionVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn episode(len: usize, seed: u64) -> Vec<Transition> {
        let mut env = CtrEnv::new(EnvConfig {
            seed,
            max_episode_steps: len,
            curriculum: crate::env::Curriculum::constant(1e-6),
            ..EnvConfig::single(3)
        })
        .unwrap();
        let mut state = env.reset().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        loop {
            let a = ActionVector::from_normalized(&[0, 1, 2, 3, 4, 5].map(|_| rng.random_range(-1.0..1.0)));
            let r = env.step(&a).unwrap();
            out.push(Transition {
                state,
                action: a,
                reward: r.reward,
                next_state: r.state,
                achieved_goal: r.info.achieved_goal,
                desired_goal: env.desired_goal(),
                terminal: r.info.success,
            });
            state = r.state;
            if r.terminal {
                return out;
            }
        }
    }

    #[test]
    fn k_zero_is_identity() {
        let ep = episode(10, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(her_relabel(&ep, 0, &mut rng), ep);
    }

    #[test]
    fn own_goal_gives_zero_reward() {
        let ep = episode(10, 2);
        for tr in &ep {
            assert_eq!(relabel(tr, tr.achieved_goal).reward, 0.0);
        }
    }

    #[test]
    fn relabeled_rewards_follow_sparse_rule() {
        let ep = episode(30, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = her_relabel(&ep, 4, &mut rng);
        assert_eq!(out.len(), ep.len() * 5);
        for tr in &out {
            let e = (tr.achieved_goal - tr.desired_goal).norm();
            assert_eq!(tr.reward, sparse_reward(e, tr.next_state.tolerance));
            assert_eq!(tr.state.desired_goal, tr.desired_goal);
            assert_eq!(tr.next_state.desired_goal, tr.desired_goal);
        }
    }

    #[test]
    fn future_index_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let len = 20;
        let n = 100_000;
        for t in [0usize, 10] {
            let mut counts = vec![0usize; len];
            for _ in 0..n {
                counts[sample_future_index(t, len, &mut rng)] += 1;
            }
            assert!(counts[..t].iter().all(|c| *c == 0));
            let p = 1.0 / (len - t) as f64;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            for c in &counts[t..] {
                assert!((*c as f64 - n as f64 * p).abs() < 4.0 * sigma, "{counts:?}");
            }
        }
    }
}
