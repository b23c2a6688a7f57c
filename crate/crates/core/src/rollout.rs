//! Episode collection shared by dataset generation, training and evaluation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::Trajectory;
use crate::error::{Error, Result};
use crate::grid_env::{Action, GridMap, GridState, StateEncoding, DEFAULT_EPISODE_LENGTH};
use crate::opponent_zoo::{validate_primary_weight, OpponentClass, OpponentPolicy, DEFAULT_PRIMARY_WEIGHT};

pub type EpisodeRng = ChaCha8Rng;

/// Independent generator for one episode. Streams never overlap, so episodes
/// can be collected in any order or in parallel.
pub fn episode_rng(seed: u64, stream: u64) -> EpisodeRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Opponent class for an episode: uniform over `class_set`.
pub fn sample_class<R: Rng + ?Sized>(class_set: &[OpponentClass], rng: &mut R) -> OpponentClass {
    class_set[rng.random_range(0..class_set.len())]
}

/// What the probe policy produced at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStep {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
}

/// Anything that picks the probe agent's action from the current observation.
pub trait ProbePolicy: Sync {
    fn act(&self, obs: &StateEncoding, rng: &mut EpisodeRng) -> Result<PolicyStep>;
}

/// Uniform over the four actions. Used by the random-probe baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl ProbePolicy for UniformPolicy {
    fn act(&self, _obs: &StateEncoding, rng: &mut EpisodeRng) -> Result<PolicyStep> {
        Ok(PolicyStep {
            action: Action::ALL[rng.random_range(0..4)],
            log_prob: 0.25f64.ln(),
            value: 0.0,
        })
    }
}

/// Fixed environment parameters for a batch of episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub map: Arc<GridMap>,
    pub episode_length: usize,
    pub primary_weight: f64,
}

impl EnvSpec {
    pub fn new(map: GridMap, episode_length: usize, primary_weight: f64) -> Result<Self> {
        if episode_length == 0 {
            return Err(Error::Config("episode_length must be at least 1".into()));
        }
        validate_primary_weight(primary_weight)?;
        Ok(EnvSpec {
            map: Arc::new(map),
            episode_length,
            primary_weight,
        })
    }

    pub fn opponent(&self, class: OpponentClass) -> OpponentPolicy {
        OpponentPolicy::new(class, self.primary_weight).expect("weight validated at construction")
    }
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec {
            map: Arc::new(GridMap::default_map()),
            episode_length: DEFAULT_EPISODE_LENGTH,
            primary_weight: DEFAULT_PRIMARY_WEIGHT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub trajectory: Trajectory,
    /// One entry per step; `steps[t]` was chosen while observing `trajectory.states[t]`.
    pub steps: Vec<PolicyStep>,
}

/// Plays one full episode against an opponent of `class`.
///
/// Draw order per episode: placement, then for each step the probe action
/// followed by the opponent's response.
pub fn rollout_episode(
    env: &EnvSpec,
    policy: &dyn ProbePolicy,
    class: OpponentClass,
    rng: &mut EpisodeRng,
) -> Result<EpisodeRecord> {
    let opponent = env.opponent(class);
    let mut state = GridState::reset(Arc::clone(&env.map), env.episode_length, rng)?;
    let mut states = Vec::with_capacity(env.episode_length + 1);
    let mut actions = Vec::with_capacity(env.episode_length);
    let mut steps = Vec::with_capacity(env.episode_length);
    states.push(state.encode());
    while !state.is_done() {
        let step = policy.act(states.last().expect("non-empty"), rng)?;
        let response = opponent.sample_response(step.action, rng);
        state = state.step(step.action, response)?;
        states.push(state.encode());
        actions.push(step.action);
        steps.push(step);
    }
    Ok(EpisodeRecord {
        trajectory: Trajectory::new(states, actions, class)?,
        steps,
    })
}

/// Episode `i` of a batch uses stream `stream_base + i`.
pub fn collect_episodes(
    env: &EnvSpec,
    policy: &dyn ProbePolicy,
    class_set: &[OpponentClass],
    episodes: usize,
    seed: u64,
    stream_base: u64,
) -> Result<Vec<EpisodeRecord>> {
    use rayon::prelude::*;
    if class_set.is_empty() {
        return Err(Error::Config("class set is empty".into()));
    }
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = episode_rng(seed, stream_base + i as u64);
            let class = sample_class(class_set, &mut rng);
            rollout_episode(env, policy, class, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_env::apply_move;
    use crate::opponent_zoo::BaseKind;

    #[test]
    fn follower_mirrors_unblocked_moves() {
        let env = EnvSpec::new(GridMap::empty(4, 4).unwrap(), 64, 0.7).unwrap();
        let mut rng = episode_rng(3, 0);
        let class = OpponentClass::Deterministic(BaseKind::Follower);
        let rec = rollout_episode(&env, &UniformPolicy, class, &mut rng).unwrap();
        let traj = &rec.trajectory;
        let mut checked = 0;
        for t in 0..traj.steps() {
            let (a0, o0) = (traj.states[t].agent(), traj.states[t].opponent());
            let (a1, o1) = (traj.states[t + 1].agent(), traj.states[t + 1].opponent());
            let act = traj.actions[t];
            let agent_moved = apply_move(&env.map, a0, act) != a0;
            let opp_target = apply_move(&env.map, o0, act);
            if agent_moved && opp_target != o0 && opp_target != a1 {
                assert_eq!(
                    (a1.row as isize - a0.row as isize, a1.col as isize - a0.col as isize),
                    (o1.row as isize - o0.row as isize, o1.col as isize - o0.col as isize)
                );
                checked += 1;
            }
        }
        assert!(checked > 5);
    }

    #[test]
    fn collection_is_seeded() {
        let env = EnvSpec::new(GridMap::default_map(), 8, 0.7).unwrap();
        let a = collect_episodes(&env, &UniformPolicy, &OpponentClass::ALL, 5, 1, 0).unwrap();
        let b = collect_episodes(&env, &UniformPolicy, &OpponentClass::ALL, 5, 1, 0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.trajectory, y.trajectory);
        }
    }
}
