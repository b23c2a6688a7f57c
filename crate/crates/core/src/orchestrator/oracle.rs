//! Exact Bayesian posterior over opponent classes, given the true generative
//! model of each class. No learned classifier can beat it on average.

use crate::classifier::{ClassPosterior, Trajectory};
use crate::error::{Error, Result};
use crate::grid_env::{resolve_moves, Action, GridMap};
use crate::opponent_zoo::{OpponentClass, OpponentPolicy, NUM_CLASSES};

/// Probability that `class` produces the observed transition at step `t`.
fn transition_likelihood(map: &GridMap, traj: &Trajectory, t: usize, policy: &OpponentPolicy) -> f64 {
    let (prev, next) = (&traj.states[t], &traj.states[t + 1]);
    let agent_action = traj.actions[t];
    let observed = (next.agent(), next.opponent());
    let probs = policy.action_distribution(agent_action);
    Action::ALL
        .iter()
        .zip(probs)
        .filter(|&(&o, p)| p > 0.0 && resolve_moves(map, prev.agent(), agent_action, prev.opponent(), o) == observed)
        .map(|(_, p)| p)
        .sum()
}

/// Posterior after every prefix, uniform prior over `class_set`. Rows have
/// one entry per class id; ids outside the set stay at zero.
pub fn bayes_oracle_posterior(trajectory: &Trajectory, class_set: &[OpponentClass], primary_weight: f64) -> Result<ClassPosterior> {
    if class_set.is_empty() {
        return Err(Error::Config("class set is empty".into()));
    }
    let (map, _, _) = trajectory.states[0].decode()?;
    let policies = class_set
        .iter()
        .map(|&c| OpponentPolicy::new(c, primary_weight))
        .collect::<Result<Vec<_>>>()?;
    let mut belief = vec![0.0; NUM_CLASSES];
    for c in class_set {
        belief[c.id()] = 1.0 / class_set.len() as f64;
    }
    let mut rows = Vec::with_capacity(trajectory.states.len());
    rows.push(belief.clone());
    for t in 0..trajectory.steps() {
        let mut total = 0.0;
        for (c, policy) in class_set.iter().zip(&policies) {
            belief[c.id()] *= transition_likelihood(&map, trajectory, t, policy);
            total += belief[c.id()];
        }
        if total <= 0.0 {
            return Err(Error::Evidence(format!(
                "step {t} of the trajectory is impossible under every candidate class"
            )));
        }
        for b in &mut belief {
            *b /= total;
        }
        rows.push(belief.clone());
    }
    Ok(ClassPosterior { rows })
}
