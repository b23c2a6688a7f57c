//! Held-out evaluation on fresh, seeded episodes.

use std::fmt::Write as _;

use super::oracle::bayes_oracle_posterior;
use crate::classifier::{ClassPosterior, Trajectory, TrajectoryClassifier};
use crate::error::{Error, Result};
use crate::opponent_zoo::{OpponentClass, NUM_CLASSES};
use crate::rollout::{episode_rng, rollout_episode, EnvSpec, ProbePolicy};

/// Maps a full trajectory to a predicted class id from `class_set`.
pub trait TrajectoryPredictor: Sync {
    fn predict(&self, trajectory: &Trajectory, class_set: &[OpponentClass]) -> Result<usize>;
}

/// Highest final-row probability among the members of `class_set`; ties go
/// to the earlier member.
pub fn prediction_within(posterior: &ClassPosterior, class_set: &[OpponentClass]) -> usize {
    let Some(first) = class_set.first() else {
        return posterior.final_prediction();
    };
    let row = posterior.final_row();
    let mut best = first.id();
    for c in &class_set[1..] {
        if row[c.id()] > row[best] {
            best = c.id();
        }
    }
    best
}

impl TrajectoryPredictor for TrajectoryClassifier {
    fn predict(&self, trajectory: &Trajectory, class_set: &[OpponentClass]) -> Result<usize> {
        Ok(prediction_within(&self.classify(trajectory)?, class_set))
    }
}

/// Bayes-optimal predictor with knowledge of every class's response model.
#[derive(Debug, Clone, Copy)]
pub struct BayesOracle {
    pub primary_weight: f64,
}

impl TrajectoryPredictor for BayesOracle {
    fn predict(&self, trajectory: &Trajectory, class_set: &[OpponentClass]) -> Result<usize> {
        let post = bayes_oracle_posterior(trajectory, class_set, self.primary_weight)?;
        Ok(prediction_within(&post, class_set))
    }
}

/// Returns the true label. Test stub for a perfect classifier.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelPassThrough;

impl TrajectoryPredictor for LabelPassThrough {
    fn predict(&self, trajectory: &Trajectory, _class_set: &[OpponentClass]) -> Result<usize> {
        Ok(trajectory.label.id())
    }
}

/// Confusion counts: one row per class in the evaluated set, one column per
/// class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub class_set: Vec<OpponentClass>,
    pub confusion: Vec<[usize; NUM_CLASSES]>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().map(|r| r.iter().sum::<usize>()).sum()
    }

    pub fn correct(&self) -> usize {
        self.class_set
            .iter()
            .zip(&self.confusion)
            .map(|(c, row)| row[c.id()])
            .sum()
    }

    pub fn overall_accuracy(&self) -> f64 {
        self.correct() as f64 / self.total().max(1) as f64
    }

    pub fn class_accuracy(&self, class: OpponentClass) -> Option<f64> {
        let i = self.class_set.iter().position(|&c| c == class)?;
        let row = &self.confusion[i];
        let n: usize = row.iter().sum();
        (n > 0).then(|| row[class.id()] as f64 / n as f64)
    }

    /// Pooled accuracy over the members of the set that satisfy `pred`.
    pub fn accuracy_where(&self, pred: impl Fn(OpponentClass) -> bool) -> Option<f64> {
        let (mut hit, mut n) = (0, 0);
        for (c, row) in self.class_set.iter().zip(&self.confusion) {
            if pred(*c) {
                hit += row[c.id()];
                n += row.iter().sum::<usize>();
            }
        }
        (n > 0).then(|| hit as f64 / n as f64)
    }

    /// CSV with a `true_class` column followed by one column per predicted class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_class");
        for c in OpponentClass::ALL {
            write!(out, ",{}", c.name()).expect("write to string");
        }
        out.push('\n');
        for (c, row) in self.class_set.iter().zip(&self.confusion) {
            out.push_str(&c.name());
            for n in row {
                write!(out, ",{n}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluation episodes with class `class_set[i % k]` for episode `i`.
pub fn evaluation_episodes(
    env: &EnvSpec,
    policy: &dyn ProbePolicy,
    class_set: &[OpponentClass],
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    use rayon::prelude::*;
    if n_episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    if class_set.is_empty() {
        return Err(Error::Config("class set is empty".into()));
    }
    (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = episode_rng(seed, i as u64);
            rollout_episode(env, policy, class_set[i % class_set.len()], &mut rng).map(|r| r.trajectory)
        })
        .collect()
}

pub fn confusion_for(predictor: &dyn TrajectoryPredictor, class_set: &[OpponentClass], data: &[Trajectory]) -> Result<EvalReport> {
    use rayon::prelude::*;
    let predictions: Vec<usize> = data.par_iter().map(|t| predictor.predict(t, class_set)).collect::<Result<_>>()?;
    let mut confusion = vec![[0usize; NUM_CLASSES]; class_set.len()];
    for (t, &p) in data.iter().zip(&predictions) {
        let row = class_set
            .iter()
            .position(|&c| c == t.label)
            .ok_or_else(|| Error::Config(format!("trajectory label {} is outside the class set", t.label)))?;
        confusion[row][p] += 1;
    }
    Ok(EvalReport {
        class_set: class_set.to_vec(),
        confusion,
    })
}

/// Final-step accuracy of `predictor` on fresh episodes never used in training.
pub fn evaluate(
    predictor: &dyn TrajectoryPredictor,
    policy: &dyn ProbePolicy,
    env: &EnvSpec,
    class_set: &[OpponentClass],
    n_episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let data = evaluation_episodes(env, policy, class_set, n_episodes, seed)?;
    confusion_for(predictor, class_set, &data)
}

/// Mean final-step cross-entropy of the classifier over `data`.
pub fn mean_final_cross_entropy(classifier: &TrajectoryClassifier, data: &[Trajectory]) -> Result<f64> {
    use rayon::prelude::*;
    let losses: Vec<f64> = data
        .par_iter()
        .map(|t| {
            let post = classifier.classify(t)?;
            Ok(-post.final_row()[t.label.id()].max(1e-300).ln())
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Accuracy of argmax over posterior row `t` (clamped to the last row).
pub fn prefix_accuracy(posteriors: &[(ClassPosterior, OpponentClass)], t: usize) -> f64 {
    let hits = posteriors
        .iter()
        .filter(|(p, label)| ClassPosterior::argmax(&p.rows[t.min(p.len() - 1)]) == label.id())
        .count();
    hits as f64 / posteriors.len().max(1) as f64
}
