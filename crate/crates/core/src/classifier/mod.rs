//! LSTM trajectory classifier.
//!
//! The network sees only state encodings (one-hot per cell, row-major), runs a
//! single LSTM layer from a zero initial state and applies a linear head to
//! every hidden state, so a posterior is available after each prefix.

mod dataset;

pub use dataset::{dataset_generate, read_dataset, write_dataset};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_env::{Action, StateEncoding, NUM_CODES};
use crate::nn::{prefixed, softmax, softmax_cross_entropy, Activation, Adam, Checkpoint, DenseLayer, LstmCell, Parameters, Tensor};
use crate::opponent_zoo::{OpponentClass, NUM_CLASSES};

pub const CHECKPOINT_KIND: &str = "trajectory-classifier";

/// One labelled episode: `T + 1` states (initial state included) and the `T`
/// probe actions that connect them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<StateEncoding>,
    pub actions: Vec<Action>,
    pub label: OpponentClass,
}

impl Trajectory {
    pub fn new(states: Vec<StateEncoding>, actions: Vec<Action>, label: OpponentClass) -> Result<Self> {
        if states.len() != actions.len() + 1 {
            return Err(Error::Dimension(format!(
                "trajectory has {} states for {} actions; expected one more state than actions",
                states.len(),
                actions.len()
            )));
        }
        if let Some(first) = states.first() {
            if states.iter().any(|s| s.width() != first.width() || s.height() != first.height()) {
                return Err(Error::Dimension("trajectory states have inconsistent grid sizes".into()));
            }
        }
        Ok(Trajectory { states, actions, label })
    }

    /// Number of moves, `T`.
    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

/// Class distribution after each observed prefix; row `t` has seen states `0..=t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPosterior {
    pub rows: Vec<Vec<f64>>,
}

impl ClassPosterior {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn final_row(&self) -> &[f64] {
        self.rows.last().expect("posterior has at least one row")
    }

    pub fn argmax(row: &[f64]) -> usize {
        // first maximum wins so ties resolve deterministically
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        best
    }

    pub fn final_prediction(&self) -> usize {
        Self::argmax(self.final_row())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub hidden_size: usize,
    pub lr: f64,
    /// Passes over the training window in each classifier round.
    pub epochs_per_round: usize,
    pub batch_size: usize,
    /// Size of the training window: the most recent labelled episodes from
    /// any round. 0 means only the current round's episodes.
    pub replay_episodes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_size: 64,
            lr: 0.001,
            epochs_per_round: 20,
            batch_size: 32,
            replay_episodes: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Err(Error::Config(format!("classifier.{name}: {msg}")));
        if self.hidden_size == 0 {
            return field("hidden_size", "must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return field("lr", format!("must be positive, got {}", self.lr));
        }
        if self.epochs_per_round == 0 {
            return field("epochs_per_round", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return field("batch_size", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Positions of the ones in [`encode_step`].
pub fn active_inputs(enc: &StateEncoding) -> Vec<usize> {
    enc.cells()
        .iter()
        .enumerate()
        .map(|(i, &code)| i * NUM_CODES + code as usize)
        .collect()
}

/// One-hot of every cell code, concatenated in row-major cell order.
pub fn encode_step(enc: &StateEncoding) -> Vec<f64> {
    let mut v = vec![0.0; enc.cells().len() * NUM_CODES];
    for (i, &code) in enc.cells().iter().enumerate() {
        v[i * NUM_CODES + code as usize] = 1.0;
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryClassifier {
    pub lstm: LstmCell,
    pub head: DenseLayer,
    width: usize,
    height: usize,
}

impl TrajectoryClassifier {
    pub fn new<R: Rng + ?Sized>(width: usize, height: usize, hidden_size: usize, rng: &mut R) -> Self {
        let inputs = width * height * NUM_CODES;
        TrajectoryClassifier {
            lstm: LstmCell::new(inputs, hidden_size, rng),
            head: DenseLayer::new(hidden_size, NUM_CLASSES, Activation::Identity, rng),
            width,
            height,
        }
    }

    pub fn zeros(width: usize, height: usize, hidden_size: usize) -> Self {
        TrajectoryClassifier {
            lstm: LstmCell::zeros(width * height * NUM_CODES, hidden_size),
            head: DenseLayer::zeros(hidden_size, NUM_CLASSES, Activation::Identity),
            width,
            height,
        }
    }

    pub fn zeros_like(&self) -> Self {
        TrajectoryClassifier {
            lstm: self.lstm.zeros_like(),
            head: self.head.zeros_like(),
            width: self.width,
            height: self.height,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden_size()
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn check_states(&self, states: &[StateEncoding]) -> Result<()> {
        if states.is_empty() {
            return Err(Error::Dimension("cannot classify an empty state sequence".into()));
        }
        if let Some(s) = states.iter().find(|s| s.width() != self.width || s.height() != self.height) {
            return Err(Error::Dimension(format!(
                "classifier expects {}x{} grids, got {}x{}",
                self.width,
                self.height,
                s.width(),
                s.height()
            )));
        }
        Ok(())
    }

    /// Posterior after every prefix of `states`.
    pub fn classify_states(&self, states: &[StateEncoding]) -> Result<ClassPosterior> {
        self.check_states(states)?;
        let hs = self.hidden_size();
        let (mut h, mut c) = (vec![0.0; hs], vec![0.0; hs]);
        let mut rows = Vec::with_capacity(states.len());
        for s in states {
            let (h2, c2, _) = self.lstm.step_one_hot(&active_inputs(s), &h, &c)?;
            h = h2;
            c = c2;
            rows.push(softmax(&self.head.infer(&h)?));
        }
        Ok(ClassPosterior { rows })
    }

    pub fn classify(&self, trajectory: &Trajectory) -> Result<ClassPosterior> {
        self.classify_states(&trajectory.states)
    }

    /// Final-step cross-entropy of one trajectory and its gradient, by BPTT.
    pub fn trajectory_loss_and_grad(&self, trajectory: &Trajectory) -> Result<(f64, TrajectoryClassifier)> {
        let states = &trajectory.states;
        self.check_states(states)?;
        let hs = self.hidden_size();
        let (mut h, mut c) = (vec![0.0; hs], vec![0.0; hs]);
        let mut caches = Vec::with_capacity(states.len());
        for s in states {
            let (h2, c2, cache) = self.lstm.step_one_hot(&active_inputs(s), &h, &c)?;
            caches.push(cache);
            h = h2;
            c = c2;
        }
        let (logits, head_cache) = self.head.forward(&h)?;
        let (loss, _, dlogits) = softmax_cross_entropy(&logits, trajectory.label.id());
        let mut grads = self.zeros_like();
        let mut dh = self.head.backward(&head_cache, &dlogits, &mut grads.head)?;
        let mut dc = vec![0.0; hs];
        for cache in caches.iter().rev() {
            let (dh_prev, dc_prev) = self.lstm.step_backward_state(cache, &dh, &dc, &mut grads.lstm)?;
            dh = dh_prev;
            dc = dc_prev;
        }
        Ok((loss, grads))
    }

    /// Mean final-step loss over `batch` and the matching mean gradient.
    /// Per-trajectory gradients are summed in batch order.
    pub fn batch_loss_and_grad(&self, batch: &[&Trajectory]) -> Result<(f64, TrajectoryClassifier)> {
        if batch.is_empty() {
            return Err(Error::Training("empty training batch".into()));
        }
        let parts: Vec<(f64, TrajectoryClassifier)> = batch
            .par_iter()
            .map(|t| self.trajectory_loss_and_grad(t))
            .collect::<Result<_>>()?;
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            grads.accumulate(g);
        }
        let scale = 1.0 / batch.len() as f64;
        grads.scale(scale);
        Ok((loss * scale, grads))
    }

    /// One Adam step on the mean final-step loss. Returns the pre-update loss.
    pub fn train_batch(&mut self, batch: &[&Trajectory], adam: &mut Adam) -> Result<f64> {
        let (loss, grads) = self.batch_loss_and_grad(batch)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!("classifier loss is {loss}")));
        }
        adam.step(self, &grads)?;
        Ok(loss)
    }

    /// Shuffled mini-batch training for `epochs` passes. Returns the mean
    /// pre-update batch loss over all updates.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        data: &[Trajectory],
        adam: &mut Adam,
        epochs: usize,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Training("no trajectories to train on".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut total = 0.0;
        let mut updates = 0;
        for _ in 0..epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch_size.max(1)) {
                let batch: Vec<&Trajectory> = chunk.iter().map(|&i| &data[i]).collect();
                total += self.train_batch(&batch, adam)?;
                updates += 1;
            }
        }
        Ok(total / updates.max(1) as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND)
            .with_meta("grid_width", self.width)
            .with_meta("grid_height", self.height)
            .with_meta("hidden_size", self.hidden_size())
            .with_meta("num_classes", NUM_CLASSES);
        self.export_tensors(&mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::format("checkpoint", format!("expected kind {CHECKPOINT_KIND}, found {}", ck.kind)));
        }
        let mut model = Self::zeros(
            ck.meta_parse("grid_width")?,
            ck.meta_parse("grid_height")?,
            ck.meta_parse("hidden_size")?,
        );
        model.import_tensors(ck)?;
        Ok(model)
    }
}

impl Parameters for TrajectoryClassifier {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v = prefixed("lstm", self.lstm.named_tensors());
        v.extend(prefixed("head", self.head.named_tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.lstm.tensors_mut();
        v.extend(self.head.tensors_mut());
        v
    }
}
