//! PPO actor-critic for the probing policy.
//!
//! The policy observes only the current state encoding. Its reward comes from
//! a frozen classifier: by default, the prefix posterior probability of the
//! true opponent class after each move.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{encode_step, ClassPosterior};
use crate::error::{Error, Result};
use crate::grid_env::{Action, StateEncoding, NUM_CODES};
use crate::nn::{log_softmax, prefixed, softmax, Activation, Adam, Checkpoint, DenseCache, DenseLayer, Parameters, Tensor};
use crate::rollout::{EpisodeRecord, EpisodeRng, PolicyStep, ProbePolicy};

pub const CHECKPOINT_KIND: &str = "policy-value-net";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// `r_t = p_t(true class)`, dense and bounded in [0, 1].
    #[default]
    PosteriorProb,
    /// 1 on the last step if the final prediction is correct, else 0.
    TerminalAccuracy,
    /// `r_t = ln p_t(true class)`, the negated per-step cross-entropy.
    NegativeError,
}

/// Reward read off one posterior row.
pub fn reward_from_posterior(row: &[f64], true_class: usize) -> f64 {
    row[true_class]
}

/// Per-move rewards for an episode. `posterior` has `T + 1` rows; move `t`
/// is rewarded from row `t + 1`, the first row that has seen its outcome.
pub fn episode_rewards(posterior: &ClassPosterior, true_class: usize, mode: RewardMode) -> Vec<f64> {
    let steps = posterior.len().saturating_sub(1);
    match mode {
        RewardMode::PosteriorProb => posterior.rows[1..]
            .iter()
            .map(|row| reward_from_posterior(row, true_class))
            .collect(),
        RewardMode::NegativeError => posterior.rows[1..]
            .iter()
            .map(|row| row[true_class].max(1e-12).ln())
            .collect(),
        RewardMode::TerminalAccuracy => {
            let mut r = vec![0.0; steps];
            if let Some(last) = r.last_mut() {
                *last = if posterior.final_prediction() == true_class { 1.0 } else { 0.0 };
            }
            r
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub update_epochs: usize,
    pub minibatch: usize,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    pub lr: f64,
    pub hidden_size: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            update_epochs: 4,
            minibatch: 256,
            value_coeff: 0.5,
            entropy_coeff: 0.01,
            lr: 0.001,
            hidden_size: 64,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |name: &str, msg: String| Err(Error::Config(format!("ppo.{name}: {msg}")));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return err("clip_epsilon", format!("must lie in (0, 1), got {}", self.clip_epsilon));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return err("gamma", format!("must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return err("gae_lambda", format!("must lie in [0, 1], got {}", self.gae_lambda));
        }
        if self.update_epochs == 0 {
            return err("update_epochs", "must be at least 1".into());
        }
        if self.minibatch == 0 {
            return err("minibatch", "must be at least 1".into());
        }
        if !(self.value_coeff >= 0.0 && self.value_coeff.is_finite()) {
            return err("value_coeff", format!("must be non-negative, got {}", self.value_coeff));
        }
        if !(self.entropy_coeff >= 0.0 && self.entropy_coeff.is_finite()) {
            return err("entropy_coeff", format!("must be non-negative, got {}", self.entropy_coeff));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return err("lr", format!("must be positive, got {}", self.lr));
        }
        if self.hidden_size == 0 {
            return err("hidden_size", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Shared two-layer tanh trunk with separate policy and value heads.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    pub trunk: [DenseLayer; 2],
    pub policy_head: DenseLayer,
    pub value_head: DenseLayer,
}

struct NetCache {
    trunk: [DenseCache; 2],
    policy: DenseCache,
    value: DenseCache,
}

impl PolicyValueNet {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        PolicyValueNet {
            trunk: [
                DenseLayer::new(inputs, hidden, Activation::Tanh, rng),
                DenseLayer::new(hidden, hidden, Activation::Tanh, rng),
            ],
            policy_head: DenseLayer::new(hidden, Action::COUNT, Activation::Identity, rng),
            value_head: DenseLayer::new(hidden, 1, Activation::Identity, rng),
        }
    }

    /// Net for `width x height` grids, observed as per-cell one-hots.
    pub fn for_grid<R: Rng + ?Sized>(width: usize, height: usize, hidden: usize, rng: &mut R) -> Self {
        Self::new(width * height * NUM_CODES, hidden, rng)
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        PolicyValueNet {
            trunk: [
                DenseLayer::zeros(inputs, hidden, Activation::Tanh),
                DenseLayer::zeros(hidden, hidden, Activation::Tanh),
            ],
            policy_head: DenseLayer::zeros(hidden, Action::COUNT, Activation::Identity),
            value_head: DenseLayer::zeros(hidden, 1, Activation::Identity),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.hidden())
    }

    pub fn inputs(&self) -> usize {
        self.trunk[0].inputs()
    }

    pub fn hidden(&self) -> usize {
        self.trunk[0].outputs()
    }

    /// `(policy logits, value)` for an encoded observation.
    pub fn evaluate(&self, obs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let h = self.trunk[1].infer(&self.trunk[0].infer(obs)?)?;
        Ok((self.policy_head.infer(&h)?, self.value_head.infer(&h)?[0]))
    }

    fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, f64, NetCache)> {
        let (h1, c1) = self.trunk[0].forward(obs)?;
        let (h2, c2) = self.trunk[1].forward(&h1)?;
        let (logits, cp) = self.policy_head.forward(&h2)?;
        let (value, cv) = self.value_head.forward(&h2)?;
        Ok((
            logits,
            value[0],
            NetCache {
                trunk: [c1, c2],
                policy: cp,
                value: cv,
            },
        ))
    }

    fn backward(&self, cache: &NetCache, dlogits: &[f64], dvalue: f64, grads: &mut PolicyValueNet) -> Result<()> {
        let mut dh = self.policy_head.backward(&cache.policy, dlogits, &mut grads.policy_head)?;
        let dh_v = self.value_head.backward(&cache.value, &[dvalue], &mut grads.value_head)?;
        for (a, b) in dh.iter_mut().zip(dh_v) {
            *a += b;
        }
        let [g0, g1] = &mut grads.trunk;
        let dh1 = self.trunk[1].backward(&cache.trunk[1], &dh, g1)?;
        self.trunk[0].backward(&cache.trunk[0], &dh1, g0)?;
        Ok(())
    }

    pub fn action_probs(&self, obs: &StateEncoding) -> Result<Vec<f64>> {
        Ok(softmax(&self.evaluate(&encode_step(obs))?.0))
    }

    /// Samples an action from the policy and reports its log-probability and
    /// the value estimate. Consumes one uniform variate.
    pub fn act(&self, obs: &StateEncoding, rng: &mut EpisodeRng) -> Result<PolicyStep> {
        let (logits, value) = self.evaluate(&encode_step(obs))?;
        let log_probs = log_softmax(&logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut choice = Action::COUNT - 1;
        for (i, lp) in log_probs.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                choice = i;
                break;
            }
        }
        Ok(PolicyStep {
            action: Action::ALL[choice],
            log_prob: log_probs[choice],
            value,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND)
            .with_meta("inputs", self.inputs())
            .with_meta("hidden", self.hidden());
        self.export_tensors(&mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::format("checkpoint", format!("expected kind {CHECKPOINT_KIND}, found {}", ck.kind)));
        }
        let mut net = Self::zeros(ck.meta_parse("inputs")?, ck.meta_parse("hidden")?);
        net.import_tensors(ck)?;
        Ok(net)
    }
}

impl Parameters for PolicyValueNet {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v = prefixed("trunk0", self.trunk[0].named_tensors());
        v.extend(prefixed("trunk1", self.trunk[1].named_tensors()));
        v.extend(prefixed("policy", self.policy_head.named_tensors()));
        v.extend(prefixed("value", self.value_head.named_tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let [t0, t1] = &mut self.trunk;
        let mut v = t0.tensors_mut();
        v.extend(t1.tensors_mut());
        v.extend(self.policy_head.tensors_mut());
        v.extend(self.value_head.tensors_mut());
        v
    }
}

impl ProbePolicy for PolicyValueNet {
    fn act(&self, obs: &StateEncoding, rng: &mut EpisodeRng) -> Result<PolicyStep> {
        PolicyValueNet::act(self, obs, rng)
    }
}

/// Flat per-step storage for one PPO update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Exclusive end index of each episode.
    pub episode_ends: Vec<usize>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push_episode(&mut self, record: &EpisodeRecord, rewards: &[f64]) -> Result<()> {
        let steps = record.steps.len();
        if rewards.len() != steps {
            return Err(Error::Dimension(format!("{} rewards for {steps} steps", rewards.len())));
        }
        for (t, step) in record.steps.iter().enumerate() {
            self.obs.push(encode_step(&record.trajectory.states[t]));
            self.actions.push(step.action);
            self.log_probs.push(step.log_prob);
            self.values.push(step.value);
        }
        self.rewards.extend_from_slice(rewards);
        self.advantages.clear();
        self.returns.clear();
        self.episode_ends.push(self.actions.len());
        Ok(())
    }

    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            0.0
        } else {
            self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
        }
    }
}

/// Generalised advantage estimation per episode, with a zero bootstrap after
/// the last step. Fills `advantages` (raw, not normalised) and `returns`.
pub fn compute_gae(buffer: &mut RolloutBuffer, config: &PpoConfig) -> Result<()> {
    if buffer.is_empty() {
        return Err(Error::Training("cannot compute advantages for an empty buffer".into()));
    }
    let n = buffer.len();
    if buffer.rewards.len() != n || buffer.values.len() != n {
        return Err(Error::Dimension("rewards and values must match the step count".into()));
    }
    let mut advantages = vec![0.0; n];
    let mut start = 0;
    for &end in &buffer.episode_ends {
        let mut next_adv = 0.0;
        let mut next_value = 0.0;
        for t in (start..end).rev() {
            let delta = buffer.rewards[t] + config.gamma * next_value - buffer.values[t];
            next_adv = delta + config.gamma * config.gae_lambda * next_adv;
            advantages[t] = next_adv;
            next_value = buffer.values[t];
        }
        start = end;
    }
    buffer.returns = advantages.iter().zip(&buffer.values).map(|(a, v)| a + v).collect();
    buffer.advantages = advantages;
    Ok(())
}

/// Zero-mean, unit-variance copy of the advantages.
pub fn normalize_advantages(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    advantages.iter().map(|a| (a - mean) / std).collect()
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)`
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    /// Share of samples whose ratio left `[1−ε, 1+ε]`.
    pub clip_fraction: f64,
    pub updates: usize,
}

/// PPO loss on one minibatch and its gradient.
///
/// `total = policy + value_coeff·value − entropy_coeff·entropy`, each term a
/// mean over the minibatch.
pub fn ppo_loss_and_grad(
    net: &PolicyValueNet,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    indices: &[usize],
    config: &PpoConfig,
) -> Result<(PpoDiagnostics, PolicyValueNet)> {
    let n = indices.len() as f64;
    let mut grads = net.zeros_like();
    let mut d = PpoDiagnostics::default();
    let mut clipped = 0usize;
    for &i in indices {
        let (logits, value, cache) = net.forward(&buffer.obs[i])?;
        let log_probs = log_softmax(&logits);
        let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
        let a = buffer.actions[i].index();
        let ratio = (log_probs[a] - buffer.log_probs[i]).exp();
        let adv = advantages[i];
        let surrogate = clipped_surrogate(ratio, adv, config.clip_epsilon);
        if (ratio - 1.0).abs() > config.clip_epsilon {
            clipped += 1;
        }
        let entropy: f64 = -probs.iter().zip(&log_probs).map(|(p, l)| p * l).sum::<f64>();
        let value_err = value - buffer.returns[i];

        d.policy_loss -= surrogate / n;
        d.value_loss += value_err * value_err / n;
        d.entropy += entropy / n;

        // gradient flows through the unclipped branch only when it is the minimum
        let dlogp = if ratio * adv <= ratio.clamp(1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * adv {
            -ratio * adv / n
        } else {
            0.0
        };
        let dlogits: Vec<f64> = (0..probs.len())
            .map(|j| {
                let onehot = if j == a { 1.0 } else { 0.0 };
                dlogp * (onehot - probs[j]) + config.entropy_coeff / n * probs[j] * (log_probs[j] + entropy)
            })
            .collect();
        let dvalue = 2.0 * config.value_coeff * value_err / n;
        net.backward(&cache, &dlogits, dvalue, &mut grads)?;
    }
    d.total_loss = d.policy_loss + config.value_coeff * d.value_loss - config.entropy_coeff * d.entropy;
    d.clip_fraction = clipped as f64 / n;
    d.updates = 1;
    Ok((d, grads))
}

/// `update_epochs` passes of shuffled minibatch Adam steps over the buffer.
/// Advantages are normalised once over the whole buffer. Returned diagnostics
/// are averages over all minibatches.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut PolicyValueNet,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    adam: &mut Adam,
    rng: &mut R,
) -> Result<PpoDiagnostics> {
    if buffer.is_empty() {
        return Err(Error::Training("empty rollout buffer".into()));
    }
    if buffer.advantages.len() != buffer.len() || buffer.returns.len() != buffer.len() {
        return Err(Error::Sequencing("advantages must be computed before a PPO update".into()));
    }
    let advantages = normalize_advantages(&buffer.advantages);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut total = PpoDiagnostics::default();
    for _ in 0..config.update_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch) {
            let (d, grads) = ppo_loss_and_grad(net, buffer, &advantages, chunk, config)?;
            if !d.total_loss.is_finite() {
                return Err(Error::Training(format!("PPO loss is {}", d.total_loss)));
            }
            adam.step(net, &grads)?;
            total.policy_loss += d.policy_loss;
            total.value_loss += d.value_loss;
            total.entropy += d.entropy;
            total.total_loss += d.total_loss;
            total.clip_fraction += d.clip_fraction;
            total.updates += 1;
        }
    }
    let k = total.updates as f64;
    total.policy_loss /= k;
    total.value_loss /= k;
    total.entropy /= k;
    total.total_loss /= k;
    total.clip_fraction /= k;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_env::GridMap;
    use crate::nn::{gradient_check, AdamConfig, FD_STEP};
    use crate::opponent_zoo::OpponentClass;
    use crate::rollout::{collect_episodes, episode_rng, EnvSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_obs() -> StateEncoding {
        let mut cells = vec![0u8; 16];
        cells[5] = 1;
        cells[0] = 2;
        cells[10] = 3;
        StateEncoding::from_cells(4, 4, cells).unwrap()
    }

    #[test]
    fn zero_net_is_uniform() {
        let net = PolicyValueNet::zeros(64, 8);
        let step = net.act(&sample_obs(), &mut episode_rng(0, 0)).unwrap();
        assert!((step.log_prob - 0.25f64.ln()).abs() < 1e-15);
        assert_eq!(step.value, 0.0);
    }

    #[test]
    fn sampling_matches_softmax() {
        let net = PolicyValueNet::new(64, 16, &mut ChaCha8Rng::seed_from_u64(3));
        let obs = sample_obs();
        let probs = net.action_probs(&obs).unwrap();
        let mut rng = episode_rng(1, 0);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[net.act(&obs, &mut rng).unwrap().action.index()] += 1;
        }
        for k in 0..4 {
            assert!((counts[k] as f64 / n as f64 - probs[k]).abs() < 0.02);
        }
        let a = net.act(&obs, &mut episode_rng(9, 2)).unwrap();
        let b = net.act(&obs, &mut episode_rng(9, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn posterior_rewards() {
        assert!((reward_from_posterior(&[1.0 / 9.0; 9], 3) - 1.0 / 9.0).abs() < 1e-15);
        let mut peaked = vec![1e-6; 9];
        peaked[2] = 1.0 - 8e-6;
        assert!(reward_from_posterior(&peaked, 2) > 0.9999);
        let post = ClassPosterior {
            rows: vec![vec![0.5, 0.5], vec![0.2, 0.8], vec![0.9, 0.1]],
        };
        assert_eq!(episode_rewards(&post, 1, RewardMode::PosteriorProb), vec![0.8, 0.1]);
        assert_eq!(episode_rewards(&post, 0, RewardMode::TerminalAccuracy), vec![0.0, 1.0]);
        let neg = episode_rewards(&post, 1, RewardMode::NegativeError);
        assert!((neg[0] - 0.8f64.ln()).abs() < 1e-15);
    }

    fn buffer_from(rewards: &[f64], values: &[f64]) -> RolloutBuffer {
        RolloutBuffer {
            obs: vec![vec![0.0; 4]; rewards.len()],
            actions: vec![Action::Left; rewards.len()],
            log_probs: vec![0.0; rewards.len()],
            values: values.to_vec(),
            rewards: rewards.to_vec(),
            episode_ends: vec![rewards.len()],
            ..Default::default()
        }
    }

    #[test]
    fn gae_closed_forms() {
        let unit = PpoConfig {
            gamma: 1.0,
            gae_lambda: 1.0,
            ..Default::default()
        };
        let mut b = buffer_from(&[0.7], &[0.0]);
        compute_gae(&mut b, &unit).unwrap();
        assert_eq!(b.advantages, vec![0.7]);

        let myopic = PpoConfig {
            gamma: 0.0,
            ..Default::default()
        };
        let mut b = buffer_from(&[1.0, 0.0, 0.5], &[0.2, 0.4, 0.1]);
        compute_gae(&mut b, &myopic).unwrap();
        for t in 0..3 {
            assert!((b.advantages[t] - (b.rewards[t] - b.values[t])).abs() < 1e-15);
        }
        assert!(compute_gae(&mut RolloutBuffer::default(), &myopic).is_err());
    }

    #[test]
    fn gae_three_step_hand_example() {
        let cfg = PpoConfig {
            gamma: 0.9,
            gae_lambda: 0.8,
            ..Default::default()
        };
        let mut b = buffer_from(&[1.0, 0.0, 1.0], &[0.5, 0.5, 0.5]);
        compute_gae(&mut b, &cfg).unwrap();
        // δ2 = 1 − 0.5 = 0.5; δ1 = 0 + 0.45 − 0.5 = −0.05; δ0 = 1 + 0.45 − 0.5 = 0.95
        // A2 = 0.5; A1 = −0.05 + 0.72·0.5 = 0.31; A0 = 0.95 + 0.72·0.31 = 1.1732
        let expected = [1.1732, 0.31, 0.5];
        for (t, e) in expected.iter().enumerate() {
            assert!((b.advantages[t] - e).abs() < 1e-12, "{:?}", b.advantages);
            assert!((b.returns[t] - (e + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_resets_between_episodes() {
        let cfg = PpoConfig::default();
        let mut b = buffer_from(&[1.0, 1.0], &[0.0, 0.0]);
        b.episode_ends = vec![1, 2];
        compute_gae(&mut b, &cfg).unwrap();
        assert_eq!(b.advantages, vec![1.0, 1.0]);
    }

    #[test]
    fn surrogate_clipping() {
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), 0.7);
        assert!((clipped_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
        // clip does not bind on the pessimistic side
        assert!((clipped_surrogate(0.5, 1.0, 0.2) - 0.5).abs() < 1e-15);
    }

    fn small_buffer(net: &PolicyValueNet, steps: usize, seed: u64) -> RolloutBuffer {
        let env = EnvSpec::new(GridMap::default_map(), steps, 0.7).unwrap();
        let recs = collect_episodes(&env, net, &OpponentClass::ALL, 1, seed, 0).unwrap();
        let mut buf = RolloutBuffer::default();
        let rewards: Vec<f64> = (0..steps).map(|t| 0.1 * t as f64).collect();
        buf.push_episode(&recs[0], &rewards).unwrap();
        compute_gae(&mut buf, &PpoConfig::default()).unwrap();
        buf
    }

    #[test]
    fn first_pass_ratio_is_one() {
        let net = PolicyValueNet::new(64, 16, &mut ChaCha8Rng::seed_from_u64(1));
        let buf = small_buffer(&net, 16, 1);
        let adv = normalize_advantages(&buf.advantages);
        let idx: Vec<usize> = (0..buf.len()).collect();
        let (d, _) = ppo_loss_and_grad(&net, &buf, &adv, &idx, &PpoConfig::default()).unwrap();
        assert_eq!(d.clip_fraction, 0.0);
        // with ratio 1 the surrogate is mean(A), which is zero after normalisation
        assert!(d.policy_loss.abs() < 1e-9);
    }

    #[test]
    fn ppo_loss_gradient_matches_finite_differences() {
        let mut net = PolicyValueNet::new(64, 8, &mut ChaCha8Rng::seed_from_u64(2));
        let buf = small_buffer(&net, 4, 2);
        // move away from the collection point so ratios differ from 1 but stay unclipped
        for t in net.tensors_mut() {
            for v in t.data_mut() {
                *v *= 1.01;
            }
        }
        let adv = normalize_advantages(&buf.advantages);
        let idx: Vec<usize> = (0..buf.len()).collect();
        let cfg = PpoConfig::default();
        let report = gradient_check(
            |p| {
                let mut m = net.clone();
                m.assign_flat(p).unwrap();
                let (d, g) = ppo_loss_and_grad(&m, &buf, &adv, &idx, &cfg).unwrap();
                (d.total_loss, g.flatten())
            },
            &net.flatten(),
            FD_STEP,
            1e-4,
        );
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn update_reports_bounded_diagnostics() {
        let mut net = PolicyValueNet::new(64, 16, &mut ChaCha8Rng::seed_from_u64(4));
        let buf = small_buffer(&net, 32, 4);
        let cfg = PpoConfig {
            minibatch: 8,
            ..Default::default()
        };
        let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), &net);
        let d = ppo_update(&mut net, &buf, &cfg, &mut adam, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(d.updates, 16);
        assert!(d.clip_fraction < 1.0);
        assert!(d.entropy >= 0.0 && d.entropy <= 4f64.ln() + 1e-12);
    }

    #[test]
    fn update_requires_advantages() {
        let mut net = PolicyValueNet::new(64, 8, &mut ChaCha8Rng::seed_from_u64(4));
        let mut buf = small_buffer(&net, 4, 4);
        buf.advantages.clear();
        let mut adam = Adam::new(AdamConfig::default(), &net);
        let err = ppo_update(&mut net, &buf, &PpoConfig::default(), &mut adam, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Sequencing(_))));
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = PpoConfig {
            clip_epsilon: 1.5,
            ..Default::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("clip_epsilon"), "{msg}");
        assert!(PpoConfig::default().validate().is_ok());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = PolicyValueNet::new(64, 8, &mut ChaCha8Rng::seed_from_u64(5));
        let ck = Checkpoint::from_bytes(&net.to_checkpoint().to_bytes().unwrap()).unwrap();
        assert_eq!(PolicyValueNet::from_checkpoint(&ck).unwrap(), net);
    }
}
