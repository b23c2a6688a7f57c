//! Alternating classifier / probe-agent training.
//!
//! Rounds strictly alternate, starting with the classifier: in a classifier
//! round only the classifier is updated, in an agent round only the policy.
//! The frozen side is never touched.

mod eval;
mod oracle;

pub use eval::{
    confusion_for, evaluate, evaluation_episodes, mean_final_cross_entropy, prediction_within, prefix_accuracy,
    BayesOracle, EvalReport,
    LabelPassThrough, TrajectoryPredictor,
};
pub use oracle::bayes_oracle_posterior;

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierConfig, Trajectory, TrajectoryClassifier};
use crate::error::{Error, Result};
use crate::grid_env::{GridMap, DEFAULT_EPISODE_LENGTH};
use crate::nn::{Adam, AdamConfig, Checkpoint};
use crate::opponent_zoo::{validate_primary_weight, OpponentClass, DEFAULT_PRIMARY_WEIGHT};
use crate::probe_agent::{compute_gae, episode_rewards, ppo_update, PolicyValueNet, PpoConfig, RewardMode, RolloutBuffer};
use crate::rollout::{collect_episodes, EnvSpec, ProbePolicy, UniformPolicy};

pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "round,phase,classifier_loss,classifier_acc,mean_reward,clip_fraction,wall_ms";

// rng stream ids; episode streams count up from zero
const STREAM_INIT: u64 = 1 << 62;
const STREAM_CLASSIFIER: u64 = STREAM_INIT + 1;
const STREAM_PPO: u64 = STREAM_INIT + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    DetOnly,
    DetPlusStoch,
    /// Uniform-random probe; the policy is never trained.
    RandomProbeBaseline,
}

impl Variant {
    pub fn default_class_ids(self) -> Vec<usize> {
        match self {
            Variant::DetOnly => (0..4).collect(),
            Variant::DetPlusStoch | Variant::RandomProbeBaseline => (0..9).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::DetOnly => "DET_ONLY",
            Variant::DetPlusStoch => "DET_PLUS_STOCH",
            Variant::RandomProbeBaseline => "RANDOM_PROBE_BASELINE",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DET_ONLY" => Ok(Variant::DetOnly),
            "DET_PLUS_STOCH" => Ok(Variant::DetPlusStoch),
            "RANDOM_PROBE_BASELINE" => Ok(Variant::RandomProbeBaseline),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Where the board layout comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSpec {
    /// `"default"` or `"empty"` (4x4).
    Named(String),
    Rows { rows: Vec<String> },
    File { file: PathBuf },
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec::Named("default".into())
    }
}

impl MapSpec {
    /// `base` resolves relative `file` paths.
    pub fn load(&self, base: Option<&Path>) -> Result<GridMap> {
        match self {
            MapSpec::Named(name) => match name.as_str() {
                "default" => Ok(GridMap::default_map()),
                "empty" => GridMap::empty(4, 4),
                other => Err(Error::Config(format!("map: unknown named map {other:?}"))),
            },
            MapSpec::Rows { rows } => GridMap::parse(&rows.join("\n")),
            MapSpec::File { file } => {
                let path = match base {
                    Some(b) if file.is_relative() => b.join(file),
                    _ => file.clone(),
                };
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                GridMap::parse(&text)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub variant: Variant,
    /// Defaults to the variant's class set.
    #[serde(default)]
    pub class_set: Option<Vec<usize>>,
    #[serde(default = "default_episode_length")]
    pub episode_length: usize,
    #[serde(default = "default_episodes_per_round")]
    pub episodes_per_round: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub map: MapSpec,
    #[serde(default)]
    pub reward_mode: RewardMode,
    #[serde(default = "default_primary_weight")]
    pub primary_weight: f64,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    /// Write intermediate checkpoints every this many rounds; 0 disables.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    /// Record real elapsed milliseconds in `wall_ms`. Off by default so that
    /// metrics files are reproducible byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_episode_length() -> usize {
    DEFAULT_EPISODE_LENGTH
}
fn default_episodes_per_round() -> usize {
    16
}
fn default_rounds() -> usize {
    500
}
fn default_primary_weight() -> f64 {
    DEFAULT_PRIMARY_WEIGHT
}
fn default_checkpoint_every() -> usize {
    50
}

impl ExperimentConfig {
    pub fn new(variant: Variant) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            variant,
            class_set: None,
            episode_length: default_episode_length(),
            episodes_per_round: default_episodes_per_round(),
            rounds: default_rounds(),
            seed: 0,
            map: MapSpec::default(),
            reward_mode: RewardMode::default(),
            primary_weight: DEFAULT_PRIMARY_WEIGHT,
            ppo: PpoConfig::default(),
            classifier: ClassifierConfig::default(),
            checkpoint_every: default_checkpoint_every(),
            record_wall_time: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Snapshot with every default filled in.
    pub fn to_json(&self) -> String {
        let mut snapshot = self.clone();
        snapshot.class_set = Some(self.class_ids());
        serde_json::to_string_pretty(&snapshot).expect("config serialises") + "\n"
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.class_set.clone().unwrap_or_else(|| self.variant.default_class_ids())
    }

    pub fn classes(&self) -> Vec<OpponentClass> {
        self.class_ids()
            .into_iter()
            .filter_map(OpponentClass::from_id)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        let ids = self.class_ids();
        if ids.is_empty() {
            return Err(Error::Config("class_set: must not be empty".into()));
        }
        if let Some(bad) = ids.iter().find(|&&i| OpponentClass::from_id(i).is_none()) {
            return Err(Error::Config(format!("class_set: class id {bad} out of range 0..9")));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(Error::Config("class_set: duplicate class ids".into()));
        }
        if matches!(self.variant, Variant::DetOnly | Variant::DetPlusStoch) && sorted != self.variant.default_class_ids() {
            return Err(Error::Config(format!(
                "class_set: {} requires classes {:?}",
                self.variant.name(),
                self.variant.default_class_ids()
            )));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length: must be at least 1".into()));
        }
        if self.episodes_per_round == 0 {
            return Err(Error::Config("episodes_per_round: must be at least 1".into()));
        }
        validate_primary_weight(self.primary_weight).map_err(|e| Error::Config(format!("primary_weight: {e}")))?;
        self.ppo.validate()?;
        self.classifier.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Classifier,
    Agent,
}

impl Phase {
    /// Round 0 trains the classifier, round 1 the agent, and so on.
    pub fn for_round(round: usize) -> Phase {
        if round.is_multiple_of(2) {
            Phase::Classifier
        } else {
            Phase::Agent
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Classifier => "CLASSIFIER",
            Phase::Agent => "AGENT",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CLASSIFIER" => Ok(Phase::Classifier),
            "AGENT" => Ok(Phase::Agent),
            other => Err(Error::Config(format!("unknown phase {other:?}"))),
        }
    }
}

/// One row of `metrics.csv`. Loss, accuracy and reward are measured with the
/// pre-update classifier on the round's freshly collected episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub phase: Phase,
    pub classifier_loss: f64,
    pub classifier_acc: f64,
    pub mean_reward: f64,
    /// PPO clip fraction; zero for classifier rounds and the random baseline.
    pub clip_fraction: f64,
    pub wall_ms: u64,
}

impl RoundMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.round,
            self.phase,
            self.classifier_loss,
            self.classifier_acc,
            self.mean_reward,
            self.clip_fraction,
            self.wall_ms
        )
    }
}

/// Parses a metrics file produced by [`run_experiment`]. Errors name the
/// 1-based data row.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<RoundMetrics>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::format("metrics csv", format!("header: {e}")))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != METRICS_HEADER {
        return Err(Error::format("metrics csv", format!("header is {header:?}, expected {METRICS_HEADER:?}")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::format("metrics csv", format!("row {row}: {e}")))?;
        let bad = |field: &str, value: &str| Error::format("metrics csv", format!("row {row}: bad {field} {value:?}"));
        let num = |k: usize, name: &str| -> Result<f64> {
            let v = &record[k];
            v.trim().parse::<f64>().ok().filter(|x| !x.is_nan()).ok_or_else(|| bad(name, v))
        };
        rows.push(RoundMetrics {
            round: record[0].trim().parse().map_err(|_| bad("round", &record[0]))?,
            phase: record[1].trim().parse().map_err(|_| bad("phase", &record[1]))?,
            classifier_loss: num(2, "classifier_loss")?,
            classifier_acc: num(3, "classifier_acc")?,
            mean_reward: num(4, "mean_reward")?,
            clip_fraction: num(5, "clip_fraction")?,
            wall_ms: record[6].trim().parse().map_err(|_| bad("wall_ms", &record[6]))?,
        });
    }
    if rows.is_empty() {
        return Err(Error::format("metrics csv", "no data rows"));
    }
    Ok(rows)
}

/// Mutable training state for one run.
pub struct Experiment {
    config: ExperimentConfig,
    env: EnvSpec,
    classes: Vec<OpponentClass>,
    classifier: TrajectoryClassifier,
    classifier_adam: Adam,
    policy: PolicyValueNet,
    policy_adam: Adam,
    classifier_rng: ChaCha8Rng,
    ppo_rng: ChaCha8Rng,
    replay: VecDeque<Trajectory>,
    round: usize,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        Self::with_map_base(config, None)
    }

    /// `map_base` resolves a relative map file path.
    pub fn with_map_base(config: ExperimentConfig, map_base: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let map = config.map.load(map_base)?;
        let env = EnvSpec::new(map, config.episode_length, config.primary_weight)?;
        let (w, h) = (env.map.width(), env.map.height());
        let mut init = crate::rollout::episode_rng(config.seed, STREAM_INIT);
        let classifier = TrajectoryClassifier::new(w, h, config.classifier.hidden_size, &mut init);
        let policy = PolicyValueNet::for_grid(w, h, config.ppo.hidden_size, &mut init);
        Ok(Experiment {
            classifier_adam: Adam::new(AdamConfig::with_lr(config.classifier.lr), &classifier),
            policy_adam: Adam::new(AdamConfig::with_lr(config.ppo.lr), &policy),
            classifier_rng: crate::rollout::episode_rng(config.seed, STREAM_CLASSIFIER),
            ppo_rng: crate::rollout::episode_rng(config.seed, STREAM_PPO),
            replay: VecDeque::new(),
            classes: config.classes(),
            classifier,
            policy,
            env,
            config,
            round: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn env(&self) -> &EnvSpec {
        &self.env
    }

    pub fn classes(&self) -> &[OpponentClass] {
        &self.classes
    }

    pub fn classifier(&self) -> &TrajectoryClassifier {
        &self.classifier
    }

    pub fn policy(&self) -> &PolicyValueNet {
        &self.policy
    }

    pub fn rounds_done(&self) -> usize {
        self.round
    }

    /// Policy used to collect episodes: the learned net, or uniform for the baseline.
    pub fn behavior_policy(&self) -> &dyn ProbePolicy {
        match self.config.variant {
            Variant::RandomProbeBaseline => &UniformPolicy,
            _ => &self.policy,
        }
    }

    fn collect(&self) -> Result<Vec<crate::rollout::EpisodeRecord>> {
        let n = self.config.episodes_per_round;
        collect_episodes(
            &self.env,
            self.behavior_policy(),
            &self.classes,
            n,
            self.config.seed,
            (self.round * n) as u64,
        )
    }

    /// Runs the next round in the alternation.
    pub fn step(&mut self) -> Result<RoundMetrics> {
        self.run_round(Phase::for_round(self.round))
    }

    /// Collects `episodes_per_round` episodes and updates exactly one side.
    pub fn run_round(&mut self, phase: Phase) -> Result<RoundMetrics> {
        use rayon::prelude::*;
        let start = Instant::now();
        let records = self.collect()?;
        let posteriors = records
            .par_iter()
            .map(|r| self.classifier.classify(&r.trajectory))
            .collect::<Result<Vec<_>>>()?;

        let n = records.len() as f64;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (r, post) in records.iter().zip(&posteriors) {
            let label = r.trajectory.label.id();
            loss -= post.final_row()[label].max(1e-300).ln();
            if post.final_prediction() == label {
                correct += 1;
            }
        }
        let rewards: Vec<Vec<f64>> = records
            .iter()
            .zip(&posteriors)
            .map(|(r, post)| episode_rewards(post, r.trajectory.label.id(), self.config.reward_mode))
            .collect();
        let reward_steps: usize = rewards.iter().map(Vec::len).sum();
        let mean_reward = rewards.iter().flatten().sum::<f64>() / reward_steps.max(1) as f64;

        let mut clip_fraction = 0.0;
        let capacity = self.config.classifier.replay_episodes;
        if capacity > 0 {
            self.replay.extend(records.iter().map(|r| r.trajectory.clone()));
            while self.replay.len() > capacity {
                self.replay.pop_front();
            }
        }
        match phase {
            Phase::Classifier => {
                let data: Vec<Trajectory> = if capacity > 0 {
                    self.replay.iter().cloned().collect()
                } else {
                    records.into_iter().map(|r| r.trajectory).collect()
                };
                self.classifier.fit(
                    &data,
                    &mut self.classifier_adam,
                    self.config.classifier.epochs_per_round,
                    self.config.classifier.batch_size,
                    &mut self.classifier_rng,
                )?;
            }
            Phase::Agent => {
                if self.config.variant != Variant::RandomProbeBaseline {
                    let mut buffer = RolloutBuffer::default();
                    for (r, rw) in records.iter().zip(&rewards) {
                        buffer.push_episode(r, rw)?;
                    }
                    compute_gae(&mut buffer, &self.config.ppo)?;
                    let diag = ppo_update(
                        &mut self.policy,
                        &buffer,
                        &self.config.ppo,
                        &mut self.policy_adam,
                        &mut self.ppo_rng,
                    )?;
                    clip_fraction = diag.clip_fraction;
                }
            }
        }
        let metrics = RoundMetrics {
            round: self.round,
            phase,
            classifier_loss: loss / n,
            classifier_acc: correct as f64 / n,
            mean_reward,
            clip_fraction,
            wall_ms: if self.config.record_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        self.round += 1;
        Ok(metrics)
    }

    fn checkpoint_meta(&self, ck: Checkpoint) -> Checkpoint {
        let ids: Vec<String> = self.classes.iter().map(|c| c.id().to_string()).collect();
        ck.with_meta("variant", self.config.variant.name())
            .with_meta("class_set", ids.join(","))
            .with_meta("map", self.env.map.to_text().replace('\n', "/"))
            .with_meta("episode_length", self.env.episode_length)
            .with_meta("primary_weight", self.env.primary_weight)
            .with_meta("round", self.round)
            .with_meta("seed", self.config.seed)
    }

    /// Writes `classifier.ckpt` and `policy.ckpt` into `dir`.
    pub fn save_checkpoints(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.checkpoint_meta(self.classifier.to_checkpoint())
            .write(&dir.join(CLASSIFIER_FILE))?;
        self.checkpoint_meta(self.policy.to_checkpoint())
            .write(&dir.join(POLICY_FILE))?;
        Ok(())
    }
}

pub const CLASSIFIER_FILE: &str = "classifier.ckpt";
pub const POLICY_FILE: &str = "policy.ckpt";

/// Everything needed to evaluate or replay a saved run.
pub struct LoadedRun {
    pub classifier: TrajectoryClassifier,
    pub policy: PolicyValueNet,
    pub variant: Variant,
    pub env: EnvSpec,
    pub classes: Vec<OpponentClass>,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> Result<Self> {
        let clf_ck = Checkpoint::read(&dir.join(CLASSIFIER_FILE))?;
        let pol_ck = Checkpoint::read(&dir.join(POLICY_FILE))?;
        let classifier = TrajectoryClassifier::from_checkpoint(&clf_ck)?;
        let policy = PolicyValueNet::from_checkpoint(&pol_ck)?;
        let map = GridMap::parse(&clf_ck.meta_str("map")?.replace('/', "\n"))?;
        let env = EnvSpec::new(map, clf_ck.meta_parse("episode_length")?, clf_ck.meta_parse("primary_weight")?)?;
        let classes = clf_ck
            .meta_str("class_set")?
            .split(',')
            .map(|s| s.parse::<OpponentClass>())
            .collect::<Result<Vec<_>>>()?;
        Ok(LoadedRun {
            classifier,
            policy,
            variant: clf_ck.meta_str("variant")?.parse()?,
            env,
            classes,
        })
    }

    pub fn behavior_policy(&self) -> &dyn ProbePolicy {
        match self.variant {
            Variant::RandomProbeBaseline => &UniformPolicy,
            _ => &self.policy,
        }
    }
}

pub struct ExperimentOutcome {
    pub history: Vec<RoundMetrics>,
    pub experiment: Experiment,
}

/// Runs every round. With `out_dir`, writes `config.json`, `metrics.csv`
/// (one row per round, flushed as it goes) and `checkpoints/`.
pub fn run_experiment(config: ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    run_experiment_with(config, out_dir, None, |_| {})
}

/// [`run_experiment`] with a map base directory and a per-round callback.
pub fn run_experiment_with(
    config: ExperimentConfig,
    out_dir: Option<&Path>,
    map_base: Option<&Path>,
    mut on_round: impl FnMut(&RoundMetrics),
) -> Result<ExperimentOutcome> {
    let mut experiment = Experiment::with_map_base(config, map_base)?;
    let mut metrics_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let cfg_path = dir.join("config.json");
            fs::write(&cfg_path, experiment.config.to_json()).map_err(|e| Error::io(&cfg_path, e))?;
            let path = dir.join("metrics.csv");
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{METRICS_HEADER}").map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };
    let rounds = experiment.config.rounds;
    let every = experiment.config.checkpoint_every;
    let mut history = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let m = experiment.step()?;
        if let Some((f, path)) = metrics_file.as_mut() {
            writeln!(f, "{}", m.csv_row()).map_err(|e| Error::io(path.as_path(), e))?;
        }
        on_round(&m);
        history.push(m);
        if let Some(dir) = out_dir {
            let done = experiment.rounds_done();
            if every > 0 && done % every == 0 && done < rounds {
                experiment.save_checkpoints(&dir.join("checkpoints").join(format!("round_{done:05}")))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        experiment.save_checkpoints(&dir.join("checkpoints").join("final"))?;
    }
    Ok(ExperimentOutcome { history, experiment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Parameters;

    fn smoke(variant: Variant) -> ExperimentConfig {
        ExperimentConfig {
            rounds: 4,
            episodes_per_round: 2,
            episode_length: 8,
            classifier: ClassifierConfig {
                hidden_size: 8,
                epochs_per_round: 2,
                ..Default::default()
            },
            ppo: PpoConfig {
                hidden_size: 8,
                ..Default::default()
            },
            ..ExperimentConfig::new(variant)
        }
    }

    #[test]
    fn phases_alternate() {
        let phases: Vec<Phase> = (0..6).map(Phase::for_round).collect();
        use Phase::*;
        assert_eq!(phases, vec![Classifier, Agent, Classifier, Agent, Classifier, Agent]);
    }

    #[test]
    fn frozen_side_is_untouched() {
        let mut exp = Experiment::new(smoke(Variant::DetPlusStoch)).unwrap();
        for _ in 0..4 {
            let clf = exp.classifier().flatten();
            let pol = exp.policy().flatten();
            let m = exp.step().unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            match m.phase {
                Phase::Agent => {
                    assert_eq!(bits(&clf), bits(&exp.classifier().flatten()));
                    assert_ne!(bits(&pol), bits(&exp.policy().flatten()));
                }
                Phase::Classifier => {
                    assert_eq!(bits(&pol), bits(&exp.policy().flatten()));
                    assert_ne!(bits(&clf), bits(&exp.classifier().flatten()));
                }
            }
        }
    }

    #[test]
    fn baseline_never_updates_policy() {
        let mut exp = Experiment::new(smoke(Variant::RandomProbeBaseline)).unwrap();
        let pol = exp.policy().clone();
        for _ in 0..4 {
            let m = exp.step().unwrap();
            assert_eq!(m.clip_fraction, 0.0);
        }
        assert_eq!(exp.policy(), &pol);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::from_json(r#"{"variant": "DET_ONLY"}"#).unwrap();
        assert_eq!(cfg.class_ids(), vec![0, 1, 2, 3]);
        assert_eq!((cfg.episode_length, cfg.episodes_per_round, cfg.rounds), (128, 16, 500));
        let err = ExperimentConfig::from_json(r#"{"variant": "DET_ONLY", "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"variant": "DET_ONLY", "class_set": [0, 1]}"#).unwrap_err();
        assert!(err.to_string().contains("class_set"));
        let err = ExperimentConfig::from_json(r#"{"variant": "DET_ONLY", "ppo": {"clip_epsilon": 1.5}}"#).unwrap_err();
        assert!(err.to_string().contains("clip_epsilon"));
        let err = ExperimentConfig::from_json(r#"{"variant": "DET_ONLY", "ppo": {"clip": 0.1}}"#).unwrap_err();
        assert!(err.to_string().contains("clip"));
        let snap = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(snap.class_set, Some(vec![0, 1, 2, 3]));
        assert!(ExperimentConfig::from_json(r#"{"variant": "RANDOM_PROBE_BASELINE", "class_set": [0,1,2,3]}"#).is_ok());
    }

    #[test]
    fn metrics_round_trip() {
        let m = RoundMetrics {
            round: 3,
            phase: Phase::Agent,
            classifier_loss: 0.5,
            classifier_acc: 0.75,
            mean_reward: 0.125,
            clip_fraction: 0.01,
            wall_ms: 0,
        };
        let text = format!("{METRICS_HEADER}\n{}\n", m.csv_row());
        assert_eq!(parse_metrics_csv(&text).unwrap(), vec![m]);
        let err = parse_metrics_csv(&format!("{METRICS_HEADER}\n0,CLASSIFIER,1,1,1,0,0\n1,AGENT,x,1,1,0,0\n")).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        assert!(parse_metrics_csv(&format!("{METRICS_HEADER}\n")).is_err());
        assert!(parse_metrics_csv(&format!("{METRICS_HEADER}\n0,CLASSIFIER,1\n")).is_err());
    }

    #[test]
    fn map_specs() {
        assert_eq!(MapSpec::Named("empty".into()).load(None).unwrap().obstacles().len(), 0);
        let rows = MapSpec::Rows {
            rows: vec!["..".into(), ".#".into()],
        };
        assert_eq!(rows.load(None).unwrap().obstacles().len(), 1);
        assert!(MapSpec::Named("huge".into()).load(None).is_err());
        let parsed: MapSpec = serde_json::from_str(r#"{"rows": ["...", "..."]}"#).unwrap();
        assert!(matches!(parsed, MapSpec::Rows { .. }));
    }

    #[test]
    fn run_writes_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke(Variant::DetOnly);
        cfg.checkpoint_every = 2;
        let out = run_experiment(cfg, Some(dir.path())).unwrap();
        assert_eq!(out.history.len(), 4);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().next().unwrap(), METRICS_HEADER);
        assert!(dir.path().join("config.json").exists());
        assert!(dir.path().join("checkpoints/round_00002/classifier.ckpt").exists());
        let loaded = LoadedRun::load(&dir.path().join("checkpoints/final")).unwrap();
        assert_eq!(&loaded.classifier, out.experiment.classifier());
        assert_eq!(loaded.classes.len(), 4);
        assert_eq!(loaded.env, *out.experiment.env());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let cfg = ExperimentConfig {
                    episodes_per_round: 8,
                    ..smoke(Variant::DetPlusStoch)
                };
                let out = run_experiment(cfg, None).unwrap();
                (out.history, out.experiment.classifier().clone(), out.experiment.policy().clone())
            })
        };
        assert_eq!(run(1), run(3));
    }
}
