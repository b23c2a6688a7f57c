//! Reactive opponents. Each one picks its move as a (possibly noisy) function
//! of the probe agent's action on the same tick.
//!
//! With `n` actions the taxonomy has `n` deterministic response maps, `n`
//! stochastic softenings of them, and one uniform-random opponent: `2n + 1`
//! classes in total.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid_env::Action;

pub const NUM_CLASSES: usize = 9;
pub const DEFAULT_PRIMARY_WEIGHT: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseKind {
    /// Quarter turn anti-clockwise: LEFT -> DOWN.
    Diagonal,
    /// LEFT <-> RIGHT, UP <-> DOWN.
    Opposite,
    /// Quarter turn clockwise: LEFT -> UP.
    OppositeDiagonal,
    /// Copies the agent's action.
    Follower,
}

impl BaseKind {
    pub const ALL: [BaseKind; 4] = [
        BaseKind::Diagonal,
        BaseKind::Opposite,
        BaseKind::OppositeDiagonal,
        BaseKind::Follower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseKind::Diagonal => "diagonal",
            BaseKind::Opposite => "opposite",
            BaseKind::OppositeDiagonal => "opposite_diagonal",
            BaseKind::Follower => "follower",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Deterministic response of a base kind to the agent's action.
pub fn deterministic_response(kind: BaseKind, agent_action: Action) -> Action {
    use Action::*;
    match kind {
        BaseKind::Diagonal => match agent_action {
            Left => Down,
            Down => Right,
            Right => Up,
            Up => Left,
        },
        BaseKind::Opposite => match agent_action {
            Left => Right,
            Right => Left,
            Up => Down,
            Down => Up,
        },
        BaseKind::OppositeDiagonal => match agent_action {
            Left => Up,
            Up => Right,
            Right => Down,
            Down => Left,
        },
        BaseKind::Follower => agent_action,
    }
}

/// One of the nine opponent labels.
///
/// Ids: deterministic kinds 0..=3, stochastic kinds 4..=7 (same kind order),
/// random 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpponentClass {
    Deterministic(BaseKind),
    Stochastic(BaseKind),
    Random,
}

impl OpponentClass {
    pub const ALL: [OpponentClass; NUM_CLASSES] = [
        OpponentClass::Deterministic(BaseKind::Diagonal),
        OpponentClass::Deterministic(BaseKind::Opposite),
        OpponentClass::Deterministic(BaseKind::OppositeDiagonal),
        OpponentClass::Deterministic(BaseKind::Follower),
        OpponentClass::Stochastic(BaseKind::Diagonal),
        OpponentClass::Stochastic(BaseKind::Opposite),
        OpponentClass::Stochastic(BaseKind::OppositeDiagonal),
        OpponentClass::Stochastic(BaseKind::Follower),
        OpponentClass::Random,
    ];

    pub fn id(self) -> usize {
        match self {
            OpponentClass::Deterministic(k) => k.index(),
            OpponentClass::Stochastic(k) => 4 + k.index(),
            OpponentClass::Random => 8,
        }
    }

    pub fn from_id(id: usize) -> Option<OpponentClass> {
        Self::ALL.get(id).copied()
    }

    pub fn is_deterministic(self) -> bool {
        matches!(self, OpponentClass::Deterministic(_))
    }

    pub fn kind(self) -> Option<BaseKind> {
        match self {
            OpponentClass::Deterministic(k) | OpponentClass::Stochastic(k) => Some(k),
            OpponentClass::Random => None,
        }
    }

    /// Stable snake_case identifier, e.g. `det_follower` or `stoch_opposite`.
    pub fn name(self) -> String {
        match self {
            OpponentClass::Deterministic(k) => format!("det_{}", k.name()),
            OpponentClass::Stochastic(k) => format!("stoch_{}", k.name()),
            OpponentClass::Random => "random".to_string(),
        }
    }

    pub fn deterministic_ids() -> Vec<usize> {
        (0..4).collect()
    }
}

impl fmt::Display for OpponentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for OpponentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(id) = s.parse::<usize>() {
            return OpponentClass::from_id(id).ok_or_else(|| Error::Config(format!("class id {id} out of range 0..9")));
        }
        OpponentClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown opponent class {s:?}")))
    }
}

impl Serialize for OpponentClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u64(self.id() as u64)
    }
}

impl<'de> Deserialize<'de> for OpponentClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let id = usize::deserialize(d)?;
        OpponentClass::from_id(id).ok_or_else(|| serde::de::Error::custom(format!("class id {id} out of range 0..9")))
    }
}

/// The full `2n + 1` class list for `n` actions. Only `n = 4` is instantiated.
pub fn enumerate_classes(n_actions: usize) -> Result<Vec<OpponentClass>> {
    if n_actions != Action::COUNT {
        return Err(Error::Unsupported(format!(
            "opponent taxonomy is only instantiated for 4 actions, got {n_actions}"
        )));
    }
    Ok(OpponentClass::ALL.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpponentPolicy {
    class: OpponentClass,
    primary_weight: f64,
}

impl OpponentPolicy {
    /// `primary_weight` is the mass a stochastic opponent puts on its base
    /// response; it must lie in (1/4, 1].
    pub fn new(class: OpponentClass, primary_weight: f64) -> Result<Self> {
        validate_primary_weight(primary_weight)?;
        Ok(OpponentPolicy { class, primary_weight })
    }

    pub fn with_default_weight(class: OpponentClass) -> Self {
        OpponentPolicy {
            class,
            primary_weight: DEFAULT_PRIMARY_WEIGHT,
        }
    }

    pub fn class(&self) -> OpponentClass {
        self.class
    }

    pub fn primary_weight(&self) -> f64 {
        self.primary_weight
    }

    /// Probability of each opponent action, indexed by [`Action::index`].
    pub fn action_distribution(&self, agent_action: Action) -> [f64; 4] {
        match self.class {
            OpponentClass::Deterministic(kind) => {
                let mut p = [0.0; 4];
                p[deterministic_response(kind, agent_action).index()] = 1.0;
                p
            }
            OpponentClass::Stochastic(kind) => {
                let mut p = [(1.0 - self.primary_weight) / 3.0; 4];
                p[deterministic_response(kind, agent_action).index()] = self.primary_weight;
                p
            }
            OpponentClass::Random => [0.25; 4],
        }
    }

    /// Draws one action. Always consumes exactly one uniform variate, so rng
    /// streams stay aligned across opponent classes.
    pub fn sample_response<R: Rng + ?Sized>(&self, agent_action: Action, rng: &mut R) -> Action {
        let u: f64 = rng.random();
        let probs = self.action_distribution(agent_action);
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Action::ALL[i];
            }
        }
        // u landed in the rounding gap above the cumulative sum
        let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(3);
        Action::ALL[last]
    }
}

pub fn validate_primary_weight(w: f64) -> Result<()> {
    if !(w > 0.25 && w <= 1.0) {
        return Err(Error::Config(format!("primary_weight must lie in (0.25, 1], got {w}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn response_table_matches_left_examples() {
        assert_eq!(deterministic_response(BaseKind::Diagonal, Action::Left), Action::Down);
        assert_eq!(deterministic_response(BaseKind::Opposite, Action::Left), Action::Right);
        assert_eq!(deterministic_response(BaseKind::OppositeDiagonal, Action::Left), Action::Up);
        assert_eq!(deterministic_response(BaseKind::Follower, Action::Left), Action::Left);
    }

    /// Rotates the displacement of `a` by the quarter turn that takes LEFT to DOWN.
    fn rotate_like_diagonal(a: Action) -> Action {
        // LEFT (0,-1) -> DOWN (1,0): (dr, dc) -> (-dc, dr)
        let (dr, dc) = a.delta();
        Action::from_delta((-dc, dr)).unwrap()
    }

    #[test]
    fn diagonal_is_a_rotation_of_displacements() {
        assert_eq!(deterministic_response(BaseKind::Diagonal, Action::Down), Action::Right);
        for a in Action::ALL {
            assert_eq!(deterministic_response(BaseKind::Diagonal, a), rotate_like_diagonal(a));
        }
    }

    #[test]
    fn algebraic_relations() {
        for a in Action::ALL {
            let d = deterministic_response(BaseKind::Diagonal, a);
            assert_eq!(deterministic_response(BaseKind::OppositeDiagonal, d), a);
            assert_eq!(deterministic_response(BaseKind::Diagonal, d), deterministic_response(BaseKind::Opposite, a));
            let mut seen: Vec<_> = BaseKind::ALL.iter().map(|&k| deterministic_response(k, a)).collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), 4, "responses to {a} must be distinct");
        }
        for k in BaseKind::ALL {
            let mut image: Vec<_> = Action::ALL.iter().map(|&a| deterministic_response(k, a)).collect();
            image.sort();
            assert_eq!(image, Action::ALL.to_vec(), "{k:?} must be a bijection");
        }
    }

    #[test]
    fn distributions() {
        let det = OpponentPolicy::with_default_weight(OpponentClass::Deterministic(BaseKind::Follower));
        assert_eq!(det.action_distribution(Action::Up), [0.0, 0.0, 1.0, 0.0]);
        let st = OpponentPolicy::new(OpponentClass::Stochastic(BaseKind::Diagonal), 0.7).unwrap();
        let p = st.action_distribution(Action::Left);
        assert!((p[Action::Down.index()] - 0.7).abs() < 1e-15);
        for a in [Action::Left, Action::Right, Action::Up] {
            assert!((p[a.index()] - 0.1).abs() < 1e-15);
        }
        let r = OpponentPolicy::with_default_weight(OpponentClass::Random);
        assert_eq!(r.action_distribution(Action::Right), [0.25; 4]);
        for class in OpponentClass::ALL {
            for a in Action::ALL {
                let p = OpponentPolicy::with_default_weight(class).action_distribution(a);
                assert!(p.iter().all(|&x| x >= 0.0));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn primary_weight_bounds() {
        assert!(OpponentPolicy::new(OpponentClass::Random, 0.25).is_err());
        assert!(OpponentPolicy::new(OpponentClass::Random, 1.01).is_err());
        assert!(OpponentPolicy::new(OpponentClass::Random, f64::NAN).is_err());
        assert!(OpponentPolicy::new(OpponentClass::Random, 1.0).is_ok());
    }

    #[test]
    fn deterministic_sampling_ignores_seed() {
        let p = OpponentPolicy::with_default_weight(OpponentClass::Deterministic(BaseKind::Opposite));
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(p.sample_response(Action::Down, &mut rng), Action::Up);
        }
    }

    #[test]
    fn stochastic_sampling_frequency() {
        let p = OpponentPolicy::new(OpponentClass::Stochastic(BaseKind::Follower), 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let hits = (0..n).filter(|_| p.sample_response(Action::Left, &mut rng) == Action::Left).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.7).abs() < 0.02, "frequency {freq}");
    }

    #[test]
    fn sampling_is_seeded() {
        let p = OpponentPolicy::with_default_weight(OpponentClass::Random);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| p.sample_response(Action::Up, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn class_enumeration() {
        let classes = enumerate_classes(4).unwrap();
        assert_eq!(classes.len(), 2 * 4 + 1);
        let ids: Vec<_> = classes.iter().map(|c| c.id()).collect();
        assert_eq!(ids, (0..9).collect::<Vec<_>>());
        for k in BaseKind::ALL {
            let det = classes.iter().position(|&c| c == OpponentClass::Deterministic(k)).unwrap();
            let st = classes.iter().position(|&c| c == OpponentClass::Stochastic(k)).unwrap();
            assert_eq!(st, det + 4);
        }
        assert!(matches!(enumerate_classes(3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn names_parse_back() {
        for c in OpponentClass::ALL {
            assert_eq!(c.name().parse::<OpponentClass>().unwrap(), c);
            assert_eq!(c.id().to_string().parse::<OpponentClass>().unwrap(), c);
            assert_eq!(OpponentClass::from_id(c.id()), Some(c));
        }
        assert!("stoch_random".parse::<OpponentClass>().is_err());
    }
}
