//! State features, the linear Q-function and SARSA training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{allowed_actions, GenerationContext, StrategyAction, UserAct, MAX_ATTRS, MAX_SENTENCES};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::reward::RewardModel;
use crate::rng;

/// Nine attribute bits, goal and quit flags, scaled sentence count, bias.
pub const FEATURE_DIM: usize = 13;
const GOAL: usize = 9;
const QUIT: usize = 10;
const SENTENCES: usize = 11;
const BIAS: usize = 12;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "attr_1", "attr_2", "attr_3", "attr_4", "attr_5", "attr_6", "attr_7", "attr_8", "attr_9",
    "user_goal", "user_quit", "sentences", "bias",
];

const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrEncoding {
    /// Bit `n` set for exactly `n` attributes.
    #[default]
    OneHot,
    /// Bits `1..=n` set for `n` attributes.
    Thermometer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn attr_bits(&self) -> &[f64] {
        &self.0[..MAX_ATTRS as usize]
    }

    pub fn user_goal_bit(&self) -> f64 {
        self.0[GOAL]
    }

    pub fn user_quit_bit(&self) -> f64 {
        self.0[QUIT]
    }

    pub fn sentence_feature(&self) -> f64 {
        self.0[SENTENCES]
    }
}

pub fn featurize(ctx: &GenerationContext) -> FeatureVector {
    featurize_with(ctx, AttrEncoding::OneHot)
}

pub fn featurize_with(ctx: &GenerationContext, encoding: AttrEncoding) -> FeatureVector {
    let mut f = [0.0; FEATURE_DIM];
    let n = ctx.attr_count().min(MAX_ATTRS) as usize;
    match encoding {
        AttrEncoding::OneHot if n > 0 => f[n - 1] = 1.0,
        AttrEncoding::OneHot => {}
        AttrEncoding::Thermometer => f[..n].fill(1.0),
    }
    f[GOAL] = f64::from(u8::from(ctx.last_user_act() == UserAct::SysGoal));
    f[QUIT] = f64::from(u8::from(ctx.last_user_act() == UserAct::UserQuit));
    f[SENTENCES] = ctx.sentence_count() as f64 / MAX_SENTENCES as f64;
    f[BIAS] = 1.0;
    FeatureVector(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Set from the master seed at run time; not part of the config file.
    #[serde(skip)]
    pub seed: u64,
    pub encoding: AttrEncoding,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 3600,
            alpha: 0.05,
            gamma: 1.0,
            epsilon_start: 0.8,
            epsilon_end: 0.0,
            seed: 0,
            encoding: AttrEncoding::OneHot,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if !(self.epsilon_start <= 1.0 && self.epsilon_start >= self.epsilon_end && self.epsilon_end >= 0.0) {
            return Err(Error::InvalidConfig(
                "epsilon schedule must satisfy 1 >= epsilon_start >= epsilon_end >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` at the first episode to
    /// `epsilon_end` at the last.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return self.epsilon_start;
        }
        let t = episode as f64 / (self.episodes - 1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub episodes: usize,
    pub seed: u64,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl From<&TrainConfig> for TrainingMetadata {
    fn from(cfg: &TrainConfig) -> Self {
        TrainingMetadata {
            episodes: cfg.episodes,
            seed: cfg.seed,
            alpha: cfg.alpha,
            gamma: cfg.gamma,
            epsilon_start: cfg.epsilon_start,
            epsilon_end: cfg.epsilon_end,
        }
    }
}

/// One linear weight vector per action.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyWeights {
    vectors: [[f64; FEATURE_DIM]; 4],
    pub encoding: AttrEncoding,
    pub metadata: Option<TrainingMetadata>,
}

impl Default for PolicyWeights {
    fn default() -> Self {
        Self::zeros()
    }
}

pub const WEIGHTS_FORMAT: &str = "infopres-policy-weights";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDocument {
    format: String,
    version: u32,
    dimension: usize,
    encoding: AttrEncoding,
    feature_names: Vec<String>,
    weights: WeightsByAction,
    metadata: Option<TrainingMetadata>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "SCREAMING_SNAKE_CASE")]
struct WeightsByAction {
    summary: Vec<f64>,
    compare: Vec<f64>,
    recommend: Vec<f64>,
    stop: Vec<f64>,
}

impl PolicyWeights {
    pub fn zeros() -> Self {
        PolicyWeights {
            vectors: [[0.0; FEATURE_DIM]; 4],
            encoding: AttrEncoding::OneHot,
            metadata: None,
        }
    }

    pub fn vector(&self, action: StrategyAction) -> &[f64; FEATURE_DIM] {
        &self.vectors[action.index()]
    }

    pub fn vector_mut(&mut self, action: StrategyAction) -> &mut [f64; FEATURE_DIM] {
        &mut self.vectors[action.index()]
    }

    /// Sets an action's weights from a slice of the feature dimension.
    pub fn set_vector(&mut self, action: StrategyAction, values: &[f64]) -> Result<()> {
        if values.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: FEATURE_DIM, found: values.len() });
        }
        self.vectors[action.index()].copy_from_slice(values);
        Ok(())
    }

    pub fn features(&self, ctx: &GenerationContext) -> FeatureVector {
        featurize_with(ctx, self.encoding)
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.vectors.iter_mut().flatten().for_each(|w| *w *= k);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.vectors.iter().flatten().fold(0.0, |m, w| m.max(w.abs()))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = WeightsDocument {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            dimension: FEATURE_DIM,
            encoding: self.encoding,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: WeightsByAction {
                summary: self.vectors[0].to_vec(),
                compare: self.vectors[1].to_vec(),
                recommend: self.vectors[2].to_vec(),
                stop: self.vectors[3].to_vec(),
            },
            metadata: self.metadata.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Weights(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WeightsDocument =
            serde_json::from_str(text).map_err(|e| Error::Weights(e.to_string()))?;
        if doc.format != WEIGHTS_FORMAT {
            return Err(Error::Weights(format!("unexpected format `{}`", doc.format)));
        }
        if doc.version != WEIGHTS_VERSION {
            return Err(Error::Weights(format!("unsupported version {}", doc.version)));
        }
        if doc.dimension != FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: FEATURE_DIM, found: doc.dimension });
        }
        let mut w = PolicyWeights {
            encoding: doc.encoding,
            metadata: doc.metadata,
            ..PolicyWeights::zeros()
        };
        w.set_vector(StrategyAction::Summary, &doc.weights.summary)?;
        w.set_vector(StrategyAction::Compare, &doc.weights.compare)?;
        w.set_vector(StrategyAction::Recommend, &doc.weights.recommend)?;
        w.set_vector(StrategyAction::Stop, &doc.weights.stop)?;
        Ok(w)
    }
}

pub fn q_value(w: &PolicyWeights, f: &FeatureVector, a: StrategyAction) -> f64 {
    w.vector(a).iter().zip(f.0.iter()).map(|(x, y)| x * y).sum()
}

/// Dot product for raw slices, checking dimensions.
pub fn dot(w: &[f64], f: &[f64]) -> Result<f64> {
    if w.len() != f.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), found: f.len() });
    }
    Ok(w.iter().zip(f).map(|(x, y)| x * y).sum())
}

/// Legal action with the highest Q-value; ties go to the earlier action in
/// SUMMARY, COMPARE, RECOMMEND, STOP order.
pub fn greedy_action(w: &PolicyWeights, ctx: &GenerationContext) -> Result<StrategyAction> {
    let f = w.features(ctx);
    let mut best: Option<(StrategyAction, f64)> = None;
    for a in allowed_actions(ctx)?.iter() {
        let q = q_value(w, &f, a);
        if best.is_none_or(|(_, b)| q > b) {
            best = Some((a, q));
        }
    }
    best.map(|(a, _)| a).ok_or(Error::Terminated)
}

/// Epsilon-greedy selection. No random draw is consumed when `epsilon` is 0.
pub fn select_action<R: Rng + ?Sized>(
    w: &PolicyWeights,
    ctx: &GenerationContext,
    epsilon: f64,
    rng: &mut R,
) -> Result<StrategyAction> {
    let allowed = allowed_actions(ctx)?;
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let legal = allowed.to_vec();
        let idx = rng.random_range(0..legal.len() as u32) as usize;
        return Ok(legal[idx]);
    }
    greedy_action(w, ctx)
}

/// One-step SARSA update of `w[action]` toward `reward + gamma * q(next)`,
/// where a missing `next` marks the end of the episode. Returns the TD error.
pub fn sarsa_update(
    w: &mut PolicyWeights,
    features: &FeatureVector,
    action: StrategyAction,
    reward: f64,
    next: Option<(&FeatureVector, StrategyAction)>,
    alpha: f64,
    gamma: f64,
) -> f64 {
    let bootstrap = next.map_or(0.0, |(f, a)| q_value(w, f, a));
    let td = reward + gamma * bootstrap - q_value(w, features, action);
    for (wi, fi) in w.vector_mut(action).iter_mut().zip(features.0.iter()) {
        *wi += alpha * td * fi;
    }
    td
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub total_return: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct Training {
    pub weights: PolicyWeights,
    pub log: Vec<EpisodeLog>,
}

/// Trains linear Q-weights with on-policy SARSA. A single stream seeded from
/// `cfg.seed` drives both exploration and the environment.
pub fn sarsa_train(env: &Environment, reward: &RewardModel, cfg: &TrainConfig) -> Result<Training> {
    cfg.validate()?;
    reward.validate()?;
    let mut w = PolicyWeights { encoding: cfg.encoding, ..PolicyWeights::zeros() };
    let mut rng = rng::stream(cfg.seed);
    let mut log = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon_at(episode);
        let mut ctx = env.reset();
        let mut action = select_action(&w, &ctx, epsilon, &mut rng)?;
        let mut step = 0;
        let total_return = loop {
            let f = w.features(&ctx);
            let out = env.step(&ctx, action, &mut rng)?;
            if out.done {
                let r = reward.terminal_reward(&out.next_ctx, out.predicted_user_act)?;
                sarsa_update(&mut w, &f, action, r, None, cfg.alpha, cfg.gamma);
                check_divergence(&w, episode, step)?;
                break r;
            }
            let next_action = select_action(&w, &out.next_ctx, epsilon, &mut rng)?;
            let next_f = w.features(&out.next_ctx);
            sarsa_update(&mut w, &f, action, 0.0, Some((&next_f, next_action)), cfg.alpha, cfg.gamma);
            check_divergence(&w, episode, step)?;
            ctx = out.next_ctx;
            action = next_action;
            step += 1;
        };
        log.push(EpisodeLog { episode, total_return, epsilon });
    }

    w.metadata = Some(TrainingMetadata::from(cfg));
    Ok(Training { weights: w, log })
}

fn check_divergence(w: &PolicyWeights, episode: usize, step: usize) -> Result<()> {
    let magnitude = w.max_abs();
    if !(magnitude <= DIVERGENCE_LIMIT) {
        return Err(Error::Diverged { episode, step, magnitude });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StrategyAction::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn ctx(history: Vec<StrategyAction>, attrs: u32, sentences: u32, act: UserAct) -> GenerationContext {
        GenerationContext::from_parts(history, attrs, sentences, act, false).unwrap()
    }

    #[test]
    fn initial_features() {
        let f = featurize(&GenerationContext::initial());
        assert!(f.attr_bits().iter().all(|&b| b == 0.0));
        assert_eq!(f.user_goal_bit(), 0.0);
        assert_eq!(f.user_quit_bit(), 0.0);
        assert_eq!(f.sentence_feature(), 0.0);
        assert_eq!(f.0[BIAS], 1.0);
    }

    #[test]
    fn definitional_encoding() {
        let f = featurize(&ctx(vec![Summary, Recommend], 5, 8, UserAct::SysGoal));
        let set: Vec<_> = f.attr_bits().iter().enumerate().filter(|(_, &b)| b == 1.0).map(|(i, _)| i + 1).collect();
        assert_eq!(set, vec![5]);
        assert_eq!(f.user_goal_bit(), 1.0);
        assert_eq!(f.user_quit_bit(), 0.0);
        assert!((f.sentence_feature() - 8.0 / 11.0).abs() < 1e-15);

        let quit = featurize(&ctx(vec![Compare], 3, 6, UserAct::UserQuit));
        assert_eq!(quit.user_quit_bit(), 1.0);
        let other = featurize(&ctx(vec![Compare], 3, 6, UserAct::UserElse));
        assert_eq!(other.user_goal_bit() + other.user_quit_bit(), 0.0);
    }

    #[test]
    fn thermometer_encoding() {
        let f = featurize_with(&ctx(vec![Compare], 3, 6, UserAct::UserElse), AttrEncoding::Thermometer);
        assert_eq!(&f.attr_bits()[..4], &[1.0, 1.0, 1.0, 0.0]);
    }

    // Brute-force enumeration of the reachable abstract states.
    #[test]
    fn featurize_is_injective_on_reachable_states() {
        let env = Environment::default();
        let mut seen: HashMap<(u32, bool, bool, u32), Vec<u64>> = HashMap::new();
        let mut stack = vec![env.reset()];
        while let Some(c) = stack.pop() {
            let key = (
                c.attr_count(),
                c.last_user_act() == UserAct::SysGoal,
                c.last_user_act() == UserAct::UserQuit,
                c.sentence_count(),
            );
            let bits: Vec<u64> = featurize(&c).0.iter().map(|x| x.to_bits()).collect();
            if let Some(prev) = seen.get(&key) {
                assert_eq!(prev, &bits);
            }
            seen.insert(key, bits);
            for a in allowed_actions(&c).unwrap().iter().filter(|a| a.is_generation()) {
                let spec = env.realizer().spec(a).unwrap();
                for &d in &spec.attrs {
                    for act in UserAct::SAMPLED {
                        stack.push(c.after_generation(a, d, spec.sentences, act));
                    }
                }
            }
        }
        let mut vectors: Vec<_> = seen.values().cloned().collect();
        let n = vectors.len();
        vectors.sort();
        vectors.dedup();
        assert_eq!(vectors.len(), n);
    }

    #[test]
    fn q_value_examples() {
        let w = PolicyWeights::zeros();
        let f = featurize(&ctx(vec![Compare], 4, 6, UserAct::SysGoal));
        for a in StrategyAction::ALL {
            assert_eq!(q_value(&w, &f, a), 0.0);
        }
        let mut w = PolicyWeights::zeros();
        w.vector_mut(Recommend)[BIAS] = 3.5;
        assert_eq!(q_value(&w, &f, Recommend), 3.5);
        assert_eq!(q_value(&w, &featurize(&GenerationContext::initial()), Recommend), 3.5);
    }

    #[test]
    fn dimension_checks() {
        assert!(matches!(dot(&[1.0, 2.0], &[1.0]), Err(Error::DimensionMismatch { .. })));
        let mut w = PolicyWeights::zeros();
        assert!(w.set_vector(Stop, &[0.0; 12]).is_err());
    }

    #[test]
    fn greedy_tie_break_and_argmax() {
        let init = GenerationContext::initial();
        let mut rng = stream(0);
        assert_eq!(select_action(&PolicyWeights::zeros(), &init, 0.0, &mut rng).unwrap(), Summary);
        let mut w = PolicyWeights::zeros();
        w.vector_mut(Compare)[BIAS] = 1.0;
        assert_eq!(select_action(&w, &init, 0.0, &mut rng).unwrap(), Compare);
    }

    #[test]
    fn full_exploration_is_uniform() {
        // chi-square over the three legal actions at init, 2 df, 1% critical value 9.21
        let init = GenerationContext::initial();
        let mut rng = stream(11);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_action(&PolicyWeights::zeros(), &init, 1.0, &mut rng).unwrap().index()] += 1;
        }
        assert_eq!(counts[Stop.index()], 0);
        let expected = n as f64 / 3.0;
        let chi2: f64 = counts[..3].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 9.21, "chi2 {chi2}");
    }

    #[test]
    fn hand_built_terminal_update() {
        let mut w = PolicyWeights::zeros();
        let last = ctx(vec![Summary, Recommend], 4, 5, UserAct::SysGoal);
        let f = featurize(&last);
        let before = w.clone();
        sarsa_update(&mut w, &f, Stop, 100.0, None, 0.1, 1.0);
        for i in 0..FEATURE_DIM {
            assert!((w.vector(Stop)[i] - 10.0 * f.0[i]).abs() < 1e-12);
        }
        for a in [Summary, Compare, Recommend] {
            assert_eq!(w.vector(a), before.vector(a));
        }
    }

    #[test]
    fn zero_episodes_leaves_weights_zero() {
        let cfg = TrainConfig { episodes: 0, ..TrainConfig::default() };
        let t = sarsa_train(&Environment::default(), &RewardModel::default(), &cfg).unwrap();
        assert_eq!(t.weights.max_abs(), 0.0);
        assert!(t.log.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig { episodes: 300, seed: 3, ..TrainConfig::default() };
        let a = sarsa_train(&Environment::default(), &RewardModel::default(), &cfg).unwrap();
        let b = sarsa_train(&Environment::default(), &RewardModel::default(), &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn divergence_is_reported() {
        let reward = RewardModel { scale: 1e9, ..RewardModel::default() };
        let cfg = TrainConfig { episodes: 10, alpha: 1.0, ..TrainConfig::default() };
        let err = sarsa_train(&Environment::default(), &reward, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { episode: 0, .. }), "{err}");
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.epsilon_at(0), 0.8);
        assert!(cfg.epsilon_at(3599).abs() < 1e-12);
        assert!(TrainConfig { alpha: 0.0, ..cfg.clone() }.validate().is_err());
        assert!(TrainConfig { epsilon_end: 0.9, ..cfg.clone() }.validate().is_err());
        assert!(TrainConfig { gamma: 1.5, ..cfg }.validate().is_err());
    }

    #[test]
    fn weights_json_roundtrip_and_dimension_guard() {
        let cfg = TrainConfig { episodes: 50, seed: 9, ..TrainConfig::default() };
        let w = sarsa_train(&Environment::default(), &RewardModel::default(), &cfg).unwrap().weights;
        let json = w.to_json().unwrap();
        assert_eq!(PolicyWeights::from_json(&json).unwrap(), w);

        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["dimension"] = 12.into();
        assert!(matches!(
            PolicyWeights::from_json(&doc.to_string()),
            Err(Error::DimensionMismatch { expected: 13, found: 12 })
        ));
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["weights"]["STOP"].as_array_mut().unwrap().pop();
        assert!(PolicyWeights::from_json(&doc.to_string()).is_err());
    }

    proptest! {
        #[test]
        fn q_is_linear_in_weights(a in proptest::collection::vec(-10.0..10.0f64, FEATURE_DIM),
                                  b in proptest::collection::vec(-10.0..10.0f64, FEATURE_DIM),
                                  attrs in 1u32..=9, sentences in 0u32..=11) {
            let mut w1 = PolicyWeights::zeros();
            let mut w2 = PolicyWeights::zeros();
            let mut sum = PolicyWeights::zeros();
            w1.set_vector(Compare, &a).unwrap();
            w2.set_vector(Compare, &b).unwrap();
            let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            sum.set_vector(Compare, &s).unwrap();
            let f = featurize(&ctx(vec![Summary], attrs, sentences, UserAct::SysGoal));
            let lhs = q_value(&sum, &f, Compare);
            let rhs = q_value(&w1, &f, Compare) + q_value(&w2, &f, Compare);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn greedy_choice_is_scale_invariant(v in proptest::collection::vec(-50.0..50.0f64, 4 * FEATURE_DIM),
                                            k in 0.001..1000.0f64,
                                            attrs in 1u32..=9, act in 0usize..3) {
            let mut w = PolicyWeights::zeros();
            for (i, a) in StrategyAction::ALL.into_iter().enumerate() {
                w.set_vector(a, &v[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]).unwrap();
            }
            let c = ctx(vec![Summary], attrs, 2, UserAct::SAMPLED[act]);
            prop_assert_eq!(greedy_action(&w, &c).unwrap(), greedy_action(&w.scaled(k), &c).unwrap());
        }
    }
}
