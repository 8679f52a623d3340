//! Presentation policies: the seven fixed or randomized baselines and the
//! greedy policy over learned weights.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;

use crate::domain::{allowed_actions, GenerationContext, Strategy, StrategyAction, UserAct};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::learning::{greedy_action, q_value, PolicyWeights};

/// Baseline and learned policy identifiers, in report order.
pub const POLICY_NAMES: [&str; 8] = ["B1", "B2", "B3", "B4", "B5", "B6", "B7", "RL"];

#[derive(Debug, Clone, PartialEq)]
enum Behavior {
    Sequence(Strategy),
    /// One sequence drawn uniformly at the start of every episode.
    RandomSequence(Vec<Strategy>),
    Greedy(Box<PolicyWeights>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    name: String,
    behavior: Behavior,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn seq(actions: &[StrategyAction]) -> Strategy {
    Strategy::new(actions.to_vec()).expect("baseline sequences are legal")
}

pub fn make_baseline(id: &str) -> Result<Policy> {
    use StrategyAction::*;
    let behavior = match id.trim().to_ascii_uppercase().as_str() {
        "B1" => Behavior::Sequence(seq(&[Recommend])),
        "B2" => Behavior::Sequence(seq(&[Compare])),
        "B3" => Behavior::Sequence(seq(&[Summary])),
        "B4" => Behavior::Sequence(seq(&[Summary, Recommend])),
        "B5" => Behavior::RandomSequence(vec![seq(&[Recommend]), seq(&[Compare])]),
        "B6" => Behavior::RandomSequence(Strategy::all()),
        "B7" => Behavior::Sequence(seq(&[Summary, Compare, Recommend])),
        _ => return Err(Error::UnknownPolicy(id.to_string())),
    };
    Ok(Policy { name: id.trim().to_ascii_uppercase(), behavior })
}

pub fn make_greedy(weights: PolicyWeights) -> Policy {
    Policy { name: "RL".into(), behavior: Behavior::Greedy(Box::new(weights)) }
}

impl Policy {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.behavior, Behavior::RandomSequence(_))
    }

    /// Starts an episode; randomized baselines draw their sequence here.
    pub fn begin_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> EpisodeDriver<'_> {
        let plan = match &self.behavior {
            Behavior::Sequence(s) => Some(s.clone()),
            Behavior::RandomSequence(options) => {
                let idx = rng.random_range(0..options.len() as u32) as usize;
                Some(options[idx].clone())
            }
            Behavior::Greedy(_) => None,
        };
        EpisodeDriver { policy: self, plan }
    }
}

/// Per-episode view of a policy.
#[derive(Debug, Clone)]
pub struct EpisodeDriver<'a> {
    policy: &'a Policy,
    plan: Option<Strategy>,
}

impl EpisodeDriver<'_> {
    pub fn plan(&self) -> Option<&Strategy> {
        self.plan.as_ref()
    }

    pub fn next_action<R: Rng + ?Sized>(&mut self, ctx: &GenerationContext, _rng: &mut R) -> Result<StrategyAction> {
        let allowed = allowed_actions(ctx)?;
        let action = match (&self.policy.behavior, &self.plan) {
            (Behavior::Greedy(w), _) => greedy_action(w, ctx)?,
            (_, Some(plan)) => plan
                .actions()
                .get(ctx.actions_taken().len())
                .copied()
                .unwrap_or(StrategyAction::Stop),
            (_, None) => unreachable!("sequence policies always carry a plan"),
        };
        if !allowed.contains(action) {
            return Err(Error::IllegalAction { action, allowed });
        }
        Ok(action)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRow {
    pub history: Vec<StrategyAction>,
    pub attr_count: u32,
    pub sentence_count: u32,
    pub user_goal: bool,
    pub user_quit: bool,
    pub action: StrategyAction,
    /// Q-values of the legal actions, in tie-break order.
    pub q_values: Vec<(StrategyAction, f64)>,
}

impl DecisionRow {
    pub fn history_code(&self) -> String {
        if self.history.is_empty() {
            "init".into()
        } else {
            self.history.iter().map(|a| a.initial()).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTable {
    pub rows: Vec<DecisionRow>,
}

impl DecisionTable {
    pub fn rows_with_history(&self, history: &[StrategyAction]) -> impl Iterator<Item = &DecisionRow> {
        let history = history.to_vec();
        self.rows.iter().filter(move |r| r.history == history)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("history attrs sentences goal quit -> action\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<7} {:>5} {:>9} {:>4} {:>4} -> {}\n",
                r.history_code(),
                r.attr_count,
                r.sentence_count,
                u8::from(r.user_goal),
                u8::from(r.user_quit),
                r.action
            ));
        }
        out
    }
}

fn abstract_key(ctx: &GenerationContext) -> (Vec<StrategyAction>, u32, u32, bool, bool) {
    (
        ctx.actions_taken().to_vec(),
        ctx.attr_count(),
        ctx.sentence_count(),
        ctx.last_user_act() == UserAct::SysGoal,
        ctx.last_user_act() == UserAct::UserQuit,
    )
}

/// Greedy action in every reachable non-terminal abstract state.
///
/// USER_ELSE and SILENT collapse to the same abstract state (neither flag set).
pub fn describe_policy(w: &PolicyWeights, env: &Environment) -> Result<DecisionTable> {
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    let mut frontier = vec![env.reset()];
    while let Some(ctx) = frontier.pop() {
        let key = abstract_key(&ctx);
        if !seen.insert(key.clone()) {
            continue;
        }
        let f = w.features(&ctx);
        let allowed = allowed_actions(&ctx)?;
        rows.push(DecisionRow {
            history: key.0,
            attr_count: key.1,
            sentence_count: key.2,
            user_goal: key.3,
            user_quit: key.4,
            action: greedy_action(w, &ctx)?,
            q_values: allowed.iter().map(|a| (a, q_value(w, &f, a))).collect(),
        });
        for a in allowed.iter().filter(|a| a.is_generation()) {
            let spec = env.realizer().spec(a)?;
            for &d in &spec.attrs {
                for act in UserAct::SAMPLED {
                    frontier.push(ctx.after_generation(a, d, spec.sentences, act));
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.history.len(), &a.history, a.attr_count, a.user_goal, a.user_quit)
            .cmp(&(b.history.len(), &b.history, b.attr_count, b.user_goal, b.user_quit))
    });
    Ok(DecisionTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use StrategyAction::*;

    fn rollout(policy: &Policy, seed: u64) -> Vec<StrategyAction> {
        let env = Environment::default();
        let mut rng = stream(seed);
        let mut driver = policy.begin_episode(&mut rng);
        let mut ctx = env.reset();
        let mut actions = Vec::new();
        loop {
            let a = driver.next_action(&ctx, &mut rng).unwrap();
            actions.push(a);
            let out = env.step(&ctx, a, &mut rng).unwrap();
            if out.done {
                return actions;
            }
            ctx = out.next_ctx;
        }
    }

    #[test]
    fn fixed_baselines() {
        let cases: [(&str, &[StrategyAction]); 5] = [
            ("B1", &[Recommend, Stop]),
            ("B2", &[Compare, Stop]),
            ("B3", &[Summary, Stop]),
            ("B4", &[Summary, Recommend, Stop]),
            ("B7", &[Summary, Compare, Recommend, Stop]),
        ];
        for (id, expected) in cases {
            let p = make_baseline(id).unwrap();
            assert!(!p.is_stochastic());
            for seed in 0..5 {
                assert_eq!(rollout(&p, seed), expected, "{id}");
            }
        }
    }

    #[test]
    fn unknown_baseline() {
        assert!(matches!(make_baseline("B8"), Err(Error::UnknownPolicy(_))));
        assert!(make_baseline("RL").is_err());
    }

    #[test]
    fn b5_picks_recommend_or_compare() {
        let p = make_baseline("B5").unwrap();
        let mut seen = BTreeSet::new();
        for seed in 0..200 {
            seen.insert(rollout(&p, seed));
        }
        let expected: BTreeSet<_> = [vec![Recommend, Stop], vec![Compare, Stop]].into_iter().collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn b6_is_uniform_over_the_seven_sequences() {
        let p = make_baseline("B6").unwrap();
        let n = 14_000;
        let mut counts = std::collections::BTreeMap::new();
        let mut rng = stream(123);
        for _ in 0..n {
            let driver = p.begin_episode(&mut rng);
            *counts.entry(driver.plan().unwrap().code()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 7);
        for (code, c) in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 1.0 / 7.0).abs() <= 0.01, "{code} {freq}");
        }
    }

    #[test]
    fn greedy_zero_weights_start_with_summary() {
        let p = make_greedy(PolicyWeights::zeros());
        let mut rng = stream(0);
        let mut d = p.begin_episode(&mut rng);
        assert_eq!(d.next_action(&GenerationContext::initial(), &mut rng).unwrap(), Summary);
    }

    #[test]
    fn zero_weight_table_uses_tie_break() {
        let table = describe_policy(&PolicyWeights::zeros(), &Environment::default()).unwrap();
        for r in &table.rows {
            assert_eq!(r.action, r.q_values[0].0);
        }
        assert_eq!(table.rows[0].history_code(), "init");
        assert!(table.render().lines().count() == table.rows.len() + 1);
    }

    // Oracle: every history that is a prefix of a strategy, times each
    // reachable attribute sum and each flag combination.
    #[test]
    fn table_covers_every_reachable_state() {
        let env = Environment::default();
        let mut expected = BTreeSet::new();
        expected.insert((Vec::new(), 0u32, false, false));
        for s in Strategy::all() {
            let actions = s.actions();
            let ranges: Vec<Vec<u32>> = actions.iter().map(|&a| env.realizer().spec(a).unwrap().attrs.clone()).collect();
            let mut sums = vec![0u32];
            for r in &ranges {
                sums = sums.iter().flat_map(|s| r.iter().map(move |d| s + d)).collect();
            }
            for total in sums {
                for (g, q) in [(true, false), (false, true), (false, false)] {
                    expected.insert((actions.to_vec(), total, g, q));
                }
            }
        }
        let table = describe_policy(&PolicyWeights::zeros(), &env).unwrap();
        let got: BTreeSet<_> = table.rows.iter().map(|r| (r.history.clone(), r.attr_count, r.user_goal, r.user_quit)).collect();
        assert_eq!(table.rows.len(), got.len());
        assert_eq!(got, expected);
        assert_eq!(table.rows.len(), 58);
    }

    #[test]
    fn all_policies_emit_legal_actions() {
        let env = Environment::default();
        let mut w = PolicyWeights::zeros();
        w.vector_mut(Recommend)[12] = 5.0;
        w.vector_mut(Stop)[9] = 7.0;
        let mut policies: Vec<Policy> = POLICY_NAMES[..7].iter().map(|id| make_baseline(id).unwrap()).collect();
        policies.push(make_greedy(w));
        for p in &policies {
            for seed in 0..100 {
                let mut rng = stream(seed);
                let mut d = p.begin_episode(&mut rng);
                let mut ctx = env.reset();
                let mut generation_steps = 0;
                loop {
                    let a = d.next_action(&ctx, &mut rng).unwrap();
                    assert!(allowed_actions(&ctx).unwrap().contains(a));
                    let out = env.step(&ctx, a, &mut rng).unwrap();
                    if out.done {
                        break;
                    }
                    generation_steps += 1;
                    ctx = out.next_ctx;
                }
                assert!(generation_steps <= 3);
            }
        }
    }
}
