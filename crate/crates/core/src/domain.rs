//! Value types shared across the crate: presentation actions, user acts,
//! conciseness bins, the generation context and the action-ordering rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on cumulative attributes (sum of realizer maxima).
pub const MAX_ATTRS: u32 = 9;
/// Upper bound on cumulative sentences (sum of realizer sentence counts).
pub const MAX_SENTENCES: u32 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyAction {
    Summary,
    Compare,
    Recommend,
    Stop,
}

impl StrategyAction {
    /// All actions in tie-break order.
    pub const ALL: [StrategyAction; 4] = [
        StrategyAction::Summary,
        StrategyAction::Compare,
        StrategyAction::Recommend,
        StrategyAction::Stop,
    ];

    pub const GENERATION: [StrategyAction; 3] = [
        StrategyAction::Summary,
        StrategyAction::Compare,
        StrategyAction::Recommend,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_generation(self) -> bool {
        self != StrategyAction::Stop
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyAction::Summary => "SUMMARY",
            StrategyAction::Compare => "COMPARE",
            StrategyAction::Recommend => "RECOMMEND",
            StrategyAction::Stop => "STOP",
        }
    }

    pub fn initial(self) -> char {
        self.name().chars().next().unwrap_or('?')
    }
}

impl fmt::Display for StrategyAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyAction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SUMMARY" | "S" => Ok(StrategyAction::Summary),
            "COMPARE" | "C" => Ok(StrategyAction::Compare),
            "RECOMMEND" | "R" => Ok(StrategyAction::Recommend),
            "STOP" | "END" | "X" => Ok(StrategyAction::Stop),
            other => Err(format!("unknown action `{other}`")),
        }
    }
}

/// A small set of actions, iterated in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    pub fn of(actions: &[StrategyAction]) -> Self {
        actions.iter().fold(Self::EMPTY, |set, &a| set.with(a))
    }

    pub fn with(self, action: StrategyAction) -> Self {
        ActionSet(self.0 | (1 << action.index()))
    }

    pub fn contains(self, action: StrategyAction) -> bool {
        self.0 & (1 << action.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = StrategyAction> {
        StrategyAction::ALL
            .into_iter()
            .filter(move |&a| self.contains(a))
    }

    pub fn to_vec(self) -> Vec<StrategyAction> {
        self.iter().collect()
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(StrategyAction::name).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UserAct {
    SysGoal,
    UserElse,
    UserQuit,
    /// Before the first user-simulation sample of an episode.
    Silent,
}

impl UserAct {
    /// Acts the user simulation can produce, in table column order.
    pub const SAMPLED: [UserAct; 3] = [UserAct::SysGoal, UserAct::UserElse, UserAct::UserQuit];

    pub fn name(self) -> &'static str {
        match self {
            UserAct::SysGoal => "SYS_GOAL",
            UserAct::UserElse => "USER_ELSE",
            UserAct::UserQuit => "USER_QUIT",
            UserAct::Silent => "SILENT",
        }
    }
}

impl fmt::Display for UserAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UserAct {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SYS_GOAL" | "SYSGOAL" | "GOAL" | "G" => Ok(UserAct::SysGoal),
            "USER_ELSE" | "ELSE" | "E" => Ok(UserAct::UserElse),
            "USER_QUIT" | "QUIT" | "Q" => Ok(UserAct::UserQuit),
            "SILENT" => Ok(UserAct::Silent),
            other => Err(format!("unknown user act `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conciseness {
    Concise,
    Average,
    Verbose,
}

/// Maps a cumulative attribute count onto a conciseness level.
///
/// 1-2 is concise, 3-4 average and anything above is verbose. The count 4
/// appears in both the average and verbose ranges of the source study; it is
/// assigned to average so the bins are disjoint.
pub fn conciseness_bin(attr_count: u32) -> Result<Conciseness> {
    match attr_count {
        0 => Err(Error::NoAttributes),
        1 | 2 => Ok(Conciseness::Concise),
        3 | 4 => Ok(Conciseness::Average),
        _ => Ok(Conciseness::Verbose),
    }
}

/// Ground-truth episode state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenerationContext {
    actions_taken: Vec<StrategyAction>,
    attr_count: u32,
    sentence_count: u32,
    last_user_act: UserAct,
    terminated: bool,
}

impl Default for GenerationContext {
    fn default() -> Self {
        Self::initial()
    }
}

impl GenerationContext {
    pub fn initial() -> Self {
        GenerationContext {
            actions_taken: Vec::new(),
            attr_count: 0,
            sentence_count: 0,
            last_user_act: UserAct::Silent,
            terminated: false,
        }
    }

    /// Builds a context directly, checking the ordering and count invariants.
    pub fn from_parts(
        actions_taken: Vec<StrategyAction>,
        attr_count: u32,
        sentence_count: u32,
        last_user_act: UserAct,
        terminated: bool,
    ) -> Result<Self> {
        if !is_ordered_history(&actions_taken) {
            return Err(Error::InvalidConfig(format!(
                "history {actions_taken:?} violates SUMMARY < COMPARE < RECOMMEND"
            )));
        }
        if attr_count > MAX_ATTRS || sentence_count > MAX_SENTENCES {
            return Err(Error::InvalidConfig(format!(
                "counts out of range: attrs {attr_count}, sentences {sentence_count}"
            )));
        }
        if (attr_count == 0) != actions_taken.is_empty() {
            return Err(Error::InvalidConfig(
                "attr_count must be zero exactly when no action was taken".into(),
            ));
        }
        Ok(GenerationContext {
            actions_taken,
            attr_count,
            sentence_count,
            last_user_act,
            terminated,
        })
    }

    pub fn actions_taken(&self) -> &[StrategyAction] {
        &self.actions_taken
    }

    pub fn attr_count(&self) -> u32 {
        self.attr_count
    }

    pub fn sentence_count(&self) -> u32 {
        self.sentence_count
    }

    pub fn last_user_act(&self) -> UserAct {
        self.last_user_act
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn last_action(&self) -> Option<StrategyAction> {
        self.actions_taken.last().copied()
    }

    pub(crate) fn after_generation(
        &self,
        action: StrategyAction,
        attrs_added: u32,
        sentences_added: u32,
        act: UserAct,
    ) -> Self {
        let mut actions_taken = self.actions_taken.clone();
        actions_taken.push(action);
        GenerationContext {
            actions_taken,
            attr_count: (self.attr_count + attrs_added).min(MAX_ATTRS),
            sentence_count: (self.sentence_count + sentences_added).min(MAX_SENTENCES),
            last_user_act: act,
            terminated: false,
        }
    }

    pub(crate) fn stopped(&self) -> Self {
        GenerationContext {
            terminated: true,
            ..self.clone()
        }
    }

    pub(crate) fn with_user_act(&self, act: UserAct) -> Self {
        GenerationContext {
            last_user_act: act,
            ..self.clone()
        }
    }
}

fn is_ordered_history(actions: &[StrategyAction]) -> bool {
    actions.iter().all(|a| a.is_generation()) && actions.windows(2).all(|w| w[0] < w[1])
}

/// Legal next actions given the history so far.
pub fn allowed_actions(ctx: &GenerationContext) -> Result<ActionSet> {
    use StrategyAction::*;
    if ctx.is_terminated() {
        return Err(Error::Terminated);
    }
    Ok(match ctx.last_action() {
        None => ActionSet::of(&[Summary, Compare, Recommend]),
        Some(Summary) => ActionSet::of(&[Compare, Recommend, Stop]),
        Some(Compare) => ActionSet::of(&[Recommend, Stop]),
        Some(Recommend) | Some(Stop) => ActionSet::of(&[Stop]),
    })
}

/// One of the seven ordered combinations of presentation strategies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Strategy(Vec<StrategyAction>);

impl Strategy {
    /// Builds a strategy, rejecting sequences the ordering rules forbid.
    pub fn new(actions: Vec<StrategyAction>) -> Result<Self> {
        if actions.is_empty() || !is_ordered_history(&actions) {
            return Err(Error::InvalidConfig(format!(
                "{actions:?} is not a legal presentation sequence"
            )));
        }
        Ok(Strategy(actions))
    }

    /// The seven legal sequences in the order they are usually listed.
    pub fn all() -> Vec<Strategy> {
        use StrategyAction::*;
        [
            vec![Recommend],
            vec![Compare],
            vec![Summary],
            vec![Compare, Recommend],
            vec![Summary, Recommend],
            vec![Summary, Compare],
            vec![Summary, Compare, Recommend],
        ]
        .into_iter()
        .map(Strategy)
        .collect()
    }

    pub fn actions(&self) -> &[StrategyAction] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Short code such as `SCR`.
    pub fn code(&self) -> String {
        self.0.iter().map(|a| a.initial()).collect()
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(|a| a.name()).collect();
        f.write_str(&names.join("+"))
    }
}
