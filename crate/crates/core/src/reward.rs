//! Regression-derived reward and the one-shot ranking of composite strategies.

use serde::{Deserialize, Serialize};

use crate::domain::{GenerationContext, Strategy, StrategyAction, UserAct};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payoffs {
    pub sys_goal: f64,
    pub user_else: f64,
    pub user_quit: f64,
}

impl Default for Payoffs {
    fn default() -> Self {
        Payoffs { sys_goal: 100.0, user_else: 0.0, user_quit: -100.0 }
    }
}

impl Payoffs {
    pub fn for_act(&self, act: UserAct) -> Result<f64> {
        match act {
            UserAct::SysGoal => Ok(self.sys_goal),
            UserAct::UserElse => Ok(self.user_else),
            UserAct::UserQuit => Ok(self.user_quit),
            UserAct::Silent => Err(Error::SilentAtStop),
        }
    }
}

/// Linear rating model over attribute and sentence counts, plus the payoff of
/// the user act realized when generation stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardModel {
    pub attr_weight: f64,
    pub sentence_weight: f64,
    /// Multiplier on the regression score so it is commensurate with payoffs.
    pub scale: f64,
    pub payoff: Payoffs,
}

impl Default for RewardModel {
    fn default() -> Self {
        RewardModel {
            attr_weight: 0.775,
            sentence_weight: -0.301,
            scale: 100.0,
            payoff: Payoffs::default(),
        }
    }
}

impl RewardModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.attr_weight,
            self.sentence_weight,
            self.scale,
            self.payoff.sys_goal,
            self.payoff.user_else,
            self.payoff.user_quit,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.scale <= 0.0 {
            return Err(Error::InvalidConfig(
                "reward weights must be finite and scale > 0".into(),
            ));
        }
        Ok(())
    }

    /// Unscaled rating: `attr_weight * attrs + sentence_weight * sentences`.
    pub fn regression_score(&self, attrs: f64, sentences: f64) -> f64 {
        self.attr_weight * attrs + self.sentence_weight * sentences
    }

    /// Reward paid at STOP. All intermediate rewards are zero.
    pub fn terminal_reward(&self, ctx: &GenerationContext, realized_act: UserAct) -> Result<f64> {
        if !ctx.is_terminated() {
            return Err(Error::NotTerminated);
        }
        let payoff = self.payoff.for_act(realized_act)?;
        let score = self.regression_score(ctx.attr_count() as f64, ctx.sentence_count() as f64);
        Ok(self.scale * score + payoff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyMeans {
    pub mean_attrs: f64,
    pub mean_sentences: f64,
}

/// Corpus averages per base strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyAverages {
    pub summary: StrategyMeans,
    pub compare: StrategyMeans,
    pub recommend: StrategyMeans,
}

impl Default for StrategyAverages {
    fn default() -> Self {
        StrategyAverages {
            summary: StrategyMeans { mean_attrs: 2.07, mean_sentences: 1.56 },
            compare: StrategyMeans { mean_attrs: 3.2, mean_sentences: 5.5 },
            recommend: StrategyMeans { mean_attrs: 2.4, mean_sentences: 3.5 },
        }
    }
}

impl StrategyAverages {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("summary", self.summary), ("compare", self.compare), ("recommend", self.recommend)] {
            if !(m.mean_attrs > 0.0 && m.mean_sentences > 0.0) || !m.mean_attrs.is_finite() || !m.mean_sentences.is_finite() {
                return Err(Error::InvalidConfig(format!("averages for {name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn means(&self, action: StrategyAction) -> Result<StrategyMeans> {
        match action {
            StrategyAction::Summary => Ok(self.summary),
            StrategyAction::Compare => Ok(self.compare),
            StrategyAction::Recommend => Ok(self.recommend),
            StrategyAction::Stop => Err(Error::NotGeneration(action)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedStrategy {
    pub strategy: Strategy,
    pub attrs: f64,
    pub sentences: f64,
    pub score: f64,
}

/// Scores each of the seven composite strategies on summed corpus means and
/// sorts them best first. Equal scores go to the shorter sequence.
pub fn rank_strategies_analytic(
    averages: &StrategyAverages,
    model: &RewardModel,
) -> Result<Vec<RankedStrategy>> {
    let mut ranked = Strategy::all()
        .into_iter()
        .map(|strategy| {
            let (mut attrs, mut sentences) = (0.0, 0.0);
            for &a in strategy.actions() {
                let m = averages.means(a)?;
                attrs += m.mean_attrs;
                sentences += m.mean_sentences;
            }
            let score = model.regression_score(attrs, sentences);
            Ok(RankedStrategy { strategy, attrs, sentences, score })
        })
        .collect::<Result<Vec<_>>>()?;
    // stable sort keeps the listing order for exact ties of equal length
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.strategy.len().cmp(&b.strategy.len()))
    });
    Ok(ranked)
}
