//! Simulated generation environment: a stochastic realizer, a bi-gram user
//! simulation with a cognitive-load rule, and the episode transition function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    allowed_actions, conciseness_bin, Conciseness, GenerationContext, StrategyAction, UserAct,
};
use crate::error::{Error, Result};

/// Realizer behaviour for one generation action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizerSpec {
    /// Attribute counts, drawn uniformly.
    pub attrs: Vec<u32>,
    pub sentences: u32,
}

impl RealizerSpec {
    fn validate(&self, action: StrategyAction) -> Result<()> {
        if self.attrs.is_empty() || self.attrs.contains(&0) || self.sentences == 0 {
            return Err(Error::InvalidConfig(format!(
                "realizer entry for {action} needs nonempty attrs >= 1 and sentences >= 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealizerProfile {
    pub summary: RealizerSpec,
    pub compare: RealizerSpec,
    pub recommend: RealizerSpec,
}

impl Default for RealizerProfile {
    fn default() -> Self {
        RealizerProfile {
            summary: RealizerSpec { attrs: vec![1, 2], sentences: 2 },
            compare: RealizerSpec { attrs: vec![3, 4], sentences: 6 },
            recommend: RealizerSpec { attrs: vec![2, 3], sentences: 3 },
        }
    }
}

impl RealizerProfile {
    pub fn spec(&self, action: StrategyAction) -> Result<&RealizerSpec> {
        match action {
            StrategyAction::Summary => Ok(&self.summary),
            StrategyAction::Compare => Ok(&self.compare),
            StrategyAction::Recommend => Ok(&self.recommend),
            StrategyAction::Stop => Err(Error::NotGeneration(action)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in StrategyAction::GENERATION {
            self.spec(a)?.validate(a)?;
        }
        Ok(())
    }
}

/// Probabilities over the sampled user acts, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActDistribution {
    pub sys_goal: f64,
    pub user_else: f64,
    pub user_quit: f64,
}

impl ActDistribution {
    pub const fn new(sys_goal: f64, user_else: f64, user_quit: f64) -> Self {
        ActDistribution { sys_goal, user_else, user_quit }
    }

    pub fn percent(&self, act: UserAct) -> f64 {
        match act {
            UserAct::SysGoal => self.sys_goal,
            UserAct::UserElse => self.user_else,
            UserAct::UserQuit => self.user_quit,
            UserAct::Silent => 0.0,
        }
    }

    pub fn probability(&self, act: UserAct) -> f64 {
        self.percent(act) / 100.0
    }

    fn total(&self) -> f64 {
        self.sys_goal + self.user_else + self.user_quit
    }

    fn normalized(&self, row: &str) -> Result<Self> {
        let values = [self.sys_goal, self.user_else, self.user_quit];
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) || self.total() <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "user simulation row `{row}` needs finite non-negative entries with a positive sum"
            )));
        }
        let k = 100.0 / self.total();
        Ok(ActDistribution::new(self.sys_goal * k, self.user_else * k, self.user_quit * k))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UserAct {
        let u = rng.random::<f64>() * 100.0;
        if u < self.sys_goal {
            UserAct::SysGoal
        } else if u < self.sys_goal + self.user_else {
            UserAct::UserElse
        } else {
            UserAct::UserQuit
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UserSimTable {
    pub concise: ActDistribution,
    pub average: ActDistribution,
    pub verbose: ActDistribution,
    /// Row used once the attribute count exceeds `overload_above`.
    pub overload: ActDistribution,
    pub overload_above: u32,
}

fn default_overload_above() -> u32 {
    7
}

impl Default for UserSimTable {
    fn default() -> Self {
        UserSimTable {
            concise: ActDistribution::new(20.0, 60.0, 20.0),
            average: ActDistribution::new(60.0, 20.0, 20.0),
            verbose: ActDistribution::new(20.0, 20.0, 60.0),
            overload: ActDistribution::new(10.0, 10.0, 80.0),
            overload_above: default_overload_above(),
        }
    }
}

impl UserSimTable {
    /// Rescales every row to sum to 100.
    pub fn normalized(&self) -> Result<Self> {
        Ok(UserSimTable {
            concise: self.concise.normalized("concise")?,
            average: self.average.normalized("average")?,
            verbose: self.verbose.normalized("verbose")?,
            overload: self.overload.normalized("overload")?,
            overload_above: self.overload_above,
        })
    }

    pub fn row(&self, level: Conciseness) -> &ActDistribution {
        match level {
            Conciseness::Concise => &self.concise,
            Conciseness::Average => &self.average,
            Conciseness::Verbose => &self.verbose,
        }
    }

    /// The row that applies after `attr_count` attributes.
    pub fn row_for(&self, attr_count: u32) -> Result<&ActDistribution> {
        let level = conciseness_bin(attr_count)?;
        if attr_count > self.overload_above {
            Ok(&self.overload)
        } else {
            Ok(self.row(level))
        }
    }

    pub fn is_overloaded(&self, attr_count: u32) -> bool {
        attr_count > self.overload_above
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_ctx: GenerationContext,
    pub attrs_added: u32,
    pub sentences_added: u32,
    pub predicted_user_act: UserAct,
    pub done: bool,
}

/// Immutable environment configuration. Randomness comes from the caller.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Environment {
    realizer: RealizerProfile,
    user_sim: UserSimTable,
}

impl Environment {
    pub fn new(realizer: RealizerProfile, user_sim: UserSimTable) -> Result<Self> {
        realizer.validate()?;
        let user_sim = user_sim.normalized()?;
        Ok(Environment { realizer, user_sim })
    }

    pub fn realizer(&self) -> &RealizerProfile {
        &self.realizer
    }

    pub fn user_sim(&self) -> &UserSimTable {
        &self.user_sim
    }

    pub fn reset(&self) -> GenerationContext {
        GenerationContext::initial()
    }

    /// Draws the attribute and sentence deltas of one generation action.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        action: StrategyAction,
        rng: &mut R,
    ) -> Result<(u32, u32)> {
        let spec = self.realizer.spec(action)?;
        let idx = rng.random_range(0..spec.attrs.len() as u32) as usize;
        Ok((spec.attrs[idx], spec.sentences))
    }

    /// Samples the user's most likely next act were generation to stop now.
    pub fn predict_user_act<R: Rng + ?Sized>(&self, attr_count: u32, rng: &mut R) -> Result<UserAct> {
        Ok(self.user_sim.row_for(attr_count)?.sample(rng))
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        ctx: &GenerationContext,
        action: StrategyAction,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        let allowed = allowed_actions(ctx)?;
        if !allowed.contains(action) {
            return Err(Error::IllegalAction { action, allowed });
        }
        if action == StrategyAction::Stop {
            return Ok(StepOutcome {
                next_ctx: ctx.stopped(),
                attrs_added: 0,
                sentences_added: 0,
                predicted_user_act: ctx.last_user_act(),
                done: true,
            });
        }
        let (attrs_added, sentences_added) = self.realize(action, rng)?;
        let attrs = ctx.attr_count() + attrs_added;
        let act = self.predict_user_act(attrs, rng)?;
        Ok(StepOutcome {
            next_ctx: ctx.after_generation(action, attrs_added, sentences_added, act),
            attrs_added,
            sentences_added,
            predicted_user_act: act,
            done: false,
        })
    }
}
