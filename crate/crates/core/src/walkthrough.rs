//! Step-by-step traces of single episodes, scripted or interactive.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::domain::{allowed_actions, StrategyAction, UserAct};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::evaluation::{run_episode, EpisodeRecord, StepRecord};
use crate::learning::{greedy_action, PolicyWeights};
use crate::policy::Policy;
use crate::reward::RewardModel;
use crate::rng;

fn step_line(out: &mut String, label: &str, s: &StepRecord) {
    if s.action == StrategyAction::Stop {
        let _ = writeln!(
            out,
            "{label:<6} {:<10} attrs={} sentences={} user={}  calculate reward",
            s.action.name(),
            s.attrs,
            s.sentences,
            s.user_act.name()
        );
    } else {
        let _ = writeln!(
            out,
            "{label:<6} {:<10} +{} attrs +{} sentences  attrs={} sentences={} user={}",
            s.action.name(),
            s.attrs_added,
            s.sentences_added,
            s.attrs,
            s.sentences,
            s.user_act.name()
        );
    }
}

/// Renders an episode as one line per state, `init` first and `reward` last.
pub fn render_trace(policy: &str, record: &EpisodeRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "policy: {policy}  episode seed: {}", record.seed);
    let _ = writeln!(out, "init   -          attrs=0 sentences=0 user={}", UserAct::Silent.name());
    let last = record.steps.len().saturating_sub(1);
    for (i, s) in record.steps.iter().enumerate() {
        let label = if i == last { "end".to_string() } else { format!("s{}", i + 1) };
        step_line(&mut out, &label, s);
    }
    let _ = writeln!(out, "reward {}", record.reward);
    out
}

/// Replays episode `episode` of `policy`'s evaluation stream under
/// `master_seed`, so the trace matches the corresponding evaluation row.
pub fn trace_episode(
    policy: &Policy,
    env: &Environment,
    reward: &RewardModel,
    master_seed: u64,
    episode: usize,
) -> Result<(EpisodeRecord, String)> {
    let stream = crate::evaluation::policy_stream_seed(master_seed, policy.name());
    let record = run_episode(policy, env, reward, rng::episode_seed(stream, episode))?;
    let text = render_trace(policy.name(), &record);
    Ok((record, text))
}

fn read_line<R: BufRead + ?Sized>(input: &mut R) -> Result<String> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "input ended before the episode finished",
        )));
    }
    Ok(line.trim().to_string())
}

/// Runs one episode with actions typed by the user. Illegal or unreadable
/// actions are reported and asked for again without changing the state.
/// After each generation step the sampled user act may be overridden; an
/// empty line keeps it. With `weights`, the greedy choice is shown as a hint.
pub fn run_interactive<R: BufRead + ?Sized, W: Write + ?Sized>(
    env: &Environment,
    reward: &RewardModel,
    seed: u64,
    weights: Option<&PolicyWeights>,
    input: &mut R,
    output: &mut W,
) -> Result<EpisodeRecord> {
    let mut rng = rng::stream(seed);
    let mut ctx = env.reset();
    let mut steps = Vec::new();
    writeln!(output, "init   attrs=0 sentences=0 user={}", UserAct::Silent.name())?;
    loop {
        let allowed = allowed_actions(&ctx)?;
        let action = loop {
            let hint = match weights {
                Some(w) => format!(" (policy: {})", greedy_action(w, &ctx)?.name()),
                None => String::new(),
            };
            write!(output, "action {allowed}{hint}> ")?;
            output.flush()?;
            let line = read_line(input)?;
            match line.parse::<StrategyAction>() {
                Ok(a) if allowed.contains(a) => break a,
                Ok(a) => writeln!(output, "{a} is not allowed here; choose one of {allowed}")?,
                Err(_) => writeln!(output, "unknown action `{line}`; choose one of {allowed}")?,
            }
        };
        let out = env.step(&ctx, action, &mut rng)?;
        let mut next = out.next_ctx;
        let mut act = out.predicted_user_act;
        if !out.done {
            loop {
                write!(output, "user act [{}]> ", act.name())?;
                output.flush()?;
                let line = read_line(input)?;
                if line.is_empty() {
                    break;
                }
                match line.parse::<UserAct>() {
                    Ok(a) if UserAct::SAMPLED.contains(&a) => {
                        act = a;
                        next = next.with_user_act(a);
                        break;
                    }
                    _ => writeln!(output, "unknown user act `{line}`; use SYS_GOAL, USER_ELSE or USER_QUIT")?,
                }
            }
        }
        let record = StepRecord {
            action,
            attrs_added: out.attrs_added,
            sentences_added: out.sentences_added,
            attrs: next.attr_count(),
            sentences: next.sentence_count(),
            user_act: act,
        };
        let mut line = String::new();
        let label = if out.done { "end".to_string() } else { format!("s{}", steps.len() + 1) };
        step_line(&mut line, &label, &record);
        write!(output, "{line}")?;
        steps.push(record);
        if out.done {
            let r = reward.terminal_reward(&next, act)?;
            writeln!(output, "reward {r}")?;
            return Ok(EpisodeRecord {
                seed,
                steps,
                attrs: next.attr_count(),
                sentences: next.sentence_count(),
                user_act: act,
                reward: r,
            });
        }
        ctx = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::run_eval;
    use crate::policy::make_baseline;

    #[test]
    fn trace_starts_with_init_and_ends_with_reward() {
        let p = make_baseline("B7").unwrap();
        let (rec, text) = trace_episode(&p, &Environment::default(), &RewardModel::default(), 4, 2).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[1].starts_with("init"));
        assert!(lines[lines.len() - 2].starts_with("end"));
        assert_eq!(lines[lines.len() - 1], format!("reward {}", rec.reward));
        assert_eq!(lines.len(), 3 + rec.steps.len());
    }

    #[test]
    fn trace_matches_evaluation_episode() {
        let p = make_baseline("B6").unwrap();
        let env = Environment::default();
        let model = RewardModel::default();
        let stream = crate::evaluation::policy_stream_seed(11, "B6");
        let eval = run_eval(&p, &env, &model, 10, stream).unwrap();
        for i in 0..10 {
            let (rec, _) = trace_episode(&p, &env, &model, 11, i).unwrap();
            assert_eq!(rec, eval.episodes[i]);
        }
    }

    #[test]
    fn interactive_reprompts_on_illegal_action() {
        let script = "STOP\nbogus\nSUMMARY\n\nSUMMARY\nCOMPARE\nUSER_QUIT\nSTOP\n";
        let mut out = Vec::new();
        let rec = run_interactive(
            &Environment::default(),
            &RewardModel::default(),
            1,
            None,
            &mut script.as_bytes(),
            &mut out,
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("STOP is not allowed here"));
        assert!(text.contains("unknown action `bogus`"));
        assert!(text.contains("SUMMARY is not allowed here"));
        let acts: Vec<_> = rec.steps.iter().map(|s| s.action).collect();
        assert_eq!(acts, [StrategyAction::Summary, StrategyAction::Compare, StrategyAction::Stop]);
        assert_eq!(rec.user_act, UserAct::UserQuit);
        let expected = 100.0 * (0.775 * rec.attrs as f64 - 0.301 * rec.sentences as f64) - 100.0;
        assert!((rec.reward - expected).abs() < 1e-9);
    }

    #[test]
    fn interactive_fails_on_early_eof() {
        let mut out = Vec::new();
        let r = run_interactive(
            &Environment::default(),
            &RewardModel::default(),
            1,
            None,
            &mut "SUMMARY\n".as_bytes(),
            &mut out,
        );
        assert!(r.is_err());
    }
}
