//! Batched policy evaluation and summary reports.

use std::fmt::Write as _;

use serde::Serialize;

use crate::domain::{StrategyAction, UserAct};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::reward::RewardModel;
use crate::rng;
use crate::stats::{self, SignificanceReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub action: StrategyAction,
    pub attrs_added: u32,
    pub sentences_added: u32,
    pub attrs: u32,
    pub sentences: u32,
    pub user_act: UserAct,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub attrs: u32,
    pub sentences: u32,
    pub user_act: UserAct,
    pub reward: f64,
}

impl EpisodeRecord {
    /// Actions joined with `+`, e.g. `SUMMARY+COMPARE+STOP`.
    pub fn actions(&self) -> String {
        self.steps.iter().map(|s| s.action.name()).collect::<Vec<_>>().join("+")
    }
}

/// Runs one episode on a stream seeded with `seed`.
pub fn run_episode(policy: &Policy, env: &Environment, reward: &RewardModel, seed: u64) -> Result<EpisodeRecord> {
    let mut rng = rng::stream(seed);
    let mut driver = policy.begin_episode(&mut rng);
    let mut ctx = env.reset();
    let mut steps = Vec::new();
    loop {
        let action = driver.next_action(&ctx, &mut rng)?;
        let out = env.step(&ctx, action, &mut rng)?;
        steps.push(StepRecord {
            action,
            attrs_added: out.attrs_added,
            sentences_added: out.sentences_added,
            attrs: out.next_ctx.attr_count(),
            sentences: out.next_ctx.sentence_count(),
            user_act: out.predicted_user_act,
        });
        if out.done {
            let r = reward.terminal_reward(&out.next_ctx, out.predicted_user_act)?;
            return Ok(EpisodeRecord {
                seed,
                steps,
                attrs: out.next_ctx.attr_count(),
                sentences: out.next_ctx.sentence_count(),
                user_act: out.predicted_user_act,
                reward: r,
            });
        }
        ctx = out.next_ctx;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub policy: String,
    pub rewards: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single episode.
    pub std: f64,
    /// Set when fewer than two episodes were run.
    pub degenerate: bool,
    #[serde(skip)]
    pub episodes: Vec<EpisodeRecord>,
}

/// Stream seed of a policy's evaluation episodes under a master seed.
pub fn policy_stream_seed(master_seed: u64, policy: &str) -> u64 {
    rng::derive_seed(master_seed, &format!("eval/{policy}"))
}

/// Evaluates `policy` for `n` episodes. Episode `i` runs on
/// `episode_seed(stream_seed, i)`.
pub fn run_eval(
    policy: &Policy,
    env: &Environment,
    reward: &RewardModel,
    n: usize,
    stream_seed: u64,
) -> Result<EvalResult> {
    if n == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let episodes = (0..n)
        .map(|i| run_episode(policy, env, reward, rng::episode_seed(stream_seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let rewards: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
    Ok(EvalResult {
        policy: policy.name().to_string(),
        mean: stats::mean(&rewards),
        std: stats::std_dev(&rewards),
        degenerate: n < 2,
        rewards,
        episodes,
    })
}

/// Evaluates every policy on its own stream, one thread per policy.
pub fn evaluate_all(
    policies: &[Policy],
    env: &Environment,
    reward: &RewardModel,
    n: usize,
    master_seed: u64,
) -> Result<Vec<EvalResult>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = policies
            .iter()
            .map(|p| {
                scope.spawn(move || run_eval(p, env, reward, n, policy_stream_seed(master_seed, p.name())))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub master_seed: u64,
    pub config_hash: String,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

pub const REPORT_CSV_HEADER: [&str; 11] = [
    "kind", "policy", "other", "n", "mean", "std", "t", "df", "raw_p", "corrected_p", "significant",
];

/// Renders the mean/std table followed by the ANOVA and corrected pairwise
/// matrix, as plain text and as CSV. Rows follow the order of `results`.
pub fn render_report(results: &[EvalResult], sig: &SignificanceReport, meta: &ReportMeta) -> Result<Report> {
    let mut text = String::new();
    let _ = writeln!(text, "seed: {}  config: {}  episodes per policy: {}", meta.master_seed, meta.config_hash, meta.episodes);
    let _ = writeln!(text);
    let _ = writeln!(text, "{:<8} {:>10}  {:>10}", "policy", "reward", "(+-std)");
    for r in results {
        let flag = if r.degenerate { "  [single episode]" } else { "" };
        let _ = writeln!(text, "{:<8} {:>10.1}  (+-{:>7.1}){}", r.policy, r.mean, r.std, flag);
    }
    let _ = writeln!(text);
    match &sig.anova {
        Some(a) => {
            let _ = writeln!(text, "ANOVA: F({}, {}) = {:.3}, p = {:.3e}", a.df_between, a.df_within, a.f, a.p);
        }
        None => {
            let _ = writeln!(text, "ANOVA: not applicable");
        }
    }
    let _ = writeln!(
        text,
        "pairwise Welch t-tests, Bonferroni m = {}, alpha = {}",
        sig.comparisons, sig.alpha
    );
    for p in &sig.pairs {
        let (a, b) = (&sig.names[p.first], &sig.names[p.second]);
        match &p.test {
            Some(t) => {
                let mark = if t.significant { "*" } else { "" };
                let _ = writeln!(
                    text,
                    "  {a:<4} vs {b:<4} t = {:>8.3}  df = {:>7.1}  p = {:.3e}  p_corr = {:.3e} {mark}",
                    t.t, t.df, t.raw_p, t.corrected_p
                );
            }
            None => {
                let _ = writeln!(text, "  {a:<4} vs {b:<4} degenerate (zero variance in both groups)");
            }
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(REPORT_CSV_HEADER).map_err(csv_err)?;
    let blank = String::new;
    w.write_record(["meta", "seed", &meta.master_seed.to_string(), "", "", "", "", "", "", "", ""]).map_err(csv_err)?;
    w.write_record(["meta", "config_hash", &meta.config_hash, "", "", "", "", "", "", "", ""]).map_err(csv_err)?;
    for r in results {
        w.write_record([
            "summary".to_string(),
            r.policy.clone(),
            blank(),
            r.rewards.len().to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
        ])
        .map_err(csv_err)?;
    }
    if let Some(a) = &sig.anova {
        w.write_record([
            "anova".to_string(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            a.f.to_string(),
            format!("{}/{}", a.df_between, a.df_within),
            a.p.to_string(),
            blank(),
            blank(),
        ])
        .map_err(csv_err)?;
    }
    for p in &sig.pairs {
        let (a, b) = (sig.names[p.first].clone(), sig.names[p.second].clone());
        let row = match &p.test {
            Some(t) => [
                "pair".to_string(), a, b, blank(), blank(), blank(),
                t.t.to_string(), t.df.to_string(), t.raw_p.to_string(), t.corrected_p.to_string(),
                t.significant.to_string(),
            ],
            None => [
                "pair".to_string(), a, b, blank(), blank(), blank(),
                blank(), blank(), blank(), blank(), "degenerate".to_string(),
            ],
        };
        w.write_record(row).map_err(csv_err)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?)
        .expect("csv output is utf-8");
    Ok(Report { text, csv })
}

pub const EPISODES_CSV_HEADER: [&str; 8] =
    ["episode", "policy", "seed", "actions", "attrs", "sentences", "user_act", "reward"];

pub fn episodes_csv(results: &[EvalResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(EPISODES_CSV_HEADER).map_err(csv_err)?;
    for r in results {
        for (i, e) in r.episodes.iter().enumerate() {
            w.write_record([
                i.to_string(),
                r.policy.clone(),
                e.seed.to_string(),
                e.actions(),
                e.attrs.to_string(),
                e.sentences.to_string(),
                e.user_act.name().to_string(),
                e.reward.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?)
        .expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GenerationContext;
    use crate::learning::PolicyWeights;
    use crate::policy::{make_baseline, make_greedy, POLICY_NAMES};
    use crate::stats::significance_report;
    use std::collections::BTreeSet;

    fn env() -> Environment {
        Environment::default()
    }

    // Brute-force outcome space of SUMMARY then STOP.
    #[test]
    fn b3_rewards_come_from_enumerated_outcomes() {
        let model = RewardModel::default();
        let mut allowed = Vec::new();
        for attrs in [1u32, 2] {
            for act in UserAct::SAMPLED {
                let ctx = GenerationContext::from_parts(vec![StrategyAction::Summary], attrs, 2, act, true).unwrap();
                allowed.push(model.terminal_reward(&ctx, act).unwrap());
            }
        }
        let r = run_eval(&make_baseline("B3").unwrap(), &env(), &model, 500, 17).unwrap();
        let distinct: BTreeSet<u64> = r.rewards.iter().map(|x| x.to_bits()).collect();
        assert!(distinct.len() <= 6);
        for x in &r.rewards {
            assert!(allowed.iter().any(|a| a == x), "{x}");
        }
    }

    #[test]
    fn single_episode_is_flagged() {
        let r = run_eval(&make_baseline("B1").unwrap(), &env(), &RewardModel::default(), 1, 3).unwrap();
        assert_eq!(r.std, 0.0);
        assert!(r.degenerate);
        assert!(run_eval(&make_baseline("B1").unwrap(), &env(), &RewardModel::default(), 0, 3).is_err());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let p = make_baseline("B6").unwrap();
        let a = run_eval(&p, &env(), &RewardModel::default(), 200, 5).unwrap();
        let b = run_eval(&p, &env(), &RewardModel::default(), 200, 5).unwrap();
        assert_eq!(a, b);
        assert!((a.mean - stats::mean(&a.rewards)).abs() < 1e-9);
        assert!((a.std - stats::std_dev(&a.rewards)).abs() < 1e-9);
    }

    fn full_report() -> (Vec<EvalResult>, Report) {
        let mut policies: Vec<_> = POLICY_NAMES[..7].iter().map(|id| make_baseline(id).unwrap()).collect();
        policies.push(make_greedy(PolicyWeights::zeros()));
        let results = evaluate_all(&policies, &env(), &RewardModel::default(), 50, 8).unwrap();
        let named: Vec<(&str, &[f64])> = results.iter().map(|r| (r.policy.as_str(), r.rewards.as_slice())).collect();
        let sig = significance_report(&named, 0.05).unwrap();
        let meta = ReportMeta { master_seed: 8, config_hash: "abc123".into(), episodes: 50 };
        let report = render_report(&results, &sig, &meta).unwrap();
        (results, report)
    }

    #[test]
    fn report_rows_in_fixed_order() {
        let (_, report) = full_report();
        let mut rdr = csv::Reader::from_reader(report.csv.as_bytes());
        let names: Vec<String> = rdr
            .records()
            .map(|r| r.unwrap())
            .filter(|r| &r[0] == "summary")
            .map(|r| r[1].to_string())
            .collect();
        assert_eq!(names, POLICY_NAMES);
        assert!(report.text.contains("seed: 8"));
        assert!(report.text.contains("abc123"));
        assert!(report.csv.contains("config_hash,abc123"));
    }

    #[test]
    fn report_csv_roundtrips_numbers() {
        let (results, report) = full_report();
        let mut rdr = csv::Reader::from_reader(report.csv.as_bytes());
        let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).filter(|r| &r[0] == "summary").collect();
        for (row, r) in rows.iter().zip(&results) {
            let mean: f64 = row[4].parse().unwrap();
            let std: f64 = row[5].parse().unwrap();
            assert!((mean - r.mean).abs() <= 1e-9);
            assert!((std - r.std).abs() <= 1e-9);
            assert_eq!(row[3].parse::<usize>().unwrap(), 50);
        }
        let pairs = csv::Reader::from_reader(report.csv.as_bytes())
            .records()
            .filter(|r| &r.as_ref().unwrap()[0] == "pair")
            .count();
        assert_eq!(pairs, 28);
    }

    #[test]
    fn episodes_csv_has_one_row_per_episode() {
        let (results, _) = full_report();
        let text = episodes_csv(&results).unwrap();
        assert_eq!(text.lines().count(), 1 + 8 * 50);
        assert!(text.starts_with("episode,policy,seed,actions,attrs,sentences,user_act,reward"));
    }
}
