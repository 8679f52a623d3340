//! Command-line front end: `train`, `eval`, `rank`, `analyze`, `corpus` and
//! `walkthrough`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::evaluation::{episodes_csv, evaluate_all, render_report, ReportMeta};
use crate::learning::{sarsa_train, PolicyWeights};
use crate::policy::{describe_policy, make_baseline, make_greedy, Policy, POLICY_NAMES};
use crate::regression::{
    generate_synthetic_corpus, noise_sd_for_r_squared, stepwise_select, CorpusTable, CorpusWeights, StepwiseConfig,
};
use crate::reward::{rank_strategies_analytic, StrategyAverages};
use crate::rng;
use crate::stats::{mean, significance_report};
use crate::walkthrough::{run_interactive, trace_episode};

#[derive(Debug, Parser)]
#[command(name = "infopres", version, about = "Adaptive information presentation with reinforcement learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train linear Q-weights with SARSA and save them as JSON.
    Train(TrainArgs),
    /// Evaluate baselines and learned weights, with significance tests.
    Eval(EvalArgs),
    /// Rank the seven composite strategies by the analytic reward score.
    Rank(RankArgs),
    /// Fit a stepwise linear regression to a rating corpus (CSV).
    Analyze(AnalyzeArgs),
    /// Write a synthetic rating corpus (CSV).
    Corpus(CorpusArgs),
    /// Print a step-by-step trace of one episode, or play one interactively.
    Walkthrough(WalkthroughArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file and INFOPRES_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<(ExperimentConfig, u64)> {
        let cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let seed = cfg.master_seed(self.seed)?;
        Ok((cfg, seed))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output weights file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-episode log (episode, return, epsilon); defaults next to the weights.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Overrides the number of training episodes.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Also print the greedy decision table of the learned weights.
    #[arg(long)]
    pub describe: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Learned weights, required when RL is evaluated.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Comma-separated policy names; `B1..B7` expands to a range.
    #[arg(long)]
    pub policies: Option<String>,
    /// Episodes per policy.
    #[arg(short = 'n', long = "n")]
    pub n: Option<usize>,
    /// Output directory for report.txt, report.csv and episodes.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one row per evaluated episode.
    #[arg(long)]
    pub episodes: bool,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Per-strategy corpus averages (TOML with summary/compare/recommend tables).
    #[arg(long)]
    pub averages: Option<PathBuf>,
    /// Reward model taken from this configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub attr_weight: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sentence_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Corpus CSV: a `rating` column followed by numeric feature columns.
    pub corpus: PathBuf,
    #[arg(long)]
    pub p_enter: Option<f64>,
    #[arg(long)]
    pub p_remove: Option<f64>,
    /// Print every add/remove step.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(short = 'n', long = "n", default_value_t = 512)]
    pub n: usize,
    /// Target population R² of the two informative features.
    #[arg(long, default_value_t = 0.34)]
    pub r_squared: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct WalkthroughArgs {
    #[command(flatten)]
    pub common: Common,
    /// Learned weights; selects the RL policy unless --policy is given.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Policy to trace (B1..B7 or RL).
    #[arg(long)]
    pub policy: Option<String>,
    /// Episode index within the policy's evaluation stream.
    #[arg(long, default_value_t = 0)]
    pub episode: usize,
    /// Choose actions from standard input instead of a policy.
    #[arg(long)]
    pub interactive: bool,
}

/// Expands `B1..B7,RL`-style lists into known policy names, in order and
/// without duplicates.
pub fn parse_policy_list(spec: &str) -> anyhow::Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let names: Vec<String> = match item.split_once("..") {
            Some((a, b)) => {
                let lo = POLICY_NAMES.iter().position(|p| p.eq_ignore_ascii_case(a.trim()));
                let hi = POLICY_NAMES.iter().position(|p| p.eq_ignore_ascii_case(b.trim()));
                match (lo, hi) {
                    (Some(lo), Some(hi)) if lo <= hi => POLICY_NAMES[lo..=hi].iter().map(|s| s.to_string()).collect(),
                    _ => bail!("invalid policy range `{item}`"),
                }
            }
            None => match POLICY_NAMES.iter().find(|p| p.eq_ignore_ascii_case(item)) {
                Some(p) => vec![p.to_string()],
                None => bail!("unknown policy `{item}`; known policies are {}", POLICY_NAMES.join(", ")),
            },
        };
        for n in names {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    if out.is_empty() {
        bail!("no policies selected");
    }
    Ok(out)
}

fn load_weights(path: &Path) -> anyhow::Result<PolicyWeights> {
    let text = fs::read_to_string(path).with_context(|| format!("reading weights {}", path.display()))?;
    PolicyWeights::from_json(&text).with_context(|| format!("parsing weights {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn build_policies(names: &[String], weights: Option<PolicyWeights>) -> anyhow::Result<Vec<Policy>> {
    let mut weights = weights;
    names
        .iter()
        .map(|n| {
            if n == "RL" {
                match weights.take() {
                    Some(w) => Ok(make_greedy(w)),
                    None => bail!("policy RL needs --weights"),
                }
            } else {
                Ok(make_baseline(n)?)
            }
        })
        .collect()
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let (mut cfg, master) = args.common.load()?;
    if let Some(n) = args.episodes {
        cfg.training.episodes = n;
    }
    let env = cfg.environment()?;
    let tc = cfg.train_config(master);
    let trained = sarsa_train(&env, &cfg.reward, &tc)?;
    write_file(&args.out, &trained.weights.to_json()?)?;
    let log_path = args.log.clone().unwrap_or_else(|| args.out.with_extension("train.csv"));
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &trained.log {
        w.serialize(row)?;
    }
    write_file(&log_path, &String::from_utf8(w.into_inner()?)?)?;

    writeln!(out, "trained {} episodes, master seed {master}", tc.episodes)?;
    let returns: Vec<f64> = trained.log.iter().map(|r| r.total_return).collect();
    if returns.len() >= 3 {
        let k = returns.len() / 3;
        let thirds = [&returns[..k], &returns[k..2 * k], &returns[2 * k..]];
        writeln!(
            out,
            "mean return by third: {:.1} / {:.1} / {:.1}",
            mean(thirds[0]),
            mean(thirds[1]),
            mean(thirds[2])
        )?;
    }
    writeln!(out, "weights: {}", args.out.display())?;
    writeln!(out, "log: {}", log_path.display())?;
    if args.describe {
        write!(out, "{}", describe_policy(&trained.weights, &env)?.render())?;
    }
    Ok(())
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<()> {
    let (cfg, master) = args.common.load()?;
    let names = match &args.policies {
        Some(s) => parse_policy_list(s)?,
        None => {
            let mut names = parse_policy_list(&cfg.evaluation.policies.join(","))?;
            if args.weights.is_none() && names.iter().any(|n| n == "RL") {
                names.retain(|n| n != "RL");
                writeln!(err, "note: no --weights given, skipping RL")?;
                if names.is_empty() {
                    bail!("no policies left to evaluate");
                }
            }
            names
        }
    };
    let rl = names.iter().any(|n| n == "RL");
    let weights = match &args.weights {
        Some(p) if rl => Some(load_weights(p)?),
        Some(_) => bail!("--weights given but RL is not among the evaluated policies"),
        None if rl => bail!("policy RL needs --weights"),
        None => None,
    };
    let policies = build_policies(&names, weights)?;
    let n = args.n.unwrap_or(cfg.evaluation.episodes);
    let env = cfg.environment()?;
    let results = evaluate_all(&policies, &env, &cfg.reward, n, master)?;
    let named: Vec<(&str, &[f64])> = results.iter().map(|r| (r.policy.as_str(), r.rewards.as_slice())).collect();
    let sig = significance_report(&named, cfg.evaluation.alpha)?;
    let meta = ReportMeta { master_seed: master, config_hash: cfg.hash()?, episodes: n };
    let report = render_report(&results, &sig, &meta)?;

    let dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    write_file(&dir.join("report.txt"), &report.text)?;
    write_file(&dir.join("report.csv"), &report.csv)?;
    if args.episodes {
        write_file(&dir.join("episodes.csv"), &episodes_csv(&results)?)?;
    }
    write!(out, "{}", report.text)?;
    Ok(())
}

pub fn rank(args: &RankArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut model = match &args.config {
        Some(p) => ExperimentConfig::load(p)?.reward,
        None => Default::default(),
    };
    if let Some(w) = args.attr_weight {
        model.attr_weight = w;
    }
    if let Some(w) = args.sentence_weight {
        model.sentence_weight = w;
    }
    model.validate()?;
    let averages = match &args.averages {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let a: StrategyAverages = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            a.validate()?;
            a
        }
        None => StrategyAverages::default(),
    };
    for (i, r) in rank_strategies_analytic(&averages, &model)?.iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{}\tattrs={:.2}\tsentences={:.2}",
            i + 1,
            r.strategy,
            r.score,
            r.attrs,
            r.sentences
        )?;
    }
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let file = fs::File::open(&args.corpus).with_context(|| format!("opening {}", args.corpus.display()))?;
    let table = CorpusTable::from_csv(io::BufReader::new(file))
        .with_context(|| format!("reading {}", args.corpus.display()))?;
    let mut sc = StepwiseConfig::default();
    if let Some(p) = args.p_enter {
        sc.p_enter = p;
    }
    if let Some(p) = args.p_remove {
        sc.p_remove = p;
    }
    let result = stepwise_select(&table, &sc)?;
    if args.trace {
        for line in &result.trace {
            writeln!(out, "{line}")?;
        }
    }
    write!(out, "{}", result.model.render())?;
    Ok(())
}

pub fn corpus(args: &CorpusArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let weights = CorpusWeights::default();
    let sd = noise_sd_for_r_squared(&weights, args.r_squared)?;
    let table = generate_synthetic_corpus(&weights, sd, args.n, args.seed)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    write_file(&args.out, &String::from_utf8(buf)?)?;
    writeln!(out, "wrote {} rows (noise sd {sd:.4}) to {}", args.n, args.out.display())?;
    Ok(())
}

pub fn walkthrough(
    args: &WalkthroughArgs,
    input: &mut dyn io::BufRead,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let (cfg, master) = args.common.load()?;
    let env = cfg.environment()?;
    let weights = args.weights.as_deref().map(load_weights).transpose()?;
    if args.interactive {
        let stream = rng::derive_seed(master, "walkthrough");
        run_interactive(&env, &cfg.reward, rng::episode_seed(stream, args.episode), weights.as_ref(), input, out)?;
        return Ok(());
    }
    let name = match (&args.policy, &weights) {
        (Some(p), _) => parse_policy_list(p)?.remove(0),
        (None, Some(_)) => "RL".to_string(),
        (None, None) => bail!("walkthrough needs --policy, --weights or --interactive"),
    };
    let policy = build_policies(&[name], weights)?.remove(0);
    let (_, text) = trace_episode(&policy, &env, &cfg.reward, master, args.episode)?;
    write!(out, "{text}")?;
    Ok(())
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Train(a) => train(a, &mut out),
        Command::Eval(a) => eval(a, &mut out, &mut io::stderr()),
        Command::Rank(a) => rank(a, &mut out),
        Command::Analyze(a) => analyze(a, &mut out),
        Command::Corpus(a) => corpus(a, &mut out),
        Command::Walkthrough(a) => walkthrough(a, &mut io::stdin().lock(), &mut out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_lists_expand_ranges() {
        assert_eq!(parse_policy_list("B1..B3,RL").unwrap(), ["B1", "B2", "B3", "RL"]);
        assert_eq!(parse_policy_list("b7, B7 ,RL").unwrap(), ["B7", "RL"]);
        assert!(parse_policy_list("B3..B1").is_err());
        assert!(parse_policy_list("B9").is_err());
        assert!(parse_policy_list(" , ").is_err());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
