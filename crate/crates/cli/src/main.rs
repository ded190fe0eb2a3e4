use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use reformrl_core::curriculum::CurriculumMode;
use reformrl_core::eval::{
    format_accuracy_report, pass_at_k_curve, render_curve_svg, write_level_accuracy_csv, write_pass_at_k_csv,
};
use reformrl_core::model::{load_dataset, load_variant_records, Dataset, DifficultyLevel};
use reformrl_core::pipeline::filters::{apply_verdicts, binary_filter, silver_answer_filter};
use reformrl_core::pipeline::hardset::{apply_hard_flags, build_hard_set, load_progress};
use reformrl_core::pipeline::run::load_checkpoint;
use reformrl_core::pipeline::synthetic::synthetic_problems;
use reformrl_core::pipeline::{
    RemoteClient, RemoteSettings, RolloutProvider, RolloutRequest, RunConfig, RunDir, ScriptedProvider, Trainer,
};
use reformrl_core::reformulate::{
    build_all, parse_reformulation_response, render_reformulation_prompt, variant_from_record,
};
use reformrl_core::sim::SimPolicy;
use reformrl_core::Variant;

#[derive(Parser)]
#[command(name = "reformrl", version, about = "Reformulate unsolved problems, schedule them by difficulty, and train with group-normalized rewards")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory holding data, checkpoints, metrics and reports.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a problem file (or generate synthetic problems).
    Ingest {
        #[arg(long, conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        /// Generate this many synthetic numeric problems instead.
        #[arg(long)]
        synthetic: Option<usize>,
    },
    /// Build the four-choice, ten-choice and cloze variants.
    Reformulate {
        /// Ask a provider (scripted:<file> or remote) instead of the built-in
        /// deterministic builder.
        #[arg(long)]
        provider: Option<String>,
    },
    /// Drop unanswerable or mislabeled problems using a judge.
    Filter {
        #[arg(long, value_enum)]
        mode: FilterMode,
        /// scripted:<file> or remote
        #[arg(long)]
        provider: String,
    },
    /// Flag problems with no correct answer among n samples.
    Hardset {
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// simulated, scripted:<file> or remote
        #[arg(long, default_value = "simulated")]
        provider: String,
    },
    /// Train the simulated learner.
    Train {
        #[arg(long, value_enum, default_value = "adaptive")]
        mode: Mode,
        #[arg(long, default_value_t = 200)]
        steps: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the latest checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value_t = 10)]
        checkpoint_every: u64,
    },
    /// pass@k of the latest policy on the original questions.
    Eval {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128")]
        pass_at_k: Vec<usize>,
    },
    /// Per-level accuracy and curriculum plots for the latest run.
    Report {
        #[arg(long, default_value_t = 1000)]
        rollouts: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterMode {
    Binary,
    Silver,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Adaptive,
    Static,
}

impl From<Mode> for CurriculumMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Adaptive => CurriculumMode::Adaptive,
            Mode::Static => CurriculumMode::StaticMixture,
        }
    }
}

struct Paths {
    run: RunDir,
}

impl Paths {
    fn data(&self, name: &str) -> PathBuf {
        self.run.root().join("data").join(name)
    }
    fn problems(&self) -> PathBuf {
        self.data("problems.jsonl")
    }
    fn variants(&self) -> PathBuf {
        self.data("variants.jsonl")
    }
    fn hardset(&self) -> PathBuf {
        self.data("hardset.jsonl")
    }
    fn report(&self, name: &str) -> PathBuf {
        self.run.root().join("reports").join(name)
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {}", chain_message(&e));
        std::process::exit(1);
    }
}

/// Join the error chain, skipping causes a message already quotes.
fn chain_message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply_env();
    let run = RunDir::create(&cli.run_dir)?;
    fs::create_dir_all(run.root().join("data"))?;
    fs::create_dir_all(run.root().join("reports"))?;
    let paths = Paths { run };

    match cli.command {
        Command::Ingest { input, synthetic } => ingest(&paths, &config, input, synthetic),
        Command::Reformulate { provider } => reformulate(&paths, &config, provider.as_deref()),
        Command::Filter { mode, provider } => filter(&paths, &config, mode, &provider),
        Command::Hardset { n, provider } => hardset(&paths, &config, n, &provider),
        Command::Train {
            mode,
            steps,
            seed,
            resume,
            checkpoint_every,
        } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            train(&paths, &config, mode.into(), steps, resume, checkpoint_every)
        }
        Command::Eval { pass_at_k } => eval(&paths, &config, &pass_at_k),
        Command::Report { rollouts } => report(&paths, &config, rollouts),
    }
}

fn ingest(paths: &Paths, config: &RunConfig, input: Option<PathBuf>, synthetic: Option<usize>) -> Result<()> {
    let dataset = match (input, synthetic) {
        (Some(path), _) => load_dataset(&path)?,
        (None, Some(n)) => Dataset::from_problems(synthetic_problems(n, config.seed))?,
        (None, None) => bail!("ingest needs --input <file> or --synthetic <n>"),
    };
    dataset.save_problems(&paths.problems())?;
    log::info!("ingested {} problems into {}", dataset.len(), paths.problems().display());
    Ok(())
}

fn make_provider(spec: &str, paths: &Paths, config: &RunConfig, dataset: &Dataset, temperature: f64) -> Result<RolloutProvider> {
    if let Some(file) = spec.strip_prefix("scripted:") {
        return Ok(RolloutProvider::Scripted(ScriptedProvider::load(Path::new(file))?));
    }
    match spec {
        "simulated" => Ok(RolloutProvider::Simulated {
            policy: Box::new(SimPolicy::from_dataset(dataset, &config.sim(), config.seed)?),
            reward: config.reward(),
        }),
        "remote" => {
            let settings = RemoteSettings::from_config(config, temperature)?;
            Ok(RolloutProvider::Remote(
                RemoteClient::new(settings)?.with_log(&paths.run.requests_log())?,
            ))
        }
        other => bail!("unknown provider {other:?}; expected simulated, scripted:<file> or remote"),
    }
}

/// Problems plus any saved variants and hard flags.
fn load_working_set(paths: &Paths) -> Result<Dataset> {
    let mut dataset = load_dataset(&paths.problems())
        .with_context(|| format!("no problems yet; run `ingest` first ({})", paths.problems().display()))?;
    if paths.variants().exists() {
        for record in load_variant_records(&paths.variants())? {
            let Some(problem) = dataset.problem(&record.problem_id) else {
                continue;
            };
            let variant = variant_from_record(record, &problem.gold_answer.clone());
            if variant.validation.is_valid() {
                dataset.attach_variant(variant)?;
            }
        }
    }
    if paths.hardset().exists() {
        apply_hard_flags(&mut dataset, &load_progress(&paths.hardset())?)?;
    }
    Ok(dataset)
}

fn reformulate(paths: &Paths, config: &RunConfig, provider: Option<&str>) -> Result<()> {
    let mut dataset = load_working_set(paths)?;
    let problems = dataset.problems().to_vec();
    let (mut built, mut rejected) = (0, 0);
    match provider {
        None => {
            for p in &problems {
                match build_all(p, config.seed) {
                    Ok(variants) => {
                        for v in variants {
                            dataset.attach_variant(v)?;
                            built += 1;
                        }
                    }
                    Err(e) => {
                        log::warn!("{}: {e}", p.id);
                        rejected += 1;
                    }
                }
            }
        }
        Some(spec) => {
            let provider = make_provider(spec, paths, config, &dataset, config.rollout_temperature)?;
            let levels = [DifficultyLevel::Mcq4, DifficultyLevel::Mcq10, DifficultyLevel::Cloze];
            let mut requests = Vec::new();
            for p in &problems {
                for level in levels {
                    requests.push(RolloutRequest {
                        problem_id: p.id.clone(),
                        level,
                        prompt: render_reformulation_prompt(p, level)?,
                        m: 1,
                        seed: config.seed,
                    });
                }
            }
            let replies = provider.complete_many(&requests, config.max_in_flight);
            for (req, reply) in requests.iter().zip(replies) {
                let problem = dataset.problem(&req.problem_id).expect("request built from dataset").clone();
                let text = reply?.into_iter().next().unwrap_or_default();
                let variant = parse_reformulation_response(&text, req.level, &problem)?;
                if let reformrl_core::Validation::Invalid(reason) = &variant.validation {
                    log::warn!("{} level {}: {reason}", req.problem_id, req.level);
                    rejected += 1;
                    continue;
                }
                dataset.attach_variant(variant)?;
                built += 1;
            }
            for p in &problems {
                dataset.attach_variant(Variant::open_ended(p))?;
            }
        }
    }
    dataset.save_variants(&paths.variants())?;
    log::info!("{built} variants saved, {rejected} rejected");
    Ok(())
}

fn filter(paths: &Paths, config: &RunConfig, mode: FilterMode, provider: &str) -> Result<()> {
    if provider == "simulated" {
        bail!("the simulated learner cannot act as a judge; use scripted:<file> or remote");
    }
    let mut dataset = load_working_set(paths)?;
    let judge = make_provider(provider, paths, config, &dataset, config.eval_temperature)?;
    let (verdicts, name) = match mode {
        FilterMode::Binary => (binary_filter(&dataset, &judge, config.seed, config.max_in_flight)?, "binary"),
        FilterMode::Silver => (
            silver_answer_filter(&dataset, &judge, config.silver_runs, config.seed, config.max_in_flight)?,
            "silver",
        ),
    };
    let out = paths.data(&format!("verdicts-{name}.jsonl"));
    let text: String = verdicts
        .iter()
        .map(|v| serde_json::to_string(v).map(|s| s + "\n"))
        .collect::<Result<_, _>>()?;
    fs::write(&out, text)?;
    let before = dataset.len();
    apply_verdicts(&mut dataset, &verdicts);
    dataset.save_problems(&paths.problems())?;
    if paths.variants().exists() {
        dataset.save_variants(&paths.variants())?;
    }
    log::info!("{name} filter kept {} of {before}", dataset.len());
    Ok(())
}

fn hardset(paths: &Paths, config: &RunConfig, n: usize, provider: &str) -> Result<()> {
    let mut dataset = load_working_set(paths)?;
    let provider = make_provider(provider, paths, config, &dataset, config.rollout_temperature)?;
    let log = build_hard_set(&mut dataset, &provider, n, config.seed, config.max_in_flight, Some(&paths.hardset()))?;
    let hard = log.values().filter(|e| e.hard).count();
    log::info!("{hard} of {} problems have pass@{n} = 0", log.len());
    Ok(())
}

fn train(paths: &Paths, config: &RunConfig, mode: CurriculumMode, steps: u64, resume: bool, every: u64) -> Result<()> {
    let mut dataset = load_working_set(paths)?;
    if !paths.hardset().exists() {
        log::warn!("no hard-set log; training on every problem");
        let ids: Vec<String> = dataset.problems().iter().map(|p| p.id.clone()).collect();
        for id in ids {
            dataset.set_hard(&id, true)?;
        }
    }
    let incomplete: Vec<String> = dataset
        .hard_ids()
        .into_iter()
        .filter(|id| dataset.variants_of(id).is_none_or(|v| v.len() < DifficultyLevel::ALL.len()))
        .map(String::from)
        .collect();
    for id in &incomplete {
        log::warn!("{id} lacks a valid variant at some level; leaving it out of training");
        dataset.set_hard(id, false)?;
    }
    if dataset.hard_ids().is_empty() {
        bail!("no trainable problems: every hard problem lacks a valid variant at some level");
    }
    let run = &paths.run;
    let mut trainer = match (resume, run.latest_checkpoint()?) {
        (true, Some(step)) => {
            run.rewind_to(step)?;
            log::info!("resuming from step {step}");
            Trainer::from_checkpoint(dataset, config, &run.checkpoint(step))?
        }
        (true, None) => bail!("--resume given but {} has no checkpoint", run.checkpoints().display()),
        (false, Some(_)) => bail!(
            "{} already holds a run; pass --resume or choose another --run-dir",
            run.root().display()
        ),
        (false, None) => {
            let _ = fs::remove_file(run.metrics());
            Trainer::new(dataset, config, mode)?
        }
    };
    run.write_config_snapshot(config)?;
    let summary = trainer.run(steps, Some(run), every)?;
    log::info!(
        "step {} ({} run{}), {} rollouts, open-ended pass@1 {:.4}",
        summary.final_step,
        summary.steps_run,
        if summary.completed { ", all graduated" } else { "" },
        summary.rollouts_used,
        summary.pass_at_1
    );
    Ok(())
}

fn latest_policy(paths: &Paths) -> Result<(u64, SimPolicy)> {
    let step = paths
        .run
        .latest_checkpoint()?
        .context("no checkpoint; run `train` first")?;
    let (c, p) = load_checkpoint(&paths.run.checkpoint(step))?;
    Ok((c.step, p.policy))
}

fn eval(paths: &Paths, config: &RunConfig, ks: &[usize]) -> Result<()> {
    let (step, trained) = latest_policy(paths)?;
    let dataset = load_working_set(paths)?;
    let initial = SimPolicy::from_dataset(&dataset, &config.sim(), config.seed)?;
    let n = ks.iter().copied().max().context("--pass-at-k is empty")?;
    let reward = config.reward();
    let curve_of = |policy: &SimPolicy| -> Result<BTreeMap<usize, f64>> {
        let samples = policy
            .problem_ids()
            .enumerate()
            .map(|(i, id)| {
                let seed = reformrl_core::seed::derive(config.seed, &[u64::MAX, i as u64]);
                let g = policy.sample_rollouts(id, DifficultyLevel::OpenEnded, n, seed, &reward)?;
                Ok((n, g.correct.iter().filter(|&&c| c).count()))
            })
            .collect::<Result<Vec<_>, reformrl_core::sim::SimError>>()?;
        Ok(pass_at_k_curve(&samples, ks)?)
    };
    let before = curve_of(&initial)?;
    let after = curve_of(&trained)?;
    write_pass_at_k_csv(&paths.report("pass_at_k.csv"), &after)?;
    write_pass_at_k_csv(&paths.report("pass_at_k_initial.csv"), &before)?;
    let pts = |c: &BTreeMap<usize, f64>| c.iter().map(|(&k, &v)| (k as f64, v)).collect::<Vec<_>>();
    let (a, b) = (pts(&after), pts(&before));
    let svg = render_curve_svg(
        &format!("pass@k on open-ended questions (step {step})"),
        "k",
        &[("trained", &a), ("initial", &b)],
    );
    fs::write(paths.report("pass_at_k.svg"), svg)?;
    for (k, v) in &after {
        println!("pass@{k}\t{v:.4}\t(initial {:.4})", before[k]);
    }
    Ok(())
}

fn report(paths: &Paths, config: &RunConfig, rollouts: usize) -> Result<()> {
    let (step, policy) = latest_policy(paths)?;
    let reward = config.reward();
    let ids: Vec<&str> = policy.problem_ids().collect();
    let mut groups = Vec::new();
    if !ids.is_empty() {
        for level in DifficultyLevel::ALL {
            for j in 0..rollouts.div_ceil(8) {
                let id = ids[j % ids.len()];
                let seed = reformrl_core::seed::derive(config.seed, &[u64::MAX - 1, level.as_u8() as u64, j as u64]);
                groups.push(policy.sample_rollouts(id, level, 8, seed, &reward)?);
            }
        }
    }
    let accuracy = format_accuracy_report(&groups);
    write_level_accuracy_csv(&paths.report("level_accuracy.csv"), &accuracy)?;
    println!("level accuracy at step {step}:");
    for (level, acc) in &accuracy {
        println!("  {:<6} {acc:.4}", level.name());
    }

    // batch share per level over training, from metrics.csv
    let metrics = fs::read_to_string(paths.run.metrics()).unwrap_or_default();
    let mut lines = metrics.lines();
    if let Some(header) = lines.next() {
        let cols: Vec<&str> = header.split(',').collect();
        let series: Vec<(String, Vec<(f64, f64)>)> = DifficultyLevel::ALL
            .iter()
            .filter_map(|l| {
                let col = cols.iter().position(|c| *c == format!("hist_{}", l.name()))?;
                Some((l.name().to_string(), col))
            })
            .map(|(name, col)| {
                let pts = metrics
                    .lines()
                    .skip(1)
                    .filter_map(|row| {
                        let f: Vec<&str> = row.split(',').collect();
                        Some((f[0].parse().ok()?, f.get(col)?.parse().ok()?))
                    })
                    .collect();
                (name, pts)
            })
            .collect();
        let refs: Vec<(&str, &[(f64, f64)])> = series.iter().map(|(n, p)| (n.as_str(), p.as_slice())).collect();
        let svg = render_curve_svg("active records per level", "step", &refs);
        fs::write(paths.report("level_histogram.svg"), svg)?;
    }
    Ok(())
}
