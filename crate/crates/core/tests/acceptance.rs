//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reformrl_core::curriculum::{CurriculumMode, GraduationPolicy};
use reformrl_core::eval::{format_accuracy_report, pass_at_k, pass_at_k_curve};
use reformrl_core::grpo::{normalize_group, RewardConfig, RolloutGroup};
use reformrl_core::model::{Dataset, DifficultyLevel, Problem, Validation, Variant};
use reformrl_core::pipeline::filters::{apply_verdicts, binary_filter, silver_answer_filter};
use reformrl_core::pipeline::hardset::build_hard_set;
use reformrl_core::pipeline::run::copy_metrics_prefix;
use reformrl_core::pipeline::synthetic::{attach_built_variants, synthetic_dataset, synthetic_problems};
use reformrl_core::pipeline::{FixtureLine, RolloutProvider, RunConfig, RunDir, ScriptedProvider, Trainer};
use reformrl_core::reformulate::{validate_cloze, validate_mcq};
use reformrl_core::sim::{SimConfig, SimPolicy};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn problem(id: &str, question: &str, gold: &str) -> Problem {
    Problem {
        id: id.into(),
        question: question.into(),
        gold_answer: gold.into(),
        source: None,
        pass_rate_prior: None,
    }
}

fn mcq(options: &[&str]) -> Variant {
    let level = if options.len() == 10 {
        DifficultyLevel::Mcq10
    } else {
        DifficultyLevel::Mcq4
    };
    Variant {
        problem_id: "p1".into(),
        level,
        prompt: String::new(),
        options: Some(options.iter().map(|s| s.to_string()).collect()),
        mask: None,
        validation: Validation::Valid,
        needs_review: false,
    }
}

fn validator_fidelity() -> Outcome {
    check(
        !validate_cloze("1_0", "101").is_valid(),
        "mask 1_0 over 101 accepted",
    )?;
    check(validate_cloze("1__3", "1003").is_valid(), "mask 1__3 over 1003 rejected")?;
    check(
        validate_mcq(&mcq(&["18", "21", "24", "15"]), "21").is_valid(),
        "options {18,21,24,15} rejected",
    )?;
    check(
        !validate_mcq(&mcq(&["18", "21", "\\frac{42}{2}", "15"]), "21").is_valid(),
        "duplicated-equivalent option set accepted",
    )?;
    Ok("4/4 verdicts exact".into())
}

fn policy_bytes(p: &SimPolicy) -> Vec<u8> {
    serde_json::to_vec(p).unwrap()
}

fn zero_signal() -> Outcome {
    let dataset = synthetic_dataset(30, 11, true).map_err(|e| e.to_string())?;
    let config = RunConfig {
        seed: 5,
        ..RunConfig::default()
    };
    let mut trainer = Trainer::new(dataset, &config, CurriculumMode::StaticMixture).map_err(|e| e.to_string())?;
    let ids: Vec<String> = trainer.policy().problem_ids().map(String::from).collect();
    let mut checked = 0;
    for (label, logit) in [("all-fail", -60.0), ("all-pass", 60.0)] {
        for id in &ids {
            for l in DifficultyLevel::ALL {
                trainer.policy_mut().set_knowledge_logit(id, l, logit);
            }
        }
        for _ in 0..5 {
            let before = policy_bytes(trainer.policy());
            let report = trainer.step_once().map_err(|e| e.to_string())?.ok_or("no batch")?;
            check(
                report.groups.iter().all(|g| g.rewards.iter().all(|&r| r == g.rewards[0])),
                format!("{label}: a group had varying rewards"),
            )?;
            check(
                report.groups.iter().all(|g| g.advantages.iter().all(|&a| a == 0.0)),
                format!("{label}: non-zero advantage"),
            )?;
            check(
                policy_bytes(trainer.policy()) == before,
                format!("{label}: policy changed at step {}", report.step),
            )?;
            checked += 1;
        }
    }
    Ok(format!("{checked} constant-reward steps, policy bitwise unchanged"))
}

fn advantage_math() -> Outcome {
    let got = normalize_group(&[1.2, 0.2, 0.2, 0.2], 1e-8);
    let want = [1.7321, -0.5774, -0.5774, -0.5774];
    let worst = got
        .iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    check(worst < 1e-4, format!("max deviation {worst}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let choices = [0.0, 0.2, 1.2];
    let mut groups = 0;
    for _ in 0..10_000 {
        let m = rng.gen_range(1..=64);
        let rewards: Vec<f64> = (0..m).map(|_| choices[rng.gen_range(0..3)]).collect();
        let adv = normalize_group(&rewards, 1e-8);
        let sum: f64 = adv.iter().sum();
        check(sum.abs() < 1e-9 * m as f64, format!("group of {m} sums to {sum}"))?;
        groups += 1;
    }
    Ok(format!("example within {worst:.1e}; {groups} random groups sum to ~0"))
}

/// Advantage-weighted log-likelihood of the sampled candidates, from an
/// explicit log-softmax over the whole pool.
fn frozen_objective(logits: &[f64], group: &RolloutGroup) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let m = group.choices.len() as f64;
    group
        .choices
        .iter()
        .zip(&group.advantages)
        .map(|(&c, &a)| a * (logits[c] - lse))
        .sum::<f64>()
        / m
}

fn gradient_check() -> Outcome {
    let dataset = synthetic_dataset(10, 2, true).map_err(|e| e.to_string())?;
    let base = SimPolicy::from_dataset(&dataset, &SimConfig::default(), 2).map_err(|e| e.to_string())?;
    let ids: Vec<String> = base.problem_ids().map(String::from).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let reward = RewardConfig::default();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut informative = 0;
    for batch in 0..100 {
        let mut policy = base.clone();
        let id = &ids[rng.gen_range(0..ids.len())];
        let level = DifficultyLevel::ALL[rng.gen_range(0..4)];
        let g = rng.gen_range(-3.0..3.0);
        let b = rng.gen_range(-1.5..1.5);
        policy.set_knowledge_logit(id, level, g);
        policy.set_format_bias(level, b);
        let m = rng.gen_range(2..=16);
        let group = policy
            .sample_rollouts(id, level, m, 1000 + batch, &reward)
            .map_err(|e| e.to_string())?;
        if group.has_signal() {
            informative += 1;
        }
        let analytic = policy.policy_gradient(&group).map_err(|e| e.to_string())?.gold_logit;
        let pool = policy.pool(id, level).map_err(|e| e.to_string())?.clone();
        let objective = |gold_logit: f64| {
            let mut logits = vec![0.0; pool.len()];
            logits[pool.gold_index] = gold_logit;
            frozen_objective(&logits, &group)
        };
        // knowledge and format bias both enter through the gold logit
        for shift in [(1.0, 0.0), (0.0, 1.0)] {
            let z = |eps: f64| (g + shift.0 * eps) + (b + shift.1 * eps);
            let fd = (objective(z(h)) - objective(z(-h))) / (2.0 * h);
            worst = worst.max((fd - analytic).abs());
        }
    }
    check(worst < 1e-5, format!("max |analytic - fd| = {worst:e}"))?;
    Ok(format!("100 batches ({informative} with signal), max diff {worst:.1e}"))
}

fn difficulty_ordering() -> Outcome {
    let dataset = synthetic_dataset(5, 4, true).map_err(|e| e.to_string())?;
    let policy = SimPolicy::from_dataset(&dataset, &SimConfig::default(), 4).map_err(|e| e.to_string())?;
    let ids: Vec<String> = policy.problem_ids().map(String::from).collect();
    let reward = RewardConfig::default();
    let n_per_level = 10_000;
    let mut groups = Vec::new();
    for level in DifficultyLevel::ALL {
        for j in 0..n_per_level / 8 {
            let id = &ids[j % ids.len()];
            groups.push(
                policy
                    .sample_rollouts(id, level, 8, 77_000 + j as u64 * 4 + level.index() as u64, &reward)
                    .map_err(|e| e.to_string())?,
            );
        }
    }
    let report = format_accuracy_report(&groups);
    let expected = [0.25, 0.10, 0.10, 0.02];
    let mut parts = Vec::new();
    let mut sigmas = Vec::new();
    for (l, p) in DifficultyLevel::ALL.iter().zip(expected) {
        let sigma = (p * (1.0 - p) / n_per_level as f64).sqrt();
        let got = report[l];
        check(
            (got - p).abs() <= 3.0 * sigma,
            format!("{} rate {got} vs {p} (3 sigma = {:.4})", l.name(), 3.0 * sigma),
        )?;
        parts.push(format!("{}={got:.4}", l.name()));
        sigmas.push(sigma);
    }
    // The closed-form rates are non-increasing; two levels share 0.10, so the
    // measured comparison allows 3 sigma of the difference.
    let probe = policy.transfer_probe(&ids[0]).map_err(|e| e.to_string())?;
    let exact: Vec<f64> = probe.values().copied().collect();
    check(exact.windows(2).all(|w| w[0] >= w[1]), "closed-form rates not ordered")?;
    let measured: Vec<f64> = report.values().copied().collect();
    for i in 0..3 {
        let slack = 3.0 * (sigmas[i].powi(2) + sigmas[i + 1].powi(2)).sqrt();
        check(
            measured[i + 1] <= measured[i] + slack,
            format!("level {} above level {}", i + 2, i + 1),
        )?;
    }
    Ok(parts.join(" "))
}

fn first_step_reaching(trainer: &mut Trainer, steps: u64, target: f64) -> Result<(Option<u64>, Vec<[f64; 4]>), String> {
    let mut reached = None;
    let mut shares = Vec::new();
    for _ in 0..steps {
        let share = trainer.state().expected_level_share();
        shares.push([0, 1, 2, 3].map(|i| share[&DifficultyLevel::ALL[i]]));
        let Some(_) = trainer.step_once().map_err(|e| e.to_string())? else {
            break;
        };
        if reached.is_none() && trainer.policy().mean_gold_probability(DifficultyLevel::OpenEnded) >= target {
            reached = Some(trainer.rollouts_used());
        }
    }
    Ok((reached, shares))
}

fn curriculum_dynamics() -> Outcome {
    let dataset = synthetic_dataset(50, 2024, true).map_err(|e| e.to_string())?;
    let mut wins = 0;
    let mut shape_ok = 0;
    let mut detail = Vec::new();
    for seed in 0..20u64 {
        let config = RunConfig {
            seed,
            tau: 0.5,
            curriculum_m: 8,
            rollout_n: 8,
            graduation: GraduationPolicy::Downweight(1.0),
            ..RunConfig::default()
        };
        let mut adaptive =
            Trainer::new(dataset.clone(), &config, CurriculumMode::Adaptive).map_err(|e| e.to_string())?;
        let (a_budget, shares) = first_step_reaching(&mut adaptive, 200, 0.5)?;
        let mut fixed =
            Trainer::new(dataset.clone(), &config, CurriculumMode::StaticMixture).map_err(|e| e.to_string())?;
        let (s_budget, _) = first_step_reaching(&mut fixed, 200, 0.5)?;

        let l1: Vec<f64> = shares.iter().map(|s| s[0]).collect();
        let l4: Vec<f64> = shares.iter().map(|s| s[3]).collect();
        let peak = l1
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > l1[best] { i } else { best });
        let l1_ok = l1[peak..].windows(2).all(|w| w[1] <= w[0]);
        let l4_ok = l4.windows(2).all(|w| w[1] >= w[0]);
        if l1_ok && l4_ok {
            shape_ok += 1;
        }
        let win = match (a_budget, s_budget) {
            (Some(a), Some(s)) => a <= s,
            (Some(_), None) => true,
            _ => false,
        };
        wins += usize::from(win);
        detail.push(format!(
            "{}/{}",
            a_budget.map_or("-".into(), |b| b.to_string()),
            s_budget.map_or("-".into(), |b| b.to_string())
        ));
    }
    check(shape_ok == 20, format!("batch-share shape held in {shape_ok}/20 seeds"))?;
    check(
        wins >= 16,
        format!("adaptive within static budget in {wins}/20 seeds; budgets {}", detail.join(" ")),
    )?;
    Ok(format!("shape 20/20, budget wins {wins}/20"))
}

fn transfer_ablation() -> Outcome {
    let dataset = synthetic_dataset(20, 8, true).map_err(|e| e.to_string())?;
    let reward = RewardConfig::default();
    let mut drifts = Vec::new();
    for transfer in [false, true] {
        let config = SimConfig {
            transfer,
            ..SimConfig::default()
        };
        let mut policy = SimPolicy::from_dataset(&dataset, &config, 8).map_err(|e| e.to_string())?;
        let ids: Vec<String> = policy.problem_ids().map(String::from).collect();
        let before = policy.mean_gold_probability(DifficultyLevel::OpenEnded);
        for step in 0..200u64 {
            let groups = ids
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let level = if i % 2 == 0 {
                        DifficultyLevel::Mcq4
                    } else {
                        DifficultyLevel::Mcq10
                    };
                    policy.sample_rollouts(id, level, 8, step * 1000 + i as u64, &reward)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            policy.batch_update(&groups).map_err(|e| e.to_string())?;
        }
        let after = policy.mean_gold_probability(DifficultyLevel::OpenEnded);
        drifts.push(after - before);
    }
    check(drifts[0].abs() <= 0.01, format!("no-transfer drift {}", drifts[0]))?;
    check(drifts[1] > 0.01, format!("transfer learner did not move: {}", drifts[1]))?;
    Ok(format!(
        "open-ended drift {:+.4} without transfer ({:+.4} with)",
        drifts[0], drifts[1]
    ))
}

fn brute_force_pass_at_k(n: usize, c: usize, k: usize) -> f64 {
    // items 0..c are correct
    let correct_mask: u32 = (1u32 << c) - 1;
    let (mut hit, mut total) = (0u64, 0u64);
    for subset in 0u32..(1 << n) {
        if subset.count_ones() as usize != k {
            continue;
        }
        total += 1;
        if subset & correct_mask != 0 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

fn pass_at_k_estimator() -> Outcome {
    let mut cases = 0;
    for n in 1..=12 {
        for c in 0..=n {
            for k in 1..=n {
                let est = pass_at_k(n, c, k).map_err(|e| e.to_string())?;
                let oracle = brute_force_pass_at_k(n, c, k);
                check(
                    (est - oracle).abs() < 1e-12,
                    format!("n={n} c={c} k={k}: {est} vs {oracle}"),
                )?;
                cases += 1;
            }
        }
    }
    check(pass_at_k(64, 1, 8).map_err(|e| e.to_string())? == 0.125, "pass@8 of (64,1) != 0.125")?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ks: Vec<usize> = (1..=128).collect();
    for _ in 0..50 {
        let samples: Vec<(usize, usize)> = (0..rng.gen_range(1..20))
            .map(|_| {
                let n = rng.gen_range(128..=160);
                (n, rng.gen_range(0..=n / 4))
            })
            .collect();
        let curve = pass_at_k_curve(&samples, &ks).map_err(|e| e.to_string())?;
        let values: Vec<f64> = curve.values().copied().collect();
        check(values.windows(2).all(|w| w[1] >= w[0]), "curve not monotone in k")?;
    }
    Ok(format!("{cases} (n,c,k) cases match enumeration; pass@8(64,1) = 0.125"))
}

fn write_fixture(path: &Path, lines: &[FixtureLine]) {
    let text: String = lines
        .iter()
        .map(|l| serde_json::to_string(l).unwrap() + "\n")
        .collect();
    fs::write(path, text).unwrap();
}

/// hardset, filters, training and evaluation over scripted providers.
fn full_pipeline(root: &Path) -> Result<(), String> {
    let problems = synthetic_problems(24, 31);
    let mut dataset = Dataset::from_problems(problems.clone()).map_err(|e| e.to_string())?;
    let sampler: Vec<FixtureLine> = problems
        .iter()
        .enumerate()
        .map(|(i, p)| FixtureLine {
            problem_id: p.id.clone(),
            level: None,
            completions: if i % 6 == 0 {
                vec![format!("\\boxed{{{}}}", p.gold_answer)]
            } else {
                vec!["\\boxed{0}".into(), "no answer".into()]
            },
        })
        .collect();
    let judge: Vec<FixtureLine> = problems
        .iter()
        .enumerate()
        .map(|(i, p)| FixtureLine {
            problem_id: p.id.clone(),
            level: None,
            completions: if i % 7 == 3 {
                vec!["\\boxed{1}".into()]
            } else {
                vec![format!("\\boxed{{{}}}", p.gold_answer), "\\boxed{2}".into(), format!("\\boxed{{{}}}", p.gold_answer)]
            },
        })
        .collect();
    let binary: Vec<FixtureLine> = problems
        .iter()
        .enumerate()
        .map(|(i, p)| FixtureLine {
            problem_id: p.id.clone(),
            level: None,
            completions: vec![if i % 11 == 5 { "UNANSWERABLE" } else { "ANSWERABLE" }.into()],
        })
        .collect();
    let fixtures = root.join("fixtures");
    fs::create_dir_all(&fixtures).map_err(|e| e.to_string())?;
    for (name, lines) in [("sampler", &sampler), ("judge", &judge), ("binary", &binary)] {
        write_fixture(&fixtures.join(format!("{name}.jsonl")), lines);
    }
    let load = |name: &str| {
        ScriptedProvider::load(&fixtures.join(format!("{name}.jsonl")))
            .map(RolloutProvider::Scripted)
            .map_err(|e| e.to_string())
    };

    let run = RunDir::create(&root.join("run")).map_err(|e| e.to_string())?;
    let config = RunConfig {
        seed: 99,
        graduation: GraduationPolicy::Downweight(0.5),
        ..RunConfig::default()
    };
    run.write_config_snapshot(&config).map_err(|e| e.to_string())?;

    build_hard_set(&mut dataset, &load("sampler")?, 64, config.seed, 4, Some(&root.join("hardset.jsonl")))
        .map_err(|e| e.to_string())?;
    let binary_verdicts = binary_filter(&dataset, &load("binary")?, config.seed, 4).map_err(|e| e.to_string())?;
    apply_verdicts(&mut dataset, &binary_verdicts);
    let silver = silver_answer_filter(&dataset, &load("judge")?, 3, config.seed, 4).map_err(|e| e.to_string())?;
    apply_verdicts(&mut dataset, &silver);
    attach_built_variants(&mut dataset, config.seed).map_err(|e| e.to_string())?;

    let mut trainer = Trainer::new(dataset, &config, CurriculumMode::Adaptive).map_err(|e| e.to_string())?;
    trainer.run(50, Some(&run), 1).map_err(|e| e.to_string())?;

    let reward = RewardConfig::default();
    let policy = trainer.policy();
    let samples = policy
        .problem_ids()
        .enumerate()
        .map(|(i, id)| {
            let g = policy.sample_rollouts(id, DifficultyLevel::OpenEnded, 128, 5_000 + i as u64, &reward)?;
            Ok((128, g.correct.iter().filter(|&&c| c).count()))
        })
        .collect::<Result<Vec<_>, reformrl_core::sim::SimError>>()
        .map_err(|e| e.to_string())?;
    let curve = pass_at_k_curve(&samples, &[1, 2, 4, 8, 16, 32, 64, 128]).map_err(|e| e.to_string())?;
    reformrl_core::eval::write_pass_at_k_csv(&run.root().join("pass_at_k.csv"), &curve).map_err(|e| e.to_string())
}

fn pipeline_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    full_pipeline(&a)?;
    full_pipeline(&b)?;
    let read = |p: &Path| fs::read(p).map_err(|e| e.to_string());
    let metrics_a = read(&a.join("run/metrics.csv"))?;
    check(metrics_a == read(&b.join("run/metrics.csv"))?, "metrics.csv differs between runs")?;
    check(
        read(&a.join("run/pass_at_k.csv"))? == read(&b.join("run/pass_at_k.csv"))?,
        "pass@k report differs between runs",
    )?;
    let rows = String::from_utf8_lossy(&metrics_a).lines().count() - 1;

    // resume from every checkpoint into a fresh directory and replay
    let run_a = RunDir::create(&a.join("run")).map_err(|e| e.to_string())?;
    let steps = run_a.checkpoint_steps().map_err(|e| e.to_string())?;
    let last = *steps.last().ok_or("no checkpoints written")?;
    let config = RunConfig {
        seed: 99,
        graduation: GraduationPolicy::Downweight(0.5),
        ..RunConfig::default()
    };
    let mut resumed = 0;
    for &k in steps.iter().filter(|&&k| k < last) {
        let dir = tmp.path().join(format!("resume-{k}"));
        let run = RunDir::create(&dir).map_err(|e| e.to_string())?;
        copy_metrics_prefix(&run_a.metrics(), &run.metrics(), k).map_err(|e| e.to_string())?;
        let dataset = rebuild_filtered_dataset(&a)?;
        let mut trainer =
            Trainer::from_checkpoint(dataset, &config, &run_a.checkpoint(k)).map_err(|e| e.to_string())?;
        trainer.run(50, Some(&run), 1).map_err(|e| e.to_string())?;
        check(read(&run.metrics())? == metrics_a, format!("resume from step {k} diverged"))?;
        resumed += 1;
    }
    Ok(format!("{rows} metric rows byte-identical; {resumed} resumes replay exactly"))
}

/// The trainer only reads variants from the dataset; rebuild them the way the
/// original run did.
fn rebuild_filtered_dataset(root: &Path) -> Result<Dataset, String> {
    let problems = synthetic_problems(24, 31);
    let ckpt_ids: std::collections::BTreeSet<String> = {
        let run = RunDir::create(&root.join("run")).map_err(|e| e.to_string())?;
        let first = run.checkpoint_steps().map_err(|e| e.to_string())?[0];
        let (c, _) = reformrl_core::pipeline::run::load_checkpoint(&run.checkpoint(first)).map_err(|e| e.to_string())?;
        c.curriculum.records.keys().cloned().collect()
    };
    let mut dataset = Dataset::from_problems(problems).map_err(|e| e.to_string())?;
    dataset.retain(|p| ckpt_ids.contains(&p.id));
    attach_built_variants(&mut dataset, 99).map_err(|e| e.to_string())?;
    for id in &ckpt_ids {
        dataset.set_hard(id, true).map_err(|e| e.to_string())?;
    }
    Ok(dataset)
}

fn filter_rules() -> Outcome {
    let dataset = Dataset::from_problems(vec![
        problem("keep", "q", "21"),
        problem("minority", "q", "21"),
        problem("split", "q", "21"),
    ])
    .map_err(|e| e.to_string())?;
    let boxed = |v: &[&str]| v.iter().map(|a| format!("\\boxed{{{a}}}")).collect::<Vec<_>>();
    let judge = RolloutProvider::Scripted(ScriptedProvider::from_lines([
        FixtureLine {
            problem_id: "keep".into(),
            level: None,
            completions: boxed(&["21", "21", "18"]),
        },
        FixtureLine {
            problem_id: "minority".into(),
            level: None,
            completions: boxed(&["18", "18", "21"]),
        },
        FixtureLine {
            problem_id: "split".into(),
            level: None,
            completions: boxed(&["21", "18", "24"]),
        },
    ]));
    let verdicts = silver_answer_filter(&dataset, &judge, 3, 0, 2).map_err(|e| e.to_string())?;
    let kept: BTreeMap<&str, bool> = verdicts.iter().map(|v| (v.problem_id.as_str(), v.kept)).collect();
    check(kept["keep"], "{21,21,18} dropped")?;
    check(!kept["minority"], "{18,18,21} kept")?;
    check(!kept["split"], "{21,18,24} kept")?;

    let questions = [
        ("five-sixes", "Using five sixes, arithmetic operations, and exponentiation, form numbers from 1 to 14.", "1-14", "UNANSWERABLE"),
        ("figure", "As shown in the figure, in a rectangle with an area of 10,000 square centimeters, a large semicircle and two equal small semicircles are cut out. The remaining shaded area is $\\_$ square centimeters. (Take $\\pi$ as 3.14)", "2150", "UNANSWERABLE"),
        ("board", "What is the largest number of cells in a $9 \\times 9$ board that can be cut along both diagonals without the board falling into pieces?", "21", "ANSWERABLE"),
    ];
    let dataset = Dataset::from_problems(questions.iter().map(|q| problem(q.0, q.1, q.2)).collect())
        .map_err(|e| e.to_string())?;
    let judge = RolloutProvider::Scripted(ScriptedProvider::from_lines(questions.iter().map(|q| FixtureLine {
        problem_id: q.0.into(),
        level: None,
        completions: vec![q.3.into()],
    })));
    let verdicts = binary_filter(&dataset, &judge, 0, 2).map_err(|e| e.to_string())?;
    let kept: BTreeMap<&str, bool> = verdicts.iter().map(|v| (v.problem_id.as_str(), v.kept)).collect();
    check(!kept["five-sixes"], "five-sixes question kept")?;
    check(!kept["figure"], "missing-figure question kept")?;
    check(kept["board"], "well-posed question dropped")?;
    Ok("silver 3/3, binary 3/3".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("validator fidelity", validator_fidelity),
        ("zero-signal reproduction", zero_signal),
        ("advantage math", advantage_math),
        ("gradient check", gradient_check),
        ("difficulty ordering", difficulty_ordering),
        ("curriculum dynamics", curriculum_dynamics),
        ("transfer ablation", transfer_ablation),
        ("pass@k estimator", pass_at_k_estimator),
        ("pipeline determinism", pipeline_determinism),
        ("filter rules", filter_rules),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = std::time::Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why}) [{secs:.2}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
