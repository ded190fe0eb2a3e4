//! Judge-based filters that drop incomplete or mislabeled problems.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::provider::{ProviderError, RolloutProvider, RolloutRequest};
use crate::model::{Dataset, DifficultyLevel, Problem};
use crate::verify::{equivalent, extract_boxed};

pub const SOLVE_PROMPT: &str = "Solve the following problem. Reason step by step and put your final answer within \\boxed{}.\n\n";

pub const ANSWERABLE_PROMPT: &str = "Decide whether the following math question is complete and answerable as stated: every quantity it needs is given, it refers to no missing figure or table, and it has a single well-defined answer. Reply with exactly one token: ANSWERABLE or UNANSWERABLE.\n\nQuestion: ";

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("silver filter needs an odd number of runs, got {0}")]
    EvenRuns(usize),
    #[error("judge failed on {problem_id}: {source}")]
    Judge {
        problem_id: String,
        #[source]
        source: ProviderError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Binary,
    Silver,
}

/// Only final answers are kept; judge reasoning is discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub problem_id: String,
    pub filter: FilterKind,
    pub kept: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub judge_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Kept only when a strict majority of judge answers match the gold.
/// Unparseable runs (`None`) count against.
pub fn majority_keeps(answers: &[Option<String>], gold: &str) -> bool {
    let agree = answers
        .iter()
        .filter(|a| a.as_deref().is_some_and(|a| equivalent(a, gold)))
        .count();
    2 * agree > answers.len()
}

/// The last ANSWERABLE/UNANSWERABLE token in the reply, if any.
pub fn parse_answerable(reply: &str) -> Option<bool> {
    static TOKEN: OnceLock<Regex> = OnceLock::new();
    let re = TOKEN.get_or_init(|| Regex::new(r"\b(UN)?ANSWERABLE\b").unwrap());
    re.captures_iter(reply).last().map(|c| c.get(1).is_none())
}

fn judge_request(problem: &Problem, prompt: String, m: usize, seed: u64) -> RolloutRequest {
    RolloutRequest {
        problem_id: problem.id.clone(),
        level: DifficultyLevel::OpenEnded,
        prompt,
        m,
        seed: crate::seed::derive(seed, &[crate::seed::hash_str(&problem.id)]),
    }
}

/// Ask the judge to solve each problem `runs` times and keep it when the
/// majority answer agrees with the gold.
pub fn silver_answer_filter(
    dataset: &Dataset,
    judge: &RolloutProvider,
    runs: usize,
    seed: u64,
    max_in_flight: usize,
) -> Result<Vec<FilterVerdict>, FilterError> {
    if runs.is_multiple_of(2) {
        return Err(FilterError::EvenRuns(runs));
    }
    let requests: Vec<RolloutRequest> = dataset
        .problems()
        .iter()
        .map(|p| judge_request(p, format!("{SOLVE_PROMPT}{}", p.question), runs, seed))
        .collect();
    let replies = judge.complete_many(&requests, max_in_flight);
    dataset
        .problems()
        .iter()
        .zip(replies)
        .map(|(p, reply)| {
            let completions = reply.map_err(|source| FilterError::Judge {
                problem_id: p.id.clone(),
                source,
            })?;
            let answers: Vec<Option<String>> = completions.iter().map(|c| extract_boxed(c)).collect();
            let unparseable = answers.iter().filter(|a| a.is_none()).count();
            if unparseable > 0 {
                log::info!("{}: {unparseable} judge run(s) without a boxed answer", p.id);
            }
            Ok(FilterVerdict {
                problem_id: p.id.clone(),
                filter: FilterKind::Silver,
                kept: majority_keeps(&answers, &p.gold_answer),
                judge_answers: answers.into_iter().map(Option::unwrap_or_default).collect(),
                note: (unparseable > 0).then(|| format!("{unparseable} unparseable")),
            })
        })
        .collect()
}

/// Ask the judge whether each question is complete and answerable.
pub fn binary_filter(
    dataset: &Dataset,
    judge: &RolloutProvider,
    seed: u64,
    max_in_flight: usize,
) -> Result<Vec<FilterVerdict>, FilterError> {
    let requests: Vec<RolloutRequest> = dataset
        .problems()
        .iter()
        .map(|p| judge_request(p, format!("{ANSWERABLE_PROMPT}{}", p.question), 1, seed))
        .collect();
    let replies = judge.complete_many(&requests, max_in_flight);
    dataset
        .problems()
        .iter()
        .zip(replies)
        .map(|(p, reply)| {
            let completions = reply.map_err(|source| FilterError::Judge {
                problem_id: p.id.clone(),
                source,
            })?;
            let verdict = completions.first().and_then(|c| parse_answerable(c));
            if verdict.is_none() {
                log::warn!("{}: unparseable answerability verdict, dropping", p.id);
            }
            Ok(FilterVerdict {
                problem_id: p.id.clone(),
                filter: FilterKind::Binary,
                kept: verdict == Some(true),
                judge_answers: Vec::new(),
                note: verdict.is_none().then(|| "unparseable verdict".to_string()),
            })
        })
        .collect()
}

/// Drop every problem with a `kept = false` verdict.
pub fn apply_verdicts(dataset: &mut Dataset, verdicts: &[FilterVerdict]) {
    let dropped: std::collections::HashSet<&str> = verdicts
        .iter()
        .filter(|v| !v.kept)
        .map(|v| v.problem_id.as_str())
        .collect();
    dataset.retain(|p| !dropped.contains(p.id.as_str()));
}
