//! Hard-set construction: a problem is hard when none of `n` sampled
//! solutions is correct.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::filters::SOLVE_PROMPT;
use super::provider::{ProviderError, RolloutProvider, RolloutRequest};
use crate::grpo::{score_completion, RewardConfig};
use crate::model::{read_jsonl, Dataset, DatasetError, DifficultyLevel};

#[derive(Debug, Error)]
pub enum HardSetError {
    #[error("sampling failed on {problem_id} ({done} problem(s) already saved): {source}")]
    Provider {
        problem_id: String,
        done: usize,
        #[source]
        source: ProviderError,
    },
    #[error("progress log {path}: {source}")]
    Log {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// One graded problem in the build log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardSetEntry {
    pub problem_id: String,
    pub n: usize,
    pub correct: usize,
    pub hard: bool,
    pub graded: Vec<bool>,
}

pub fn load_progress(path: &Path) -> Result<BTreeMap<String, HardSetEntry>, DatasetError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let lines: Vec<(usize, HardSetEntry)> = read_jsonl(path)?;
    Ok(lines.into_iter().map(|(_, e)| (e.problem_id.clone(), e)).collect())
}

/// Set hard flags from a build log; problems absent from the log keep their
/// current flag.
pub fn apply_hard_flags(dataset: &mut Dataset, entries: &BTreeMap<String, HardSetEntry>) -> Result<(), DatasetError> {
    for entry in entries.values() {
        if dataset.problem(&entry.problem_id).is_some() {
            dataset.set_hard(&entry.problem_id, entry.hard)?;
        }
    }
    Ok(())
}

/// Sample `n` solutions per problem, grade them, and flag the problems with
/// zero correct. With a `progress` path every graded problem is appended as
/// soon as its batch finishes, and problems already in the log are skipped,
/// so an aborted build resumes where it stopped.
pub fn build_hard_set(
    dataset: &mut Dataset,
    provider: &RolloutProvider,
    n: usize,
    seed: u64,
    max_in_flight: usize,
    progress: Option<&Path>,
) -> Result<BTreeMap<String, HardSetEntry>, HardSetError> {
    let log_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| HardSetError::Log { path, source }
    };
    let mut done = match progress {
        Some(path) => load_progress(path)?,
        None => BTreeMap::new(),
    };
    let mut log = match progress {
        Some(path) => {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(log_err(path))?;
            }
            Some(OpenOptions::new().create(true).append(true).open(path).map_err(log_err(path))?)
        }
        None => None,
    };
    let reward = RewardConfig::default();
    let todo: Vec<_> = dataset
        .problems()
        .iter()
        .filter(|p| !done.contains_key(&p.id))
        .cloned()
        .collect();
    for chunk in todo.chunks(max_in_flight.max(1)) {
        let requests: Vec<RolloutRequest> = chunk
            .iter()
            .map(|p| RolloutRequest {
                problem_id: p.id.clone(),
                level: DifficultyLevel::OpenEnded,
                prompt: format!("{SOLVE_PROMPT}{}", p.question),
                m: n,
                seed: crate::seed::derive(seed, &[crate::seed::hash_str(&p.id)]),
            })
            .collect();
        for (p, reply) in chunk.iter().zip(provider.complete_many(&requests, max_in_flight)) {
            let completions = reply.map_err(|source| HardSetError::Provider {
                problem_id: p.id.clone(),
                done: done.len(),
                source,
            })?;
            let graded: Vec<bool> = completions
                .iter()
                .map(|c| score_completion(c, &p.gold_answer, &reward).is_correct())
                .collect();
            let correct = graded.iter().filter(|&&g| g).count();
            let entry = HardSetEntry {
                problem_id: p.id.clone(),
                n: graded.len(),
                correct,
                hard: correct == 0,
                graded,
            };
            if let (Some(file), Some(path)) = (log.as_mut(), progress) {
                let line = serde_json::to_string(&entry).expect("entry serializes");
                writeln!(file, "{line}").map_err(log_err(path))?;
                file.flush().map_err(log_err(path))?;
            }
            done.insert(entry.problem_id.clone(), entry);
        }
    }
    apply_hard_flags(dataset, &done)?;
    Ok(done)
}
