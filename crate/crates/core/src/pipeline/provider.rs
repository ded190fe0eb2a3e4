//! Where completions come from: the simulated learner, a recorded fixture,
//! or a remote chat-completion endpoint.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::remote::RemoteClient;
use crate::grpo::RewardConfig;
use crate::model::{read_jsonl, DatasetError, DifficultyLevel};
use crate::sim::{SimError, SimPolicy};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no scripted completions for {problem_id}")]
    MissingFixture { problem_id: String },
    #[error("fixture {path}: {source}")]
    Fixture {
        path: String,
        #[source]
        source: DatasetError,
    },
    #[error("HTTP {status} after {attempts} attempt(s): {message}")]
    Http {
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("remote provider needs {0}")]
    Misconfigured(&'static str),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One request for `m` completions of `prompt`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRequest {
    pub problem_id: String,
    pub level: DifficultyLevel,
    pub prompt: String,
    pub m: usize,
    pub seed: u64,
}

/// A recorded line: completions for one problem, optionally for one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureLine {
    pub problem_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<DifficultyLevel>,
    pub completions: Vec<String>,
}

/// Replays recorded completions. A request for `m` completions returns the
/// first `m` recorded ones, cycling when fewer were recorded; the answer
/// depends only on the request, never on call order.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    by_level: HashMap<(String, Option<DifficultyLevel>), Vec<String>>,
    pub path: Option<PathBuf>,
}

impl ScriptedProvider {
    pub fn from_lines(lines: impl IntoIterator<Item = FixtureLine>) -> ScriptedProvider {
        let mut by_level = HashMap::new();
        for line in lines {
            by_level
                .entry((line.problem_id, line.level))
                .or_insert_with(Vec::new)
                .extend(line.completions);
        }
        ScriptedProvider {
            by_level,
            path: None,
        }
    }

    pub fn load(path: &Path) -> Result<ScriptedProvider, ProviderError> {
        let lines: Vec<(usize, FixtureLine)> = read_jsonl(path).map_err(|source| ProviderError::Fixture {
            path: path.display().to_string(),
            source,
        })?;
        let mut p = ScriptedProvider::from_lines(lines.into_iter().map(|(_, l)| l));
        p.path = Some(path.to_path_buf());
        Ok(p)
    }

    pub fn complete(&self, req: &RolloutRequest) -> Result<Vec<String>, ProviderError> {
        let recorded = self
            .by_level
            .get(&(req.problem_id.clone(), Some(req.level)))
            .or_else(|| self.by_level.get(&(req.problem_id.clone(), None)))
            .filter(|c| !c.is_empty())
            .ok_or_else(|| ProviderError::MissingFixture {
                problem_id: req.problem_id.clone(),
            })?;
        Ok(recorded.iter().cycle().take(req.m).cloned().collect())
    }
}

#[derive(Debug)]
pub enum RolloutProvider {
    Simulated {
        policy: Box<SimPolicy>,
        reward: RewardConfig,
    },
    Remote(RemoteClient),
    Scripted(ScriptedProvider),
}

impl RolloutProvider {
    pub fn kind(&self) -> &'static str {
        match self {
            RolloutProvider::Simulated { .. } => "simulated",
            RolloutProvider::Remote(_) => "remote",
            RolloutProvider::Scripted(_) => "scripted",
        }
    }

    pub fn complete(&self, req: &RolloutRequest) -> Result<Vec<String>, ProviderError> {
        match self {
            RolloutProvider::Simulated { policy, reward } => Ok(policy
                .sample_rollouts(&req.problem_id, req.level, req.m, req.seed, reward)?
                .completions),
            RolloutProvider::Remote(client) => client.remote_rollout(&req.prompt, req.m),
            RolloutProvider::Scripted(s) => s.complete(req),
        }
    }

    /// Serve `requests` with at most `max_in_flight` in progress at once.
    /// Results come back in request order.
    pub fn complete_many(
        &self,
        requests: &[RolloutRequest],
        max_in_flight: usize,
    ) -> Vec<Result<Vec<String>, ProviderError>> {
        let workers = max_in_flight.max(1).min(requests.len());
        if workers <= 1 {
            return requests.iter().map(|r| self.complete(r)).collect();
        }
        let next = std::sync::atomic::AtomicUsize::new(0);
        let mut results: Vec<Option<Result<Vec<String>, ProviderError>>> =
            (0..requests.len()).map(|_| None).collect();
        let slots = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(req) = requests.get(i) else { break };
                    let out = self.complete(req);
                    slots.lock().expect("no worker panics while holding the lock")[i] = Some(out);
                });
            }
        });
        results
            .into_iter()
            .map(|r| r.expect("every index is served"))
            .collect()
    }
}
