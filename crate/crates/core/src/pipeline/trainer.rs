//! The training loop over the simulated learner.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::config::RunConfig;
use super::run::{load_checkpoint, persist_run, CurriculumCheckpoint, MetricsRow, PolicyCheckpoint, RunDir, RunError};
use crate::curriculum::{init_curriculum, CurriculumError, CurriculumMode, CurriculumState, Transition};
use crate::eval::format_accuracy_report;
use crate::grpo::{RewardConfig, RolloutGroup};
use crate::model::{Dataset, DifficultyLevel};
use crate::seed::derive;
use crate::sim::{SimError, SimPolicy};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Run(#[from] RunError),
}

// stream tags mixed into per-step seeds
const BATCH_STREAM: u64 = 0;
const ROLLOUT_STREAM: u64 = 1;
const ESTIMATE_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: u64,
    pub groups: Vec<RolloutGroup>,
    pub transitions: Vec<(String, Transition)>,
    pub metrics: MetricsRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps_run: u64,
    pub final_step: u64,
    pub completed: bool,
    pub rollouts_used: u64,
    pub pass_at_1: f64,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    dataset: Dataset,
    reward: RewardConfig,
    batch_size: usize,
    rollout_n: usize,
    seed: u64,
    step: u64,
    rollouts_used: u64,
    state: CurriculumState,
    policy: SimPolicy,
}

impl Trainer {
    pub fn new(dataset: Dataset, config: &RunConfig, mode: CurriculumMode) -> Result<Trainer, TrainError> {
        let state = init_curriculum(&dataset, config.curriculum(mode))?;
        let policy = SimPolicy::from_dataset(&dataset, &config.sim(), config.seed)?;
        Ok(Trainer {
            reward: config.reward(),
            batch_size: config.train_batch_size,
            rollout_n: config.rollout_n,
            seed: config.seed,
            step: 0,
            rollouts_used: 0,
            state,
            policy,
            dataset,
        })
    }

    /// Continue from a saved checkpoint; later steps draw the same seeded
    /// streams as the original run.
    pub fn from_checkpoint(dataset: Dataset, config: &RunConfig, dir: &Path) -> Result<Trainer, TrainError> {
        let (curriculum, policy) = load_checkpoint(dir)?;
        Ok(Trainer {
            reward: config.reward(),
            batch_size: config.train_batch_size,
            rollout_n: config.rollout_n,
            seed: curriculum.seed,
            step: curriculum.step,
            rollouts_used: curriculum.rollouts_used,
            state: curriculum.curriculum,
            policy: policy.policy,
            dataset,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn rollouts_used(&self) -> u64 {
        self.rollouts_used
    }

    pub fn state(&self) -> &CurriculumState {
        &self.state
    }

    pub fn policy(&self) -> &SimPolicy {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut SimPolicy {
        &mut self.policy
    }

    pub fn checkpoint(&self) -> (CurriculumCheckpoint, PolicyCheckpoint) {
        (
            CurriculumCheckpoint {
                step: self.step,
                seed: self.seed,
                mode: self.state.config.mode,
                rollouts_used: self.rollouts_used,
                curriculum: self.state.clone(),
            },
            PolicyCheckpoint {
                step: self.step,
                seed: self.seed,
                policy: self.policy.clone(),
            },
        )
    }

    /// One training step. Returns `None` once every record has graduated
    /// under the retire policy.
    pub fn step_once(&mut self) -> Result<Option<StepReport>, TrainError> {
        let step = self.step + 1;
        let batch = match self.state.compose_batch(
            &self.dataset,
            self.batch_size,
            derive(self.seed, &[step, BATCH_STREAM]),
        ) {
            Ok(b) => b,
            Err(CurriculumError::TrainingComplete) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let m_est = self.state.config.m;
        let adaptive = self.state.config.mode == CurriculumMode::Adaptive;

        let mut groups = Vec::with_capacity(batch.len());
        let mut outcomes = Vec::with_capacity(batch.len());
        for (slot, entry) in batch.iter().enumerate() {
            let slot = slot as u64;
            let level = entry.variant.level;
            let group = self.policy.sample_rollouts(
                &entry.problem_id,
                level,
                self.rollout_n,
                derive(self.seed, &[step, ROLLOUT_STREAM, slot]),
                &self.reward,
            )?;
            self.rollouts_used += self.rollout_n as u64;
            if adaptive {
                if m_est == self.rollout_n {
                    outcomes.push(group.correct.clone());
                } else {
                    let est = self.policy.sample_rollouts(
                        &entry.problem_id,
                        level,
                        m_est,
                        derive(self.seed, &[step, ESTIMATE_STREAM, slot]),
                        &self.reward,
                    )?;
                    self.rollouts_used += m_est as u64;
                    outcomes.push(est.correct);
                }
            }
            groups.push(group);
        }

        self.policy.batch_update(&groups)?;

        let mut transitions = Vec::new();
        if adaptive {
            for (entry, outcome) in batch.iter().zip(&outcomes) {
                let graduated = self
                    .state
                    .record(&entry.problem_id)
                    .is_none_or(|r| r.graduated);
                if graduated {
                    continue;
                }
                let t = self.state.record_outcomes(&entry.problem_id, outcome, step)?;
                transitions.push((entry.problem_id.clone(), t));
            }
        }
        self.step = step;

        let mut batch_share: BTreeMap<DifficultyLevel, f64> =
            DifficultyLevel::ALL.iter().map(|&l| (l, 0.0)).collect();
        for e in &batch {
            *batch_share.get_mut(&e.variant.level).unwrap() += 1.0 / batch.len() as f64;
        }
        let metrics = MetricsRow {
            step,
            rollouts: self.rollouts_used,
            accuracy: format_accuracy_report(&groups),
            batch_share,
            histogram: self.state.level_histogram(),
            active: self.state.active_count(),
            graduated: self.state.records.len() - self.state.active_count(),
            pass_at_1: self.policy.mean_gold_probability(DifficultyLevel::OpenEnded),
        };
        Ok(Some(StepReport {
            step,
            groups,
            transitions,
            metrics,
        }))
    }

    /// Train until `until_step` (absolute) or completion, persisting a metrics
    /// row every step and a checkpoint every `checkpoint_every` steps and at
    /// the end.
    pub fn run(
        &mut self,
        until_step: u64,
        run_dir: Option<&RunDir>,
        checkpoint_every: u64,
    ) -> Result<RunSummary, TrainError> {
        let start = self.step;
        let mut completed = false;
        while self.step < until_step {
            let Some(report) = self.step_once()? else {
                completed = true;
                break;
            };
            if let Some(dir) = run_dir {
                let due = (checkpoint_every > 0 && report.step % checkpoint_every == 0)
                    || report.step == until_step;
                let ckpt = due.then(|| self.checkpoint());
                persist_run(dir, &report.metrics, ckpt.as_ref().map(|(c, p)| (c, p)))?;
            }
        }
        if let (Some(dir), true) = (run_dir, completed) {
            if self.step > start && !dir.checkpoint(self.step).exists() {
                let (c, p) = self.checkpoint();
                // the final row is already on disk; write only the checkpoint
                persist_final_checkpoint(dir, self.step, &c, &p)?;
            }
        }
        Ok(RunSummary {
            steps_run: self.step - start,
            final_step: self.step,
            completed,
            rollouts_used: self.rollouts_used,
            pass_at_1: self.policy.mean_gold_probability(DifficultyLevel::OpenEnded),
        })
    }
}

fn persist_final_checkpoint(
    dir: &RunDir,
    step: u64,
    c: &CurriculumCheckpoint,
    p: &PolicyCheckpoint,
) -> Result<(), RunError> {
    let tmp = dir.checkpoints().join(format!(".tmp-step-{step}"));
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(&tmp).map_err(io(&tmp))?;
    for (name, value) in [
        ("curriculum.json", serde_json::to_vec(c)),
        ("policy.json", serde_json::to_vec(p)),
    ] {
        let path = tmp.join(name);
        let bytes = value.map_err(|source| RunError::Json {
            path: path.display().to_string(),
            source,
        })?;
        std::fs::write(&path, bytes).map_err(io(&path))?;
    }
    let target = dir.checkpoint(step);
    std::fs::rename(&tmp, &target).map_err(io(&target))
}
