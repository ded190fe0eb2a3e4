//! Per-problem difficulty curriculum: every hard problem starts at the
//! four-choice level and moves up one level each time its group accuracy
//! reaches the threshold.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dataset, DatasetError, DifficultyLevel, Variant};

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("invalid curriculum config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("expected {expected} outcomes, got {got}")]
    WrongOutcomeCount { expected: usize, got: usize },
    #[error("no curriculum record for {0}")]
    UnknownProblem(String),
    #[error("{0} has already graduated")]
    AlreadyGraduated(String),
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("training complete: every record has graduated")]
    TrainingComplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "factor")]
pub enum GraduationPolicy {
    /// Stop sampling graduated problems.
    Retire,
    /// Keep sampling graduated problems at the open-ended level with this
    /// relative weight.
    Downweight(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumMode {
    Adaptive,
    /// Every batch entry gets a uniformly random level; no promotion.
    StaticMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub tau: f64,
    pub m: usize,
    pub graduation_policy: GraduationPolicy,
    pub mode: CurriculumMode,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            tau: 0.5,
            m: 8,
            graduation_policy: GraduationPolicy::Retire,
            mode: CurriculumMode::Adaptive,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(CurriculumError::InvalidConfig(format!("tau {} outside (0, 1]", self.tau)));
        }
        if self.m == 0 {
            return Err(CurriculumError::InvalidConfig("m must be at least 1".into()));
        }
        if let GraduationPolicy::Downweight(f) = self.graduation_policy {
            if !(f.is_finite() && f >= 0.0) {
                return Err(CurriculumError::InvalidConfig(format!(
                    "downweight factor {f} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Promotion {
    pub step: u64,
    pub from: DifficultyLevel,
    pub to: DifficultyLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumRecord {
    pub problem_id: String,
    pub level: DifficultyLevel,
    pub last_accuracy: f64,
    pub promotions: Vec<Promotion>,
    pub graduated: bool,
}

impl CurriculumRecord {
    fn new(problem_id: &str) -> Self {
        CurriculumRecord {
            problem_id: problem_id.to_string(),
            level: DifficultyLevel::Mcq4,
            last_accuracy: 0.0,
            promotions: Vec::new(),
            graduated: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Stayed,
    Promoted { from: DifficultyLevel, to: DifficultyLevel },
    Graduated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntry {
    pub problem_id: String,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub config: CurriculumConfig,
    pub records: BTreeMap<String, CurriculumRecord>,
}

/// One record per hard-flagged problem, all at the easiest level.
pub fn init_curriculum(dataset: &Dataset, config: CurriculumConfig) -> Result<CurriculumState, CurriculumError> {
    config.validate()?;
    dataset.check_ready()?;
    let records = dataset
        .hard_ids()
        .into_iter()
        .map(|id| (id.to_string(), CurriculumRecord::new(id)))
        .collect();
    Ok(CurriculumState { config, records })
}

impl CurriculumState {
    pub fn record(&self, problem_id: &str) -> Option<&CurriculumRecord> {
        self.records.get(problem_id)
    }

    pub fn active_count(&self) -> usize {
        self.records.values().filter(|r| !r.graduated).count()
    }

    pub fn all_graduated(&self) -> bool {
        self.active_count() == 0
    }

    /// Record one group's outcomes; promotion uses `accuracy >= tau`.
    pub fn record_outcomes(
        &mut self,
        problem_id: &str,
        outcomes: &[bool],
        step: u64,
    ) -> Result<Transition, CurriculumError> {
        if outcomes.len() != self.config.m {
            return Err(CurriculumError::WrongOutcomeCount {
                expected: self.config.m,
                got: outcomes.len(),
            });
        }
        let tau = self.config.tau;
        let record = self
            .records
            .get_mut(problem_id)
            .ok_or_else(|| CurriculumError::UnknownProblem(problem_id.to_string()))?;
        if record.graduated {
            return Err(CurriculumError::AlreadyGraduated(problem_id.to_string()));
        }
        let hits = outcomes.iter().filter(|&&o| o).count();
        record.last_accuracy = hits as f64 / outcomes.len() as f64;
        if record.last_accuracy < tau {
            return Ok(Transition::Stayed);
        }
        match record.level.next() {
            Some(to) => {
                let from = record.level;
                record.promotions.push(Promotion { step, from, to });
                record.level = to;
                Ok(Transition::Promoted { from, to })
            }
            None => {
                record.graduated = true;
                Ok(Transition::Graduated)
            }
        }
    }

    /// Sampling weights of every record that can still be drawn, with the
    /// level it would be drawn at.
    fn sampling_pool(&self) -> Vec<(&CurriculumRecord, DifficultyLevel, f64)> {
        self.records
            .values()
            .filter_map(|r| match (r.graduated, self.config.graduation_policy) {
                (false, _) => Some((r, r.level, 1.0)),
                (true, GraduationPolicy::Downweight(f)) if f > 0.0 => {
                    Some((r, DifficultyLevel::OpenEnded, f))
                }
                (true, _) => None,
            })
            .collect()
    }

    /// Sample a batch without replacement, cycling through a fresh shuffle when
    /// the pool is smaller than the batch.
    pub fn compose_batch(
        &self,
        dataset: &Dataset,
        batch_size: usize,
        rng_seed: u64,
    ) -> Result<Vec<BatchEntry>, CurriculumError> {
        if batch_size == 0 {
            return Err(CurriculumError::EmptyBatch);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let picks: Vec<(String, DifficultyLevel)> = match self.config.mode {
            CurriculumMode::Adaptive => {
                let pool = self.sampling_pool();
                if pool.is_empty() {
                    return Err(CurriculumError::TrainingComplete);
                }
                let mut picks = Vec::with_capacity(batch_size);
                while picks.len() < batch_size {
                    let take = (batch_size - picks.len()).min(pool.len());
                    let chosen = pool
                        .choose_multiple_weighted(&mut rng, take, |e| e.2)
                        .expect("weights are positive and finite");
                    picks.extend(chosen.map(|(r, level, _)| (r.problem_id.clone(), *level)));
                }
                picks
            }
            CurriculumMode::StaticMixture => {
                let ids: Vec<&String> = self.records.keys().collect();
                if ids.is_empty() {
                    return Err(CurriculumError::TrainingComplete);
                }
                let mut picks = Vec::with_capacity(batch_size);
                while picks.len() < batch_size {
                    let take = (batch_size - picks.len()).min(ids.len());
                    let chosen: Vec<String> =
                        ids.choose_multiple(&mut rng, take).map(|s| s.to_string()).collect();
                    for id in chosen {
                        let level = DifficultyLevel::ALL[rng.gen_range(0..4)];
                        picks.push((id, level));
                    }
                }
                picks
            }
        };
        picks
            .into_iter()
            .map(|(problem_id, level)| {
                let variant = dataset
                    .variant(&problem_id, level)
                    .cloned()
                    .ok_or_else(|| DatasetError::MissingLevel {
                        problem_id: problem_id.clone(),
                        level,
                    })?;
                Ok(BatchEntry { problem_id, variant })
            })
            .collect()
    }

    /// Fraction of non-graduated records at each level; all zeros when none
    /// remain.
    pub fn level_histogram(&self) -> BTreeMap<DifficultyLevel, f64> {
        let mut hist: BTreeMap<DifficultyLevel, f64> =
            DifficultyLevel::ALL.iter().map(|&l| (l, 0.0)).collect();
        let active = self.active_count();
        if active == 0 {
            return hist;
        }
        for r in self.records.values().filter(|r| !r.graduated) {
            *hist.get_mut(&r.level).unwrap() += 1.0;
        }
        for v in hist.values_mut() {
            *v /= active as f64;
        }
        hist
    }

    /// Expected share of a batch slot going to each level under the current
    /// sampling weights.
    pub fn expected_level_share(&self) -> BTreeMap<DifficultyLevel, f64> {
        let mut share: BTreeMap<DifficultyLevel, f64> =
            DifficultyLevel::ALL.iter().map(|&l| (l, 0.0)).collect();
        if self.config.mode == CurriculumMode::StaticMixture {
            if !self.records.is_empty() {
                share.values_mut().for_each(|v| *v = 0.25);
            }
            return share;
        }
        let pool = self.sampling_pool();
        let total: f64 = pool.iter().map(|e| e.2).sum();
        if total == 0.0 {
            return share;
        }
        for (_, level, w) in pool {
            *share.get_mut(&level).unwrap() += w / total;
        }
        share
    }
}
