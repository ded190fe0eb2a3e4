//! A categorical learner standing in for the language model. Each
//! (problem, level) owns a candidate pool; the gold candidate's logit is a
//! knowledge term plus a per-level format bias and every other logit is 0.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grpo::{RewardConfig, RolloutGroup};
use crate::model::{Dataset, DifficultyLevel, Problem};
use crate::reformulate::{generate_distractors, make_mask, variant_seed, ReformulateError, Strategy};
use crate::verify::canonicalize;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no candidate pool for {problem_id} at level {level}")]
    MissingPool {
        problem_id: String,
        level: DifficultyLevel,
    },
    #[error("cannot build a level-{level} pool for {problem_id}: {source}")]
    Build {
        problem_id: String,
        level: DifficultyLevel,
        source: ReformulateError,
    },
    #[error("pool for {problem_id} at level {level} needs {needed} candidates, found {found}")]
    PoolTooSmall {
        problem_id: String,
        level: DifficultyLevel,
        needed: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Candidates per pool, indexed by level.
    pub pool_sizes: [usize; 4],
    /// Step size for knowledge logits.
    pub learning_rate: f64,
    /// Step size for format biases; 0 keeps them fixed.
    pub format_bias_lr: f64,
    /// Share one knowledge logit across all levels of a problem.
    pub transfer: bool,
    pub initial_format_bias: [f64; 4],
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            pool_sizes: [4, 10, 10, 50],
            learning_rate: 1.0,
            format_bias_lr: 0.0,
            transfer: true,
            initial_format_bias: [0.0; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Knowledge {
    Shared(f64),
    PerLevel([f64; 4]),
}

impl Knowledge {
    fn get(&self, level: DifficultyLevel) -> f64 {
        match self {
            Knowledge::Shared(g) => *g,
            Knowledge::PerLevel(gs) => gs[level.index()],
        }
    }

    fn slot(&mut self, level: DifficultyLevel) -> &mut f64 {
        match self {
            Knowledge::Shared(g) => g,
            Knowledge::PerLevel(gs) => &mut gs[level.index()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub candidates: Vec<String>,
    pub gold_index: usize,
}

impl Pool {
    pub fn gold(&self) -> &str {
        &self.candidates[self.gold_index]
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPolicy {
    knowledge: BTreeMap<String, Knowledge>,
    format_bias: [f64; 4],
    pools: BTreeMap<String, [Pool; 4]>,
    pub learning_rate: f64,
    pub format_bias_lr: f64,
}

/// Gradient of the frozen-batch objective with respect to the gold logit of
/// one (problem, level).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyGradient {
    pub gold_logit: f64,
}

/// `1 / (1 + (K-1) e^{-z})`, the softmax weight of one logit `z` against
/// `K-1` zeros.
pub fn gold_probability(z: f64, pool_size: usize) -> f64 {
    if pool_size <= 1 {
        return 1.0;
    }
    1.0 / (1.0 + (pool_size - 1) as f64 * (-z).exp())
}

impl SimPolicy {
    /// Empty policy; pools are added with [`SimPolicy::insert_pools`].
    pub fn new(config: &SimConfig) -> SimPolicy {
        SimPolicy {
            knowledge: BTreeMap::new(),
            format_bias: config.initial_format_bias,
            pools: BTreeMap::new(),
            learning_rate: config.learning_rate,
            format_bias_lr: config.format_bias_lr,
        }
    }

    /// Pools for every problem in `dataset` (or only the hard ones when any are
    /// flagged). Multiple-choice pools reuse attached option lists of the right
    /// size; everything else is generated from the gold.
    pub fn from_dataset(dataset: &Dataset, config: &SimConfig, seed: u64) -> Result<SimPolicy, SimError> {
        let hard = dataset.hard_ids();
        let ids: Vec<&str> = if hard.is_empty() {
            dataset.problems().iter().map(|p| p.id.as_str()).collect()
        } else {
            hard
        };
        let mut policy = SimPolicy::new(config);
        for id in ids {
            let problem = dataset.problem(id).expect("id comes from the dataset");
            let pools = build_pools(problem, dataset, config, seed)?;
            policy.insert_pools(id, pools, config.transfer);
        }
        Ok(policy)
    }

    pub fn insert_pools(&mut self, problem_id: &str, pools: [Pool; 4], transfer: bool) {
        let knowledge = if transfer {
            Knowledge::Shared(0.0)
        } else {
            Knowledge::PerLevel([0.0; 4])
        };
        self.knowledge.insert(problem_id.to_string(), knowledge);
        self.pools.insert(problem_id.to_string(), pools);
    }

    pub fn problem_ids(&self) -> impl Iterator<Item = &str> {
        self.pools.keys().map(String::as_str)
    }

    pub fn pool(&self, problem_id: &str, level: DifficultyLevel) -> Result<&Pool, SimError> {
        self.pools
            .get(problem_id)
            .map(|p| &p[level.index()])
            .ok_or_else(|| SimError::MissingPool {
                problem_id: problem_id.to_string(),
                level,
            })
    }

    pub fn knowledge_logit(&self, problem_id: &str, level: DifficultyLevel) -> Option<f64> {
        self.knowledge.get(problem_id).map(|k| k.get(level))
    }

    pub fn set_knowledge_logit(&mut self, problem_id: &str, level: DifficultyLevel, value: f64) {
        if let Some(k) = self.knowledge.get_mut(problem_id) {
            *k.slot(level) = value;
        }
    }

    pub fn format_bias(&self, level: DifficultyLevel) -> f64 {
        self.format_bias[level.index()]
    }

    pub fn set_format_bias(&mut self, level: DifficultyLevel, value: f64) {
        self.format_bias[level.index()] = value;
    }

    /// The gold candidate's logit.
    pub fn gold_logit(&self, problem_id: &str, level: DifficultyLevel) -> Result<f64, SimError> {
        let g = self
            .knowledge_logit(problem_id, level)
            .ok_or_else(|| SimError::MissingPool {
                problem_id: problem_id.to_string(),
                level,
            })?;
        Ok(g + self.format_bias(level))
    }

    /// Full logit vector over the pool, in candidate order.
    pub fn logits(&self, problem_id: &str, level: DifficultyLevel) -> Result<Vec<f64>, SimError> {
        let pool = self.pool(problem_id, level)?;
        let mut logits = vec![0.0; pool.len()];
        logits[pool.gold_index] = self.gold_logit(problem_id, level)?;
        Ok(logits)
    }

    pub fn gold_probability(&self, problem_id: &str, level: DifficultyLevel) -> Result<f64, SimError> {
        let pool = self.pool(problem_id, level)?;
        Ok(gold_probability(self.gold_logit(problem_id, level)?, pool.len()))
    }

    /// Closed-form gold probability at every level.
    pub fn transfer_probe(&self, problem_id: &str) -> Result<BTreeMap<DifficultyLevel, f64>, SimError> {
        DifficultyLevel::ALL
            .iter()
            .map(|&l| Ok((l, self.gold_probability(problem_id, l)?)))
            .collect()
    }

    /// Mean open-ended gold probability across all problems.
    pub fn mean_gold_probability(&self, level: DifficultyLevel) -> f64 {
        if self.pools.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .problem_ids()
            .map(|id| self.gold_probability(id, level).unwrap_or(0.0))
            .sum();
        total / self.pools.len() as f64
    }

    /// `m` independent draws rendered as boxed answers and scored.
    pub fn sample_rollouts(
        &self,
        problem_id: &str,
        level: DifficultyLevel,
        m: usize,
        rng_seed: u64,
        reward: &RewardConfig,
    ) -> Result<RolloutGroup, SimError> {
        let pool = self.pool(problem_id, level)?;
        let p_gold = self.gold_probability(problem_id, level)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let choices: Vec<usize> = (0..m)
            .map(|_| {
                if pool.len() == 1 || rng.gen::<f64>() < p_gold {
                    pool.gold_index
                } else {
                    let j = rng.gen_range(0..pool.len() - 1);
                    if j >= pool.gold_index {
                        j + 1
                    } else {
                        j
                    }
                }
            })
            .collect();
        let completions = choices
            .iter()
            .map(|&c| format!("\\boxed{{{}}}", pool.candidates[c]))
            .collect();
        let mut group = RolloutGroup::from_completions(problem_id, level, completions, pool.gold(), reward);
        group.choices = choices;
        Ok(group)
    }

    /// `(1/m) Σ_j Ã_j (1[a_j = gold] − p_gold)`: the exact gradient of the
    /// group's advantage-weighted log-likelihood with respect to the gold logit.
    pub fn policy_gradient(&self, group: &RolloutGroup) -> Result<PolicyGradient, SimError> {
        let pool = self.pool(&group.problem_id, group.level)?;
        let p_gold = self.gold_probability(&group.problem_id, group.level)?;
        let m = group.choices.len();
        if m == 0 {
            return Ok(PolicyGradient { gold_logit: 0.0 });
        }
        let sum: f64 = group
            .choices
            .iter()
            .zip(&group.advantages)
            .filter(|(_, &a)| a != 0.0)
            .map(|(&c, &a)| {
                let hit = if c == pool.gold_index { 1.0 } else { 0.0 };
                a * (hit - p_gold)
            })
            .sum();
        Ok(PolicyGradient {
            gold_logit: sum / m as f64,
        })
    }

    /// Ascend the objective. A zero gradient leaves every parameter bitwise
    /// untouched.
    pub fn apply(&mut self, problem_id: &str, level: DifficultyLevel, grad: PolicyGradient) {
        if grad.gold_logit == 0.0 {
            return;
        }
        if let Some(k) = self.knowledge.get_mut(problem_id) {
            *k.slot(level) += self.learning_rate * grad.gold_logit;
        }
        if self.format_bias_lr != 0.0 {
            self.format_bias[level.index()] += self.format_bias_lr * grad.gold_logit;
        }
    }

    pub fn policy_gradient_update(&mut self, group: &RolloutGroup) -> Result<(), SimError> {
        let grad = self.policy_gradient(group)?;
        self.apply(&group.problem_id, group.level, grad);
        Ok(())
    }

    /// Gradients for a whole batch are taken at the current parameters and
    /// then applied in batch order, so every update is on-policy.
    pub fn batch_update(&mut self, groups: &[RolloutGroup]) -> Result<(), SimError> {
        let grads = groups
            .iter()
            .map(|g| self.policy_gradient(g))
            .collect::<Result<Vec<_>, _>>()?;
        for (group, grad) in groups.iter().zip(grads) {
            self.apply(&group.problem_id, group.level, grad);
        }
        Ok(())
    }
}

/// Candidate pools for one problem at all four levels.
pub fn build_pools(
    problem: &Problem,
    dataset: &Dataset,
    config: &SimConfig,
    seed: u64,
) -> Result<[Pool; 4], SimError> {
    let build = |level: DifficultyLevel| -> Result<Pool, SimError> {
        let size = config.pool_sizes[level.index()];
        let level_seed = variant_seed(seed ^ 0x5157_504f_4f4c, &problem.id, level);
        let existing = dataset.variant(&problem.id, level);
        let pool = match level {
            DifficultyLevel::Mcq4 | DifficultyLevel::Mcq10 => match existing
                .and_then(|v| v.options.as_ref())
                .filter(|o| o.len() == size)
            {
                Some(options) => options_pool(options, &problem.gold_answer),
                None => distractor_pool(problem, size, level_seed),
            },
            DifficultyLevel::Cloze => {
                let mask = match existing.and_then(|v| v.mask.clone()) {
                    Some(mask) => mask,
                    None => make_mask(&problem.gold_answer, level_seed)
                        .map_err(|source| SimError::Build {
                            problem_id: problem.id.clone(),
                            level,
                            source,
                        })?
                        .template,
                };
                fill_pool(&mask, &problem.gold_answer, size, level_seed)
            }
            DifficultyLevel::OpenEnded => distractor_pool(problem, size, level_seed),
        };
        let pool = pool.map_err(|source| SimError::Build {
            problem_id: problem.id.clone(),
            level,
            source,
        })?;
        if pool.len() != size {
            return Err(SimError::PoolTooSmall {
                problem_id: problem.id.clone(),
                level,
                needed: size,
                found: pool.len(),
            });
        }
        Ok(pool)
    };
    Ok([
        build(DifficultyLevel::Mcq4)?,
        build(DifficultyLevel::Mcq10)?,
        build(DifficultyLevel::Cloze)?,
        build(DifficultyLevel::OpenEnded)?,
    ])
}

fn options_pool(options: &[String], gold: &str) -> Result<Pool, ReformulateError> {
    let target = canonicalize(gold);
    let gold_index = options
        .iter()
        .position(|o| canonicalize(o).matches(&target))
        .ok_or_else(|| ReformulateError::NonNumericGold(gold.to_string()))?;
    Ok(Pool {
        candidates: options.to_vec(),
        gold_index,
    })
}

fn distractor_pool(problem: &Problem, size: usize, seed: u64) -> Result<Pool, ReformulateError> {
    let gold = canonicalize(&problem.gold_answer);
    if !gold.is_numeric() {
        return Err(ReformulateError::NonNumericGold(problem.gold_answer.clone()));
    }
    let needed = size.saturating_sub(1);
    let mut candidates = generate_distractors(&gold, &Strategy::ALL, needed);
    if candidates.len() < needed {
        return Err(ReformulateError::NotEnoughDistractors {
            gold: problem.gold_answer.clone(),
            needed,
            found: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    let gold_index = rng.gen_range(0..size.max(1));
    candidates.insert(gold_index, problem.gold_answer.trim().to_string());
    Ok(Pool {
        candidates,
        gold_index,
    })
}

/// Distinct digit fills of the mask, each a different value from the gold.
fn fill_pool(mask: &str, gold: &str, size: usize, seed: u64) -> Result<Pool, ReformulateError> {
    let slots = mask.chars().filter(|&c| c == '_').count();
    if slots == 0 {
        return Err(ReformulateError::TooFewDigits(gold.to_string()));
    }
    let gold_value = canonicalize(gold).value().cloned();
    let mut seen: BTreeSet<Option<BigRational>> = BTreeSet::new();
    seen.insert(gold_value);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let needed = size.saturating_sub(1);
    let mut fills = Vec::with_capacity(needed);
    // a single slot has exactly nine non-gold fills; more slots have plenty
    let attempts = 64 * size.max(1);
    for _ in 0..attempts {
        if fills.len() == needed {
            break;
        }
        let text: String = mask
            .chars()
            .map(|c| {
                if c == '_' {
                    char::from(b'0' + rng.gen_range(0..10u8))
                } else {
                    c
                }
            })
            .collect();
        let value = canonicalize(&text).value().cloned();
        if value.is_some() && seen.insert(value) {
            fills.push(text);
        }
    }
    if fills.len() < needed {
        return Err(ReformulateError::NotEnoughDistractors {
            gold: gold.to_string(),
            needed,
            found: fills.len(),
        });
    }
    let gold_index = rng.gen_range(0..size.max(1));
    fills.insert(gold_index, gold.trim().to_string());
    Ok(Pool {
        candidates: fills,
        gold_index,
    })
}
