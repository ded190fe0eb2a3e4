//! Rule-based rewards and group-relative advantage normalization.

use serde::{Deserialize, Serialize};

use crate::model::DifficultyLevel;
use crate::verify::{equivalent, extract_boxed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub correct_weight: f64,
    pub format_weight: f64,
    pub normalization_epsilon: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            correct_weight: 1.0,
            format_weight: 0.2,
            normalization_epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub r_correct: f64,
    pub r_format: f64,
    /// No box, but the trailing token matches the gold. Scored 0; counted so
    /// the boxed-answer requirement stays auditable.
    pub unboxed_correct: bool,
}

impl Score {
    pub fn total(&self) -> f64 {
        self.r_correct + self.r_format
    }

    pub fn is_correct(&self) -> bool {
        self.r_correct > 0.0
    }
}

/// Binary format reward for a boxed answer; correctness only counts when the
/// boxed answer is equivalent to the gold.
pub fn score_completion(completion: &str, gold: &str, cfg: &RewardConfig) -> Score {
    match extract_boxed(completion) {
        Some(answer) => Score {
            r_correct: if equivalent(&answer, gold) {
                cfg.correct_weight
            } else {
                0.0
            },
            r_format: cfg.format_weight,
            unboxed_correct: false,
        },
        None => Score {
            r_correct: 0.0,
            r_format: 0.0,
            unboxed_correct: trailing_token(completion).is_some_and(|t| equivalent(t, gold)),
        },
    }
}

fn trailing_token(text: &str) -> Option<&str> {
    text.split_whitespace()
        .last()
        .map(|t| t.trim_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '$')))
        .filter(|t| !t.is_empty())
}

/// `(r - mean) / (population_std + epsilon)`. A constant group maps to exact
/// zeros regardless of rounding in the mean.
pub fn normalize_group(rewards: &[f64], epsilon: f64) -> Vec<f64> {
    let Some(&first) = rewards.first() else {
        return Vec::new();
    };
    if rewards.iter().all(|&r| r == first) {
        return vec![0.0; rewards.len()];
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + epsilon;
    rewards.iter().map(|r| (r - mean) / denom).collect()
}

/// `m` completions for one variant with their rewards and advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub problem_id: String,
    pub level: DifficultyLevel,
    pub completions: Vec<String>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub correct: Vec<bool>,
    /// Pool index of each sampled candidate; empty for text-only providers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<usize>,
    #[serde(default)]
    pub unboxed_correct: usize,
}

impl RolloutGroup {
    /// Score `completions` against `gold` and normalize within the group.
    pub fn from_completions(
        problem_id: &str,
        level: DifficultyLevel,
        completions: Vec<String>,
        gold: &str,
        cfg: &RewardConfig,
    ) -> RolloutGroup {
        let scores: Vec<Score> = completions
            .iter()
            .map(|c| score_completion(c, gold, cfg))
            .collect();
        let rewards: Vec<f64> = scores.iter().map(Score::total).collect();
        let advantages = normalize_group(&rewards, cfg.normalization_epsilon);
        RolloutGroup {
            problem_id: problem_id.to_string(),
            level,
            correct: scores.iter().map(Score::is_correct).collect(),
            unboxed_correct: scores.iter().filter(|s| s.unboxed_correct).count(),
            completions,
            rewards,
            advantages,
            choices: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        if self.correct.is_empty() {
            return 0.0;
        }
        self.correct.iter().filter(|&&c| c).count() as f64 / self.correct.len() as f64
    }

    pub fn has_signal(&self) -> bool {
        self.advantages.iter().any(|&a| a != 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_examples() {
        let cfg = RewardConfig::default();
        let s = score_completion("\\boxed{21}", "21", &cfg);
        assert_eq!((s.r_correct, s.r_format, s.total()), (1.0, 0.2, 1.2));
        let s = score_completion("\\boxed{18}", "21", &cfg);
        assert_eq!((s.r_correct, s.r_format, s.total()), (0.0, 0.2, 0.2));
        let s = score_completion("the answer is 21", "21", &cfg);
        assert_eq!(s.total(), 0.0);
        assert!(s.unboxed_correct);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_group(&[0.2; 4], 1e-8), vec![0.0; 4]);
        assert_eq!(normalize_group(&[0.7], 1e-8), vec![0.0]);
        let a = normalize_group(&[1.2, 0.2, 0.2, 0.2], 1e-8);
        // mean 0.45, population std sqrt(0.1875)
        let expected = [1.7321, -0.5774, -0.5774, -0.5774];
        for (x, e) in a.iter().zip(expected) {
            assert!((x - e).abs() < 1e-4, "{x} vs {e}");
        }
        assert!(a.iter().sum::<f64>().abs() < 1e-9 * 4.0);
    }

    #[test]
    fn group_from_text() {
        let g = RolloutGroup::from_completions(
            "p1",
            DifficultyLevel::Mcq4,
            vec!["\\boxed{21}".into(), "\\boxed{18}".into(), "21".into()],
            "21",
            &RewardConfig::default(),
        );
        assert_eq!(g.rewards, vec![1.2, 0.2, 0.0]);
        assert_eq!(g.correct, vec![true, false, false]);
        assert_eq!(g.unboxed_correct, 1);
        assert!(g.has_signal());
    }
}
