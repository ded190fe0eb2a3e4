//! Answer-preserving reformulations (four- and ten-choice MCQ, cloze) and the
//! deterministic checks every variant must pass before training.

mod distractors;
mod prompts;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DifficultyLevel, Problem, Validation, Variant, VariantRecord};
use crate::verify::canonicalize;
#[cfg(test)]
use crate::verify::equivalent;

pub use distractors::{Strategy, MAX_ROUNDS};
pub use prompts::{parse_reformulation_response, render_reformulation_prompt, template_for};

pub(crate) use distractors::generate as generate_distractors;

#[derive(Debug, Error, PartialEq)]
pub enum ReformulateError {
    #[error("gold answer {0:?} is not numeric; use the LLM reformulation path")]
    NonNumericGold(String),
    #[error("could only produce {found} of {needed} distinct distractors for {gold:?}; use the LLM reformulation path")]
    NotEnoughDistractors {
        gold: String,
        needed: usize,
        found: usize,
    },
    #[error("multiple-choice variants have 4 or 10 options, not {0}")]
    UnsupportedOptionCount(usize),
    #[error("gold answer {0:?} has fewer than 2 digits; cannot both mask and reveal")]
    TooFewDigits(String),
    #[error("the open-ended level is the original question and has no reformulation prompt")]
    NoPromptForOpenEnded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorPolicy {
    pub strategies: Vec<Strategy>,
    pub rng_seed: u64,
}

impl DistractorPolicy {
    pub fn new(rng_seed: u64) -> Self {
        DistractorPolicy {
            strategies: Strategy::ALL.to_vec(),
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub template: String,
    pub masked_fraction: f64,
}

const OPTION_LETTERS: &[u8] = b"ABCDEFGHIJ";

pub(crate) fn mcq_prompt(question: &str, options: &[String]) -> String {
    let mut out = question.trim_end().to_string();
    for (letter, opt) in OPTION_LETTERS.iter().zip(options) {
        out.push('\n');
        out.push(*letter as char);
        out.push_str(". ");
        out.push_str(opt);
    }
    out
}

pub(crate) fn cloze_prompt(question: &str, mask: &str) -> String {
    format!(
        "{} The answer should look like: {mask}. Fill the blank by giving the full answer.",
        question.trim_end()
    )
}

pub(crate) fn unescape_mask(mask: &str) -> String {
    mask.replace("\\_", "_")
}

/// Golds with several separate numbers (e.g. coordinate pairs) have no agreed
/// cloze semantics; they are masked per digit run but flagged.
pub(crate) fn needs_review(gold: &str) -> bool {
    let runs = gold
        .as_bytes()
        .split(|b| !b.is_ascii_digit())
        .filter(|run| !run.is_empty())
        .count();
    runs > 1 && !canonicalize(gold).is_numeric()
}

/// Build a four- or ten-choice variant with seeded distractors and a
/// uniformly placed gold option.
pub fn build_mcq(
    problem: &Problem,
    n_options: usize,
    policy: &DistractorPolicy,
) -> Result<Variant, ReformulateError> {
    let level = match n_options {
        4 => DifficultyLevel::Mcq4,
        10 => DifficultyLevel::Mcq10,
        n => return Err(ReformulateError::UnsupportedOptionCount(n)),
    };
    let gold = canonicalize(&problem.gold_answer);
    if !gold.is_numeric() {
        return Err(ReformulateError::NonNumericGold(problem.gold_answer.clone()));
    }
    let needed = n_options - 1;
    let mut options = generate_distractors(&gold, &policy.strategies, needed);
    if options.len() < needed {
        return Err(ReformulateError::NotEnoughDistractors {
            gold: problem.gold_answer.clone(),
            needed,
            found: options.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
    options.shuffle(&mut rng);
    let gold_pos = rng.gen_range(0..n_options);
    options.insert(gold_pos, problem.gold_answer.trim().to_string());

    let mut variant = Variant {
        problem_id: problem.id.clone(),
        level,
        prompt: mcq_prompt(&problem.question, &options),
        options: Some(options),
        mask: None,
        validation: Validation::Valid,
        needs_review: false,
    };
    variant.validation = validate_mcq(&variant, &problem.gold_answer);
    debug_assert!(variant.validation.is_valid());
    Ok(variant)
}

/// Choose which digits of `gold` to hide.
pub fn make_mask(gold: &str, rng_seed: u64) -> Result<MaskSpec, ReformulateError> {
    let chars: Vec<char> = gold.trim().chars().collect();
    let digit_positions: Vec<usize> = chars
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_ascii_digit())
        .map(|(i, _)| i)
        .collect();
    let d = digit_positions.len();
    if d < 2 {
        return Err(ReformulateError::TooFewDigits(gold.to_string()));
    }
    let lo = d.div_ceil(2); // ceil(0.5 d)
    let hi = ((d * 4) / 5).min(d - 1); // floor(0.8 d), keep one digit visible
    let lo = lo.clamp(1, hi);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let k = rng.gen_range(lo..=hi);
    let mut template = chars;
    for i in index::sample(&mut rng, d, k) {
        template[digit_positions[i]] = '_';
    }
    Ok(MaskSpec {
        template: template.into_iter().collect(),
        masked_fraction: k as f64 / d as f64,
    })
}

pub fn build_cloze(problem: &Problem, rng_seed: u64) -> Result<Variant, ReformulateError> {
    let spec = make_mask(&problem.gold_answer, rng_seed)?;
    let validation = validate_cloze(&spec.template, &problem.gold_answer);
    debug_assert!(validation.is_valid());
    Ok(Variant {
        problem_id: problem.id.clone(),
        level: DifficultyLevel::Cloze,
        prompt: cloze_prompt(&problem.question, &spec.template),
        mask: Some(spec.template),
        options: None,
        validation,
        needs_review: needs_review(&problem.gold_answer),
    })
}

/// Exactly one option must be equivalent to the gold, and the option count
/// must match the level.
pub fn validate_mcq(variant: &Variant, gold: &str) -> Validation {
    let Some(expected) = variant.level.option_count() else {
        return Validation::invalid("not a multiple-choice level");
    };
    let Some(options) = &variant.options else {
        return Validation::invalid("options missing");
    };
    if options.len() != expected {
        return Validation::invalid("option count mismatch");
    }
    let gold = canonicalize(gold);
    match options.iter().filter(|o| canonicalize(o).matches(&gold)).count() {
        0 => Validation::invalid("gold absent"),
        1 => Validation::Valid,
        _ => Validation::invalid("gold not unique"),
    }
}

/// Position-by-position comparison of a mask against the gold, ignoring
/// whitespace. Placeholders may only stand in for digits.
pub fn validate_cloze(mask: &str, gold: &str) -> Validation {
    let mask: Vec<char> = unescape_mask(mask).chars().filter(|c| !c.is_whitespace()).collect();
    let gold: Vec<char> = gold.chars().filter(|c| !c.is_whitespace()).collect();
    if mask.len() != gold.len() {
        return Validation::invalid("length mismatch");
    }
    let mut placeholders = 0;
    let mut revealed_digits = 0;
    for (&m, &g) in mask.iter().zip(&gold) {
        if m == '_' {
            if !g.is_ascii_digit() {
                return Validation::invalid("placeholder over non-digit");
            }
            placeholders += 1;
        } else if m != g {
            return Validation::invalid(if g.is_ascii_digit() {
                "revealed digit mismatch"
            } else {
                "revealed character mismatch"
            });
        } else if g.is_ascii_digit() {
            revealed_digits += 1;
        }
    }
    if placeholders == 0 {
        return Validation::invalid("no placeholder");
    }
    if revealed_digits == 0 {
        return Validation::invalid("no revealed digit");
    }
    Validation::Valid
}

/// Rebuild a variant from a sidecar record, re-running the level validator.
pub fn variant_from_record(record: VariantRecord, gold: &str) -> Variant {
    let mut variant = Variant {
        problem_id: record.problem_id,
        level: record.level,
        prompt: record.prompt,
        options: record.options,
        mask: record.mask,
        validation: Validation::Valid,
        needs_review: false,
    };
    variant.validation = match variant.level {
        DifficultyLevel::Mcq4 | DifficultyLevel::Mcq10 => {
            if variant.mask.is_some() {
                Validation::invalid("mask on multiple-choice variant")
            } else {
                validate_mcq(&variant, gold)
            }
        }
        DifficultyLevel::Cloze => match (&variant.mask, &variant.options) {
            (Some(mask), None) => {
                variant.needs_review = needs_review(gold);
                validate_cloze(mask, gold)
            }
            _ => Validation::invalid("cloze variant needs a mask and no options"),
        },
        DifficultyLevel::OpenEnded => {
            if variant.options.is_some() || variant.mask.is_some() {
                Validation::invalid("open-ended variant carries options or mask")
            } else {
                Validation::Valid
            }
        }
    };
    variant
}

/// Deterministic seed for one (problem, level) reformulation.
pub fn variant_seed(base: u64, problem_id: &str, level: DifficultyLevel) -> u64 {
    crate::seed::derive(base, &[crate::seed::hash_str(problem_id), level.as_u8() as u64])
}

/// Build all three reformulations plus the open-ended identity for a numeric
/// gold. Returns the first builder error encountered.
pub fn build_all(problem: &Problem, base_seed: u64) -> Result<Vec<Variant>, ReformulateError> {
    let mcq = |n: usize, level| {
        build_mcq(
            problem,
            n,
            &DistractorPolicy::new(variant_seed(base_seed, &problem.id, level)),
        )
    };
    Ok(vec![
        mcq(4, DifficultyLevel::Mcq4)?,
        mcq(10, DifficultyLevel::Mcq10)?,
        build_cloze(
            problem,
            variant_seed(base_seed, &problem.id, DifficultyLevel::Cloze),
        )?,
        Variant::open_ended(problem),
    ])
}
