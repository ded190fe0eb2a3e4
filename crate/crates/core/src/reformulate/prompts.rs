//! Reformulation prompt templates and the parsers for the replies they ask for.

use std::sync::OnceLock;

use regex::Regex;

use super::{cloze_prompt, mcq_prompt, unescape_mask, validate_cloze, validate_mcq, ReformulateError};
use crate::model::{DifficultyLevel, Problem, Validation, Variant};
use crate::verify::{equivalent, extract_boxed};

const MCQ4_TEMPLATE: &str = include_str!("../../prompts/mcq4.txt");
const MCQ10_TEMPLATE: &str = include_str!("../../prompts/mcq10.txt");
const CLOZE_TEMPLATE: &str = include_str!("../../prompts/cloze.txt");

pub fn template_for(level: DifficultyLevel) -> Option<&'static str> {
    match level {
        DifficultyLevel::Mcq4 => Some(MCQ4_TEMPLATE),
        DifficultyLevel::Mcq10 => Some(MCQ10_TEMPLATE),
        DifficultyLevel::Cloze => Some(CLOZE_TEMPLATE),
        DifficultyLevel::OpenEnded => None,
    }
}

/// Fill `{question}` and `{gold_answer}` in a single left-to-right pass, so
/// placeholder-looking text inside the substituted values is left alone.
fn fill(template: &str, question: &str, gold: &str) -> String {
    let mut out = String::with_capacity(template.len() + question.len() + gold.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{question}") {
            out.push_str(question);
            rest = after;
        } else if let Some(after) = tail.strip_prefix("{gold_answer}") {
            out.push_str(gold);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

pub fn render_reformulation_prompt(
    problem: &Problem,
    target_level: DifficultyLevel,
) -> Result<String, ReformulateError> {
    let template = template_for(target_level).ok_or(ReformulateError::NoPromptForOpenEnded)?;
    Ok(fill(template, &problem.question, &problem.gold_answer))
}

fn parse_failure(problem: &Problem, level: DifficultyLevel) -> Variant {
    Variant {
        problem_id: problem.id.clone(),
        level,
        prompt: problem.question.clone(),
        options: level.option_count().map(|_| Vec::new()),
        mask: (level == DifficultyLevel::Cloze).then(String::new),
        validation: Validation::invalid("format parse failure"),
        needs_review: false,
    }
}

struct ParsedMcq {
    question: String,
    options: Vec<String>,
    correct: usize,
}

fn parse_mcq_block(response: &str) -> Option<ParsedMcq> {
    static OPTION: OnceLock<Regex> = OnceLock::new();
    static CORRECT: OnceLock<Regex> = OnceLock::new();
    let option = OPTION.get_or_init(|| Regex::new(r"^\s*([A-J])[.)]\s*(.+?)\s*$").unwrap());
    let correct = CORRECT.get_or_init(|| {
        Regex::new(r"(?i)correct\s+answer\s*:\s*\**\s*\(?([A-J])\)?").unwrap()
    });

    let mut lines = response.lines().peekable();
    let mut question = None;
    while let Some(line) = lines.next() {
        if let Some(rest) = line.trim_start().strip_prefix("Question:") {
            let mut q = rest.trim().to_string();
            while let Some(next) = lines.peek() {
                if option.is_match(next) {
                    break;
                }
                let next = lines.next().unwrap().trim();
                if !next.is_empty() {
                    q.push('\n');
                    q.push_str(next);
                }
            }
            question = Some(q);
            break;
        }
    }
    let question = question.filter(|q| !q.is_empty())?;

    let mut options = Vec::new();
    for line in lines {
        if correct.is_match(line) {
            break;
        }
        if let Some(caps) = option.captures(line) {
            let letter = caps[1].as_bytes()[0];
            if usize::from(letter - b'A') != options.len() {
                return None;
            }
            options.push(caps[2].to_string());
        }
    }
    if options.is_empty() {
        return None;
    }
    let letter = correct.captures(response)?[1].to_ascii_uppercase();
    let correct = usize::from(letter.as_bytes()[0] - b'A');
    Some(ParsedMcq {
        question,
        options,
        correct,
    })
}

/// Turn a reformulation reply into a variant carrying its validation verdict.
pub fn parse_reformulation_response(
    response: &str,
    target_level: DifficultyLevel,
    problem: &Problem,
) -> Result<Variant, ReformulateError> {
    let gold = &problem.gold_answer;
    match target_level {
        DifficultyLevel::OpenEnded => Err(ReformulateError::NoPromptForOpenEnded),
        DifficultyLevel::Mcq4 | DifficultyLevel::Mcq10 => {
            let Some(parsed) = parse_mcq_block(response) else {
                return Ok(parse_failure(problem, target_level));
            };
            let mut variant = Variant {
                problem_id: problem.id.clone(),
                level: target_level,
                prompt: mcq_prompt(&parsed.question, &parsed.options),
                options: Some(parsed.options),
                mask: None,
                validation: Validation::Valid,
                needs_review: false,
            };
            let options = variant.options.as_ref().unwrap();
            let letter_ok = options
                .get(parsed.correct)
                .is_some_and(|o| equivalent(o, gold));
            variant.validation = if letter_ok {
                validate_mcq(&variant, gold)
            } else {
                Validation::invalid("letter/gold mismatch")
            };
            Ok(variant)
        }
        DifficultyLevel::Cloze => {
            let Some(mask) = extract_boxed(response) else {
                return Ok(parse_failure(problem, target_level));
            };
            let mask = unescape_mask(&mask);
            let validation = validate_cloze(&mask, gold);
            Ok(Variant {
                problem_id: problem.id.clone(),
                level: target_level,
                prompt: cloze_prompt(&problem.question, &mask),
                mask: Some(mask),
                options: None,
                validation,
                needs_review: super::needs_review(gold),
            })
        }
    }
}
